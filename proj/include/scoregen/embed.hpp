// Text-embedding providers for text-conditioned generation: an HTTP adapter
// for a real sentence-embedding service, a file-backed lookup of precomputed
// vectors, and a deterministic hash-seeded stub for tests and offline runs.
#ifndef SCOREGEN_EMBED_HPP
#define SCOREGEN_EMBED_HPP

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregen/errors.hpp"
#include "scoregen/http_impl.hpp"
#include "scoregen/rng.hpp"

namespace scoregen {

inline constexpr int kDefaultTextDim = 384;

struct TextEmbedding {
    std::vector<double> values;
    std::string provider_id;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual TextEmbedding embed(const std::string& text) = 0;
    virtual std::string provider_id() const = 0;
    virtual int dim() const = 0;
};

/// Deterministic stand-in: the prompt hash seeds the RNG, which fills a
/// vector of normals that is then scaled to unit norm. Same prompt, same
/// vector — forever and on every platform.
class StubEmbedder final : public TextEmbedder {
public:
    explicit StubEmbedder(int dim = kDefaultTextDim) : dim_(dim) {
        if (dim < 1) throw OutOfRangeField("embedding_dim", dim);
    }

    TextEmbedding embed(const std::string& text) override {
        Rng rng(fnv1a64(text));
        std::vector<double> v(static_cast<std::size_t>(dim_));
        double sq = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            sq += x * x;
        }
        if (sq == 0.0) {
            v[0] = 1.0;
            sq = 1.0;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& x : v) x *= inv;
        return {std::move(v), provider_id()};
    }

    std::string provider_id() const override { return "stub"; }

    int dim() const override { return dim_; }

private:
    int dim_;
};

/// Lookup of precomputed embeddings keyed by fnv1a64_hex(prompt). File
/// format: {"dim": D, "embeddings": {"<hash>": [D numbers], ...}}.
class FileEmbedder final : public TextEmbedder {
public:
    explicit FileEmbedder(const std::string& path) : path_(path) {
        std::ifstream f(path);
        if (!f) throw EmbedderUnavailable("cannot open embedding file " + path);
        nlohmann::json j;
        try {
            f >> j;
            dim_ = j.at("dim").get<int>();
            table_ = j.at("embeddings");
        } catch (const nlohmann::json::exception& e) {
            throw EmbedderUnavailable("embedding file " + path + ": " + e.what());
        }
        if (dim_ < 1) throw OutOfRangeField("embedding_dim", dim_);
    }

    TextEmbedding embed(const std::string& text) override {
        const std::string key = fnv1a64_hex(text);
        auto it = table_.find(key);
        if (it == table_.end())
            throw EmbedderUnavailable("no precomputed embedding for prompt hash " + key);
        std::vector<double> v;
        try {
            v = it->get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw EmbedderUnavailable("embedding entry " + key + ": " + e.what());
        }
        if (v.size() != static_cast<std::size_t>(dim_))
            throw EmbeddingDimMismatch(v.size(), dim_);
        return {std::move(v), provider_id()};
    }

    std::string provider_id() const override { return "file:" + path_; }

    int dim() const override { return dim_; }

private:
    std::string path_;
    int dim_ = 0;
    nlohmann::json table_;
};

/// Adapter for a one-endpoint embedding service speaking
/// {"text": str} -> {"embedding": [D numbers]}.
class HttpEmbedder final : public TextEmbedder {
public:
    explicit HttpEmbedder(std::string url, int dim = kDefaultTextDim, int timeout_seconds = 30)
        : url_(std::move(url)), dim_(dim), timeout_seconds_(timeout_seconds) {
        if (dim < 1) throw OutOfRangeField("embedding_dim", dim);
    }

    TextEmbedding embed(const std::string& text) override {
        const nlohmann::json body{{"text", text}};
        const auto res = detail::http_post_json(url_, body.dump(), timeout_seconds_);
        if (!res.ok) throw EmbedderUnavailable(res.error);
        std::vector<double> v;
        try {
            v = nlohmann::json::parse(res.body).at("embedding").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw EmbedderUnavailable(std::string("embedding service reply: ") + e.what());
        }
        if (v.size() != static_cast<std::size_t>(dim_)) throw EmbeddingDimMismatch(v.size(), dim_);
        return {std::move(v), provider_id()};
    }

    std::string provider_id() const override { return "http:" + url_; }

    int dim() const override { return dim_; }

private:
    std::string url_;
    int dim_;
    int timeout_seconds_;
};

}  // namespace scoregen

#endif  // SCOREGEN_EMBED_HPP
