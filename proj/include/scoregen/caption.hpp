// Pseudo-caption generation: metadata is rendered into a prompt carrying
// five fixed in-context examples and posted to a completion endpoint, or
// rendered directly through a deterministic template so the whole pipeline
// also runs offline. Replies pass English/corruption filters and are capped
// at 32 whitespace tokens.
#ifndef SCOREGEN_CAPTION_HPP
#define SCOREGEN_CAPTION_HPP

#include <cctype>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregen/errors.hpp"
#include "scoregen/gm_names.hpp"
#include "scoregen/http_impl.hpp"
#include "scoregen/labels.hpp"
#include "scoregen/score.hpp"
#include "scoregen/tokenizer.hpp"

namespace scoregen {

inline constexpr int kCaptionMaxTokens = 32;

enum class CaptionBackend { llm, templated };

struct CaptionRecord {
    std::string source_id;
    std::string caption;  // empty only when rejected
    CaptionBackend mode = CaptionBackend::templated;
    std::optional<std::string> rejected_reason;  // non_english | corrupted | empty
};

/// "d minor", "b flat major", ... from the circle-of-fifths key signature.
inline std::string key_name(const KeySignature& k) {
    static const char* major[15] = {"c flat", "g flat", "d flat", "a flat", "e flat",
                                    "b flat", "f",      "c",      "g",      "d",
                                    "a",      "e",      "b",      "f sharp", "c sharp"};
    static const char* minor[15] = {"a flat", "e flat", "b flat", "f",      "c",
                                    "g",      "d",      "a",      "e",      "b",
                                    "f sharp", "c sharp", "g sharp", "d sharp", "a sharp"};
    if (k.fifths < -7 || k.fifths > 7) throw OutOfRangeField("fifths", k.fifths);
    const int i = k.fifths + 7;
    return k.mode == KeyMode::major ? std::string(major[i]) + " major"
                                    : std::string(minor[i]) + " minor";
}

namespace detail {

inline std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t count) {
    std::string out;
    for (std::size_t i = 0; i < count && i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

inline double ascii_ratio(const std::string& s) {
    if (s.empty()) return 1.0;
    std::size_t ascii = 0;
    for (char c : s) ascii += static_cast<unsigned char>(c) < 0x80;
    return static_cast<double>(ascii) / static_cast<double>(s.size());
}

/// True when some 4-token window occurs more than three times.
inline bool has_repeated_ngram(const std::vector<std::string>& tokens) {
    if (tokens.size() < 4) return false;
    std::unordered_map<std::string, int> counts;
    for (std::size_t i = 0; i + 4 <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t j = 1; j < 4; ++j) key += '\x1f' + tokens[i + j];
        if (++counts[key] > 3) return true;
    }
    return false;
}

inline std::string article_for(const std::string& phrase) {
    if (phrase.empty()) return "a";
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(phrase.front())));
    return (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') ? "an" : "a";
}

inline std::string list_phrase(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
        out += items[i];
    }
    return out;
}

inline std::string join_with(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

}  // namespace detail

/// The target's metadata as a one-line field list, fixed order, absent
/// fields omitted. Shared by the prompt builder and tests.
inline std::string caption_field_list(const Metadata& md, const TagSet& tags,
                                      std::optional<TimeSignature> ts = std::nullopt) {
    std::vector<std::string> fields;
    if (!tags.genres.empty()) fields.push_back("genre: " + detail::join_with(tags.genres, ", "));
    if (tags.composer) fields.push_back("composer: " + *tags.composer);
    if (tags.complexity)
        fields.push_back("complexity: " +
                         complexity_names()[static_cast<std::size_t>(*tags.complexity)]);
    if (!tags.instruments.empty()) {
        std::vector<std::string> names;
        for (int p : tags.instruments) names.push_back(std::string(gm_program_name(p)));
        fields.push_back("instruments: " + detail::join_with(names, ", "));
    }
    if (ts)
        fields.push_back("time signature: " + std::to_string(ts->numerator) + "/" +
                         std::to_string(ts->denominator));
    if (md.key) fields.push_back("key: " + key_name(*md.key));
    if (md.tempo_qpm)
        fields.push_back("tempo: " + std::to_string(static_cast<long>(std::llround(*md.tempo_qpm))));
    if (!md.free_tags.empty()) fields.push_back("tags: " + detail::join_with(md.free_tags, ", "));
    return detail::join_with(fields, "; ");
}

/// Deterministic completion prompt: instructions, five fixed example pairs,
/// then the target's field list with an open "Caption:" line.
inline std::string build_prompt(const Metadata& md, const TagSet& tags,
                                std::optional<TimeSignature> ts = std::nullopt) {
    static const char* kExamples =
        "You write one-sentence descriptions of musical pieces from their metadata.\n"
        "Each description is a single English sentence of at most 32 words.\n"
        "\n"
        "Fields: genre: jazz & blues; composer: duke ellington; complexity: intermediate; "
        "instruments: acoustic grand piano, acoustic bass\n"
        "Caption: a swinging intermediate jazz tune for piano and upright bass in the style of "
        "duke ellington\n"
        "\n"
        "Fields: genre: classical & traditional; composer: johann sebastian bach; complexity: "
        "advanced; instruments: harpsichord; key: d minor; tempo: 72\n"
        "Caption: an advanced harpsichord piece in d minor with flowing contrapuntal lines after "
        "johann sebastian bach\n"
        "\n"
        "Fields: genre: rock & metal; complexity: beginner; instruments: distortion guitar, "
        "electric bass (finger), drums; time signature: 4/4\n"
        "Caption: a beginner-friendly rock groove in 4/4 driven by distorted guitar, electric "
        "bass and drums\n"
        "\n"
        "Fields: genre: electronic & dance; instruments: synth bass 1, pad 2 (warm), synth drum; "
        "tempo: 128\n"
        "Caption: an energetic electronic dance track at 128 beats per minute built on warm pads "
        "and a punchy synth bass\n"
        "\n"
        "Fields: genre: folk & country; composer: traditional; instruments: acoustic guitar "
        "(steel), harmonica; tags: campfire, ballad\n"
        "Caption: a gentle traditional folk ballad for steel-string guitar and harmonica with a "
        "campfire feel\n"
        "\n";
    return std::string(kExamples) + "Fields: " + caption_field_list(md, tags, ts) + "\nCaption:";
}

/// Offline caption: "a {complexity} {genre} piece for {instruments} in the
/// style of {composer}", absent fields skipped, article agreeing with the
/// first following word.
inline std::string template_caption(const TagSet& tags) {
    std::string body;
    if (tags.complexity)
        body += complexity_names()[static_cast<std::size_t>(*tags.complexity)] + " ";
    if (!tags.genres.empty()) body += detail::list_phrase(tags.genres) + " ";
    body += "piece";
    std::string out = detail::article_for(body) + " " + body;
    if (!tags.instruments.empty()) {
        std::vector<std::string> names;
        for (int p : tags.instruments) names.push_back(std::string(gm_program_name(p)));
        out += " for " + detail::list_phrase(names);
    }
    if (tags.composer) out += " in the style of " + *tags.composer;
    return out;
}

/// Abstract completion endpoint so tests can substitute a local server or a
/// canned reply for the real service.
class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    /// Returns the raw completion text; throws BackendUnavailable on failure.
    virtual std::string complete(const std::string& prompt, int max_tokens) = 0;
};

/// POSTs {"prompt": str, "max_tokens": int} and expects {"text": str}.
class HttpCompletionClient final : public CompletionClient {
public:
    explicit HttpCompletionClient(std::string url, std::string api_key = "",
                                  int timeout_seconds = 60)
        : url_(std::move(url)), api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {}

    std::string complete(const std::string& prompt, int max_tokens) override {
        const nlohmann::json body{{"prompt", prompt}, {"max_tokens", max_tokens}};
        const auto res = detail::http_post_json(url_, body.dump(), timeout_seconds_, api_key_);
        if (!res.ok) throw BackendUnavailable(res.error);
        try {
            return nlohmann::json::parse(res.body).at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendUnavailable(std::string("completion reply: ") + e.what());
        }
    }

private:
    std::string url_;
    std::string api_key_;
    int timeout_seconds_;
};

/// Filters a raw completion and truncates it to the 32-token cap. Rejection
/// produces a record with a reason, never an error.
inline CaptionRecord filter_caption(std::string text, CaptionBackend mode,
                                    const std::string& source_id) {
    CaptionRecord rec;
    rec.source_id = source_id;
    rec.mode = mode;
    const std::vector<std::string> tokens = detail::whitespace_tokens(text);
    if (tokens.empty()) {
        rec.rejected_reason = "empty";
        return rec;
    }
    if (detail::ascii_ratio(text) < 0.9) {
        rec.rejected_reason = "non_english";
        return rec;
    }
    if (detail::has_repeated_ngram(tokens)) {
        rec.rejected_reason = "corrupted";
        return rec;
    }
    rec.caption = detail::join_tokens(tokens, kCaptionMaxTokens);
    return rec;
}

/// End-to-end caption for one entry. The llm backend requires a client;
/// the template backend is total and deterministic.
inline CaptionRecord caption(const Metadata& md, const TagSet& tags, CaptionBackend backend,
                             const std::string& source_id, CompletionClient* client = nullptr,
                             std::optional<TimeSignature> ts = std::nullopt) {
    if (backend == CaptionBackend::templated)
        return filter_caption(template_caption(tags), backend, source_id);
    if (!client) throw BackendUnavailable("no completion endpoint configured");
    const std::string text = client->complete(build_prompt(md, tags, ts), 48);
    return filter_caption(text, backend, source_id);
}

}  // namespace scoregen

#endif  // SCOREGEN_CAPTION_HPP
