// scoregen — command-line front end for the score modeling toolkit.
//
// Conventions shared by every subcommand:
//   * exit 0 on success, 1 on domain errors (bad data, failed backends),
//     2 on usage errors (unknown/missing/invalid flags)
//   * with --json, errors go to stderr as {"error":{"code","message"}}
//   * every run that produces artifacts writes a run manifest next to them
//     (<dir>/run.json for directory outputs, <file>.run.json otherwise)
//     recording the subcommand, effective config, seed, inputs/outputs,
//     tool version and vocabulary hash, so reruns can be verified
//   * existing outputs are never overwritten unless --force is given
//   * --config FILE supplies defaults from JSON (top-level keys plus an
//     optional per-subcommand section); explicit flags win over the file
//   * environment variables are used only for external service credentials:
//     SCOREGEN_EMBED_URL, SCOREGEN_COMPLETION_URL, SCOREGEN_COMPLETION_KEY

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scoregen/caption.hpp"
#include "scoregen/embed.hpp"
#include "scoregen/errors.hpp"
#include "scoregen/generate.hpp"
#include "scoregen/labels.hpp"
#include "scoregen/metrics.hpp"
#include "scoregen/midi.hpp"
#include "scoregen/nn.hpp"
#include "scoregen/pipeline.hpp"
#include "scoregen/run_manifest.hpp"
#include "scoregen/sampling.hpp"
#include "scoregen/score.hpp"
#include "scoregen/score_json.hpp"
#include "scoregen/tagger.hpp"
#include "scoregen/tokenizer.hpp"
#include "scoregen/version.hpp"
#include "scoregen/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scoregen;

namespace {

// ---------------------------------------------------------------------------
// errors and reporting

// Flag-level problems: missing/invalid/conflicting options. Exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed data files (JSON that parses but has the wrong shape, etc).
struct BadInput : Error {
    explicit BadInput(const std::string& why) : Error("bad_input", why) {}
};

struct Ctx {
    bool json = false;
    bool force = false;
    int jobs = 1;
    std::string config_path;
};

void print_error(bool as_json, const std::string& code, const std::string& message) {
    if (as_json) {
        const json err{{"error", {{"code", code}, {"message", message}}}};
        std::cerr << err.dump() << "\n";
    } else {
        std::cerr << "scoregen: " << message << "\n";
    }
}

void require_flag(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing ") + flag);
}

int parse_int_flag(const std::string& s, const char* flag) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw UsageError(std::string(flag) + ": expected an integer, got '" + s + "'");
    }
}

// ---------------------------------------------------------------------------
// file helpers

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> slurp_bytes(const fs::path& p) {
    const std::string s = slurp(p);
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

void spit(const fs::path& p, const std::string& data) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + p.string());
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw IoError("write failed: " + p.string());
}

void spit_bytes(const fs::path& p, const std::vector<std::uint8_t>& data) {
    spit(p, std::string(data.begin(), data.end()));
}

void ensure_writable(const fs::path& p, bool force) {
    if (!force && fs::exists(p))
        throw IoError("refusing to overwrite " + p.string() + " (pass --force)");
}

json load_json_file(const fs::path& p) {
    try {
        return json::parse(slurp(p));
    } catch (const json::exception& e) {
        throw BadInput(p.string() + ": " + e.what());
    }
}

struct JsonlLine {
    std::size_t line_no = 0;
    json value;
};

std::vector<JsonlLine> load_jsonl(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open " + p.string());
    std::vector<JsonlLine> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(f, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            out.push_back({no, json::parse(line)});
        } catch (const json::exception& e) {
            throw BadInput(p.string() + ":" + std::to_string(no) + ": " + e.what());
        }
    }
    return out;
}

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

bool is_midi_ext(const fs::path& p) {
    const std::string e = lower_ext(p);
    return e == ".mid" || e == ".midi";
}

bool is_run_sidecar(const fs::path& p) {
    const std::string name = p.filename().string();
    if (name == "run.json" || name == "manifest.jsonl") return true;
    const std::string tail = ".run.json";
    return name.size() > tail.size() && name.compare(name.size() - tail.size(), tail.size(), tail) == 0;
}

// ---------------------------------------------------------------------------
// manifest + score loading

struct LoadedManifest {
    std::vector<ManifestEntry> entries;
    fs::path dir;
};

LoadedManifest load_manifest(const fs::path& p) {
    LoadedManifest m;
    m.dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    for (const auto& row : load_jsonl(p)) {
        try {
            m.entries.push_back(manifest_entry_from_json(row.value));
        } catch (const json::exception& e) {
            throw BadInput(p.string() + ":" + std::to_string(row.line_no) + ": " + e.what());
        }
    }
    return m;
}

fs::path resolve_score_path(const fs::path& manifest_dir, const std::string& score_path) {
    fs::path p(score_path);
    if (p.is_absolute()) return p;
    const fs::path joined = manifest_dir / p;
    if (fs::exists(joined)) return joined;
    if (fs::exists(p)) return p;
    return joined;
}

// Rewrites a score path so it stays resolvable from a manifest written at
// out_dir. Same directory -> unchanged bytes; otherwise relative, falling
// back to absolute when no relative path exists.
std::string rebase_score_path(const std::string& score_path, const fs::path& in_dir,
                              const fs::path& out_dir) {
    if (score_path.empty()) return score_path;
    std::error_code ec;
    const fs::path resolved = resolve_score_path(in_dir, score_path);
    const fs::path abs_resolved = fs::absolute(resolved, ec);
    if (ec) return resolved.generic_string();
    const fs::path abs_out = fs::absolute(out_dir, ec);
    if (ec) return abs_resolved.generic_string();
    const fs::path rel = fs::relative(abs_resolved, abs_out, ec);
    if (ec || rel.empty()) return abs_resolved.generic_string();
    return rel.generic_string();
}

Score load_score_file(const fs::path& p, MidiImportReport* report = nullptr) {
    if (is_midi_ext(p)) {
        const MidiParseResult res = parse_midi(slurp_bytes(p));
        if (report) *report = res.report;
        return res.score;
    }
    return score_from_json(load_json_file(p), report);
}

std::string score_json_text(const Score& s) { return score_to_json(s).dump(2) + "\n"; }

std::string seq_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seq-%06zu", index);
    return buf;
}

// ---------------------------------------------------------------------------
// parallel map

template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t k = std::min(static_cast<std::size_t>(jobs), n);
    pool.reserve(k);
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// vocabulary + embedder + flag value parsing

VocabSpec load_vocab_or_default(const std::string& path) {
    if (path.empty()) return build_vocab();
    return vocab_from_json(load_json_file(path));
}

std::unique_ptr<TextEmbedder> make_embedder(const std::string& spec, int dim) {
    if (spec == "stub") return std::make_unique<StubEmbedder>(dim);
    if (spec.rfind("stub:", 0) == 0) {
        const int d = parse_int_flag(spec.substr(5), "--embedder");
        if (d <= 0) throw UsageError("--embedder: stub dimension must be positive");
        return std::make_unique<StubEmbedder>(d);
    }
    if (spec.rfind("file:", 0) == 0) return std::make_unique<FileEmbedder>(spec.substr(5));
    if (spec == "http") {
        const char* url = std::getenv("SCOREGEN_EMBED_URL");
        if (!url || !*url)
            throw UsageError("--embedder http requires SCOREGEN_EMBED_URL to be set");
        return std::make_unique<HttpEmbedder>(url, dim);
    }
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0)
        return std::make_unique<HttpEmbedder>(spec, dim);
    throw UsageError("--embedder: unknown embedder '" + spec +
                     "' (expected stub, stub:<dim>, file:<path>, http, or an http(s) URL)");
}

Complexity parse_complexity_flag(const std::string& s) {
    const auto names = complexity_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (s == names[i]) return static_cast<Complexity>(i);
    throw UsageError("--complexity: expected one of beginner, intermediate, advanced; got '" + s +
                     "'");
}

std::vector<int> parse_instruments_flag(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        item = item.substr(b, e - b + 1);
        if (item == "drums") {
            out.push_back(kDrumProgram);
            continue;
        }
        const int v = parse_int_flag(item, "--instruments");
        if (v < 0 || v > kDrumProgram)
            throw UsageError("--instruments: program " + item + " out of range 0..128");
        out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Metadata metadata_from_tags(const TagSet& tags) {
    Metadata md;
    md.genre_tags = tags.genres;
    md.genre_source = tags.genres.empty() ? GenreSource::absent : GenreSource::user;
    md.composer = tags.composer;
    md.complexity = tags.complexity;
    return md;
}

fs::path numbered_path(const fs::path& base, int index, int total) {
    if (total <= 1) return base;
    const fs::path dir = base.parent_path();
    const std::string name = base.stem().string() + "-" + std::to_string(index) +
                             base.extension().string();
    return dir.empty() ? fs::path(name) : dir / name;
}

// Selects manifest entries by id from one split of a splits file ("all"
// walks train, valid, test in that order).
std::vector<const ManifestEntry*> select_split(const LoadedManifest& manifest,
                                               const std::string& splits_path,
                                               const std::string& split, std::size_t split_count) {
    std::vector<const ManifestEntry*> out;
    if (splits_path.empty()) {
        if (split_count > 0) throw UsageError("--split requires --splits");
        out.reserve(manifest.entries.size());
        for (const auto& e : manifest.entries) out.push_back(&e);
        return out;
    }
    if (split != "train" && split != "valid" && split != "test" && split != "all")
        throw UsageError("--split: expected train, valid, test or all; got '" + split + "'");
    const json j = load_json_file(splits_path);
    std::unordered_map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : manifest.entries) by_id[e.id] = &e;
    std::vector<std::string> names;
    if (split == "all")
        names = {"train", "valid", "test"};
    else
        names = {split};
    for (const auto& name : names) {
        if (!j.contains(name)) throw BadInput(splits_path + ": missing split '" + name + "'");
        for (const auto& id : j.at(name)) {
            const std::string s = id.get<std::string>();
            const auto it = by_id.find(s);
            if (it == by_id.end()) throw BadInput("split id not in manifest: " + s);
            out.push_back(it->second);
        }
    }
    return out;
}

void write_manifest_rows(const fs::path& path, const std::vector<ManifestEntry>& entries) {
    std::string text;
    for (const auto& e : entries) text += manifest_entry_to_json(e).dump() + "\n";
    spit(path, text);
}

// ---------------------------------------------------------------------------
// option structs

struct ModelOpts {
    int d_model = 256;
    int layers = 4;
    int heads = 4;
    int d_ff = 1024;
    int max_seq_len = 1024;
    double dropout = 0.0;
    bool linear_attention = false;
};

struct TrainOpts {
    int steps = 1000;
    int batch_size = 8;
    double lr = 3e-4;
    int warmup = 100;
    double clip = 1.0;
    std::uint64_t seed = 0;
};

struct IngestOpts {
    std::vector<std::string> in;
    std::string out;
    std::string drop_log;
};

struct NormalizeOpts {
    std::string in, out, genre_table, composer_table, emit_tables;
    bool recompute_retained = false;
    long retain_threshold = 100;
};

struct TokenizeOpts {
    std::string in, out, vocab, vocab_composers;
    bool truncate_overlong = false;
};

struct DetokenizeOpts {
    std::string in, out, vocab;
    bool strict = false;
};

struct RenderOpts {
    std::string in, out;
    int tpq = 480;
};

struct SplitsOpts {
    std::string in, out;
    std::uint64_t seed = 0;
};

struct TrainTaggerOpts {
    std::string in, out, vocab, splits, resume, loss_curve;
    std::string split = "train";
    ModelOpts model;
    TrainOpts train;
};

struct TagOpts {
    std::string in, out, model, vocab, thresholds;
};

struct TuneOpts {
    std::string in, out, model, vocab, splits;
    std::string split = "valid";
};

struct TrainGenOpts {
    std::string in, captions, vocab, out, resume, loss_curve;
    std::string mode = "tags";
    std::string embedder = "stub";
    int embed_dim = kDefaultTextDim;
    bool truncate_overlong = false;
    ModelOpts model;
    TrainOpts train;
};

struct GenerateOpts {
    std::string model, vocab, composer, complexity, instruments, prompt, out, emit_tokens;
    std::string mode = "tags";
    std::string embedder = "stub";
    std::vector<std::string> genres;
    double temperature = 1.0;
    double top_p = 0.95;
    int max_tokens = 1024;
    int num = 1;
    int tpq = 480;
    std::uint64_t seed = 0;
};

struct CaptionOpts {
    std::string in, out;
    std::string backend = "template";
};

struct EvaluateOpts {
    std::string in, out;
};

json model_opts_json(const ModelOpts& m) {
    return json{{"d_model", m.d_model},
                {"layers", m.layers},
                {"heads", m.heads},
                {"d_ff", m.d_ff},
                {"max_seq_len", m.max_seq_len},
                {"dropout", m.dropout},
                {"linear_attention", m.linear_attention}};
}

json train_opts_json(const TrainOpts& t) {
    return json{{"steps", t.steps},       {"batch_size", t.batch_size}, {"lr", t.lr},
                {"warmup", t.warmup},     {"clip", t.clip},             {"seed", t.seed}};
}

ModelConfig backbone_config(const ModelOpts& m, int vocab_size, bool causal, int d_cond,
                            int n_classes) {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.d_model = m.d_model;
    cfg.n_layers = m.layers;
    cfg.n_heads = m.heads;
    cfg.d_ff = m.d_ff;
    cfg.max_seq_len = m.max_seq_len;
    cfg.dropout_rate = m.dropout;
    cfg.causal = causal;
    cfg.d_cond = d_cond;
    cfg.n_classes = n_classes;
    cfg.linear_attention = m.linear_attention;
    cfg.validate();
    return cfg;
}

TrainConfig train_config(const TrainOpts& t, Objective objective) {
    TrainConfig tc;
    tc.steps = t.steps;
    tc.batch_size = t.batch_size;
    tc.lr = t.lr;
    tc.warmup_steps = t.warmup;
    tc.clip_norm = t.clip;
    tc.seed = t.seed;
    tc.objective = objective;
    return tc;
}

void write_loss_curve(const fs::path& path, const std::vector<double>& curve) {
    std::string text;
    for (std::size_t i = 0; i < curve.size(); ++i)
        text += json{{"step", i + 1}, {"loss", curve[i]}}.dump() + "\n";
    spit(path, text);
}

// ---------------------------------------------------------------------------
// subcommand: ingest

void run_ingest(const Ctx& ctx, const IngestOpts& o) {
    if (o.in.empty()) throw UsageError("missing --in");
    require_flag(o.out, "--out");

    std::vector<fs::path> files;
    for (const auto& arg : o.in) {
        const fs::path p(arg);
        if (fs::is_directory(p)) {
            for (const auto& it : fs::recursive_directory_iterator(p))
                if (it.is_regular_file() && is_midi_ext(it.path())) files.push_back(it.path());
        } else if (fs::exists(p)) {
            files.push_back(p);
        } else {
            throw IoError("no such input: " + p.string());
        }
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

    std::unordered_set<std::string> seen;
    std::vector<std::string> ids(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        ids[i] = files[i].stem().string();
        if (!seen.insert(ids[i]).second) throw DuplicateId(ids[i]);
    }

    const fs::path out_dir(o.out);
    const fs::path manifest_path = out_dir / "manifest.jsonl";
    ensure_writable(manifest_path, ctx.force);
    if (!o.drop_log.empty()) ensure_writable(o.drop_log, ctx.force);

    struct Item {
        bool ok = false;
        Score score;
        MidiImportReport report;
        std::string drop_reason;
    };
    std::vector<Item> items(files.size());
    parallel_for(files.size(), ctx.jobs, [&](std::size_t i) {
        try {
            const MidiParseResult res = parse_midi(slurp_bytes(files[i]));
            items[i].score = res.score;
            items[i].report = res.report;
            const DropReason reason = filter_corpus(res.score, res.report);
            if (reason == DropReason::kept)
                items[i].ok = true;
            else
                items[i].drop_reason = to_string(reason);
        } catch (const MalformedMidi& e) {
            items[i].drop_reason = e.code();
        } catch (const UnsupportedFormat& e) {
            items[i].drop_reason = e.code();
        }
    });

    std::vector<ManifestEntry> entries;
    std::string drop_text;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!items[i].ok) {
            ++dropped;
            drop_text += json{{"id", ids[i]},
                              {"path", files[i].generic_string()},
                              {"reason", items[i].drop_reason}}
                             .dump() +
                         "\n";
            continue;
        }
        const std::string rel = "scores/" + ids[i] + ".json";
        const fs::path score_path = out_dir / rel;
        ensure_writable(score_path, ctx.force);
        spit(score_path, score_json_text(items[i].score));
        entries.push_back({ids[i], rel, items[i].score.metadata});
    }
    write_manifest_rows(manifest_path, entries);
    if (!o.drop_log.empty()) spit(o.drop_log, drop_text);

    RunManifest m;
    m.subcommand = "ingest";
    m.config = json{{"drop_log", o.drop_log}, {"jobs", ctx.jobs}};
    m.inputs = o.in;
    m.outputs = {o.out};
    if (!o.drop_log.empty()) m.outputs.push_back(o.drop_log);
    write_run_manifest(m, run_manifest_path_for(o.out, true));

    std::cerr << "ingest: " << files.size() << " files, " << entries.size() << " kept, "
              << dropped << " dropped\n";
}

// ---------------------------------------------------------------------------
// subcommand: normalize

void run_normalize(const Ctx& ctx, const NormalizeOpts& o) {
    require_flag(o.in, "--in");
    if (o.out.empty() && o.emit_tables.empty()) throw UsageError("missing --out");

    GenreMergeTable genre_table = o.genre_table.empty()
                                      ? default_genre_table()
                                      : genre_table_from_json(load_json_file(o.genre_table));
    ComposerTable composer_table =
        o.composer_table.empty() ? default_composer_table()
                                 : composer_table_from_json(load_json_file(o.composer_table));

    const LoadedManifest manifest = load_manifest(o.in);

    if (o.recompute_retained) {
        std::unordered_map<std::string, long> counts;
        for (const auto& e : manifest.entries) {
            if (!e.metadata.composer) continue;
            const std::string folded = fold_label(*e.metadata.composer);
            if (!looks_like_human_name(folded)) continue;
            const auto it = composer_table.aliases.find(folded);
            ++counts[it == composer_table.aliases.end() ? folded : it->second];
        }
        composer_table.retained = retain_composers(counts, o.retain_threshold);
    }

    std::size_t composers_dropped = 0, genres_emptied = 0;
    std::vector<ManifestEntry> out_entries;
    if (!o.out.empty()) {
        const fs::path out_path(o.out);
        ensure_writable(out_path, ctx.force);
        const fs::path out_dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
        out_entries.reserve(manifest.entries.size());
        for (const auto& e : manifest.entries) {
            ManifestEntry n = e;
            const bool had_genres = !n.metadata.genre_tags.empty();
            n.metadata.genre_tags = merge_genres(n.metadata.genre_tags, genre_table);
            if (n.metadata.genre_tags.empty()) {
                n.metadata.genre_source = GenreSource::absent;
                if (had_genres) ++genres_emptied;
            }
            if (n.metadata.composer) {
                const auto canonical = normalize_composer(*n.metadata.composer, composer_table);
                if (!canonical) ++composers_dropped;
                n.metadata.composer = canonical;
            }
            n.score_path = rebase_score_path(e.score_path, manifest.dir, out_dir);
            out_entries.push_back(std::move(n));
        }
        write_manifest_rows(out_path, out_entries);
    }

    std::vector<std::string> outputs;
    if (!o.out.empty()) outputs.push_back(o.out);
    if (!o.emit_tables.empty()) {
        const fs::path dir(o.emit_tables);
        const fs::path gpath = dir / "genre_table.json";
        const fs::path cpath = dir / "composer_table.json";
        ensure_writable(gpath, ctx.force);
        ensure_writable(cpath, ctx.force);
        spit(gpath, genre_table_to_json(genre_table).dump(2) + "\n");
        spit(cpath, composer_table_to_json(composer_table).dump(2) + "\n");
        outputs.push_back(gpath.generic_string());
        outputs.push_back(cpath.generic_string());
    }

    RunManifest m;
    m.subcommand = "normalize";
    m.config = json{{"genre_table", o.genre_table},
                    {"composer_table", o.composer_table},
                    {"recompute_retained", o.recompute_retained},
                    {"retain_threshold", o.retain_threshold},
                    {"emit_tables", o.emit_tables}};
    m.inputs = {o.in};
    m.outputs = outputs;
    const std::string primary = o.out.empty() ? o.emit_tables : o.out;
    write_run_manifest(m, run_manifest_path_for(primary, o.out.empty()));

    if (!o.out.empty())
        std::cerr << "normalize: " << out_entries.size() << " entries, " << composers_dropped
                  << " composers dropped, " << genres_emptied << " genre sets emptied\n";
    else
        std::cerr << "normalize: emitted tables only\n";
}

// ---------------------------------------------------------------------------
// subcommand: tokenize

void run_tokenize(const Ctx& ctx, const TokenizeOpts& o) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");

    bool vocab_written = false;
    VocabSpec v;
    if (!o.vocab.empty() && fs::exists(o.vocab)) {
        if (!o.vocab_composers.empty())
            throw UsageError("--vocab-composers conflicts with an existing vocabulary file");
        v = vocab_from_json(load_json_file(o.vocab));
    } else {
        std::vector<std::string> composers = default_composers();
        if (!o.vocab_composers.empty()) {
            composers = composer_table_from_json(load_json_file(o.vocab_composers)).retained;
            std::sort(composers.begin(), composers.end());
        }
        v = build_vocab(default_genre_classes(), composers, complexity_names());
        if (!o.vocab.empty()) {
            spit(o.vocab, vocab_to_json(v).dump(2) + "\n");
            vocab_written = true;
        }
    }

    const LoadedManifest manifest = load_manifest(o.in);
    for (const auto& e : manifest.entries)
        if (e.score_path.empty()) throw BadInput("entry " + e.id + " has no score_path");

    ensure_writable(o.out, ctx.force);

    std::vector<TokenSequence> sequences(manifest.entries.size());
    std::vector<int> truncated(manifest.entries.size(), 0);
    parallel_for(manifest.entries.size(), ctx.jobs, [&](std::size_t i) {
        const auto& e = manifest.entries[i];
        const Score score = load_score_file(resolve_score_path(manifest.dir, e.score_path));
        const TagSet tags = tagset_from(e.metadata, score);
        EncodeOptions opts;
        opts.truncate_overlong = o.truncate_overlong;
        sequences[i] = encode(tags, score, v, opts, &truncated[i]);
    });

    std::string text;
    std::size_t total_tokens = 0;
    long truncated_notes = 0;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        text += json(sequences[i]).dump() + "\n";
        total_tokens += sequences[i].size();
        truncated_notes += truncated[i];
    }
    spit(o.out, text);

    RunManifest m;
    m.subcommand = "tokenize";
    m.config = json{{"vocab", o.vocab},
                    {"vocab_composers", o.vocab_composers},
                    {"truncate_overlong", o.truncate_overlong},
                    {"jobs", ctx.jobs}};
    m.inputs = {o.in};
    m.outputs = {o.out};
    if (vocab_written) m.outputs.push_back(o.vocab);
    m.vocab_hash = v.version;
    write_run_manifest(m, run_manifest_path_for(o.out, false));

    std::cerr << "tokenize: " << sequences.size() << " sequences, " << total_tokens << " tokens";
    if (o.truncate_overlong) std::cerr << ", " << truncated_notes << " notes truncated";
    std::cerr << "\n";
}

// ---------------------------------------------------------------------------
// subcommand: detokenize

void run_detokenize(const Ctx& ctx, const DetokenizeOpts& o) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");
    const VocabSpec v = load_vocab_or_default(o.vocab);

    const auto rows = load_jsonl(o.in);
    std::vector<TokenSequence> sequences;
    sequences.reserve(rows.size());
    for (const auto& row : rows) {
        if (!row.value.is_array())
            throw BadInput(o.in + ":" + std::to_string(row.line_no) +
                           ": expected a JSON array of token ids");
        try {
            sequences.push_back(row.value.get<TokenSequence>());
        } catch (const json::exception& e) {
            throw BadInput(o.in + ":" + std::to_string(row.line_no) + ": " + e.what());
        }
    }

    const fs::path out_dir(o.out);
    const fs::path manifest_path = out_dir / "manifest.jsonl";
    ensure_writable(manifest_path, ctx.force);

    std::vector<ManifestEntry> entries(sequences.size());
    std::vector<Score> scores(sequences.size());
    parallel_for(sequences.size(), ctx.jobs, [&](std::size_t i) {
        const DecodeResult res = o.strict ? decode_strict(sequences[i], v) : decode(sequences[i], v);
        Score score = res.score;
        score.metadata = metadata_from_tags(res.tags);
        scores[i] = std::move(score);
        entries[i] = {seq_id(i), seq_id(i) + ".json", scores[i].metadata};
    });
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const fs::path score_path = out_dir / entries[i].score_path;
        ensure_writable(score_path, ctx.force);
        spit(score_path, score_json_text(scores[i]));
    }
    write_manifest_rows(manifest_path, entries);

    RunManifest m;
    m.subcommand = "detokenize";
    m.config = json{{"vocab", o.vocab}, {"strict", o.strict}, {"jobs", ctx.jobs}};
    m.inputs = {o.in};
    m.outputs = {o.out};
    m.vocab_hash = v.version;
    write_run_manifest(m, run_manifest_path_for(o.out, true));

    std::cerr << "detokenize: " << sequences.size() << " sequences\n";
}

// ---------------------------------------------------------------------------
// subcommand: render

void run_render(const Ctx& ctx, const RenderOpts& o) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");

    const fs::path in(o.in);
    std::vector<std::string> outputs;
    if (fs::is_directory(in)) {
        std::vector<fs::path> files;
        for (const auto& it : fs::directory_iterator(in)) {
            if (!it.is_regular_file() || is_run_sidecar(it.path())) continue;
            if (lower_ext(it.path()) == ".json") files.push_back(it.path());
        }
        std::sort(files.begin(), files.end());
        const fs::path out_dir(o.out);
        std::vector<std::vector<std::uint8_t>> rendered(files.size());
        parallel_for(files.size(), ctx.jobs, [&](std::size_t i) {
            rendered[i] = write_midi(load_score_file(files[i]), o.tpq);
        });
        for (std::size_t i = 0; i < files.size(); ++i) {
            const fs::path out_path = out_dir / (files[i].stem().string() + ".mid");
            ensure_writable(out_path, ctx.force);
            spit_bytes(out_path, rendered[i]);
        }
        outputs.push_back(o.out);
        RunManifest m;
        m.subcommand = "render";
        m.config = json{{"tpq", o.tpq}, {"jobs", ctx.jobs}};
        m.inputs = {o.in};
        m.outputs = outputs;
        write_run_manifest(m, run_manifest_path_for(o.out, true));
        std::cerr << "render: " << files.size() << " files\n";
    } else {
        ensure_writable(o.out, ctx.force);
        spit_bytes(o.out, write_midi(load_score_file(in), o.tpq));
        RunManifest m;
        m.subcommand = "render";
        m.config = json{{"tpq", o.tpq}};
        m.inputs = {o.in};
        m.outputs = {o.out};
        write_run_manifest(m, run_manifest_path_for(o.out, false));
        std::cerr << "render: wrote " << o.out << "\n";
    }
}

// ---------------------------------------------------------------------------
// subcommand: splits

void run_splits(const Ctx& ctx, const SplitsOpts& o) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");
    const LoadedManifest manifest = load_manifest(o.in);
    std::vector<std::string> ids;
    ids.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) ids.push_back(e.id);
    const Splits s = make_splits(ids, o.seed);

    ensure_writable(o.out, ctx.force);
    const json out{{"seed", o.seed}, {"train", s.train}, {"valid", s.valid}, {"test", s.test}};
    spit(o.out, out.dump(2) + "\n");

    RunManifest m;
    m.subcommand = "splits";
    m.seed = o.seed;
    m.inputs = {o.in};
    m.outputs = {o.out};
    write_run_manifest(m, run_manifest_path_for(o.out, false));

    std::cerr << "splits: " << s.train.size() << " train, " << s.valid.size() << " valid, "
              << s.test.size() << " test\n";
}

// ---------------------------------------------------------------------------
// subcommand: train-tagger

void run_train_tagger(const Ctx& ctx, const TrainTaggerOpts& o, const CLI::App* sub) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");
    const VocabSpec v = load_vocab_or_default(o.vocab);
    const LoadedManifest manifest = load_manifest(o.in);
    const auto selected = select_split(manifest, o.splits, o.split, sub->count("--split"));

    ensure_writable(o.out, ctx.force);
    if (!o.loss_curve.empty()) ensure_writable(o.loss_curve, ctx.force);

    std::size_t skipped_unlabeled = 0, skipped_missing = 0;
    std::vector<const ManifestEntry*> usable;
    for (const ManifestEntry* e : selected) {
        if (e->metadata.genre_tags.empty()) {
            ++skipped_unlabeled;
        } else if (e->score_path.empty()) {
            ++skipped_missing;
        } else {
            usable.push_back(e);
        }
    }
    std::vector<Sequence> data(usable.size());
    parallel_for(usable.size(), ctx.jobs, [&](std::size_t i) {
        const Score score = load_score_file(resolve_score_path(manifest.dir, usable[i]->score_path));
        data[i] = tagger_training_sequence(score, usable[i]->metadata.genre_tags, v);
    });

    AdamState<float> opt;
    std::optional<Model<float>> model;
    if (!o.resume.empty()) {
        auto loaded = load_checkpoint<float>(o.resume, v.version);
        check_tagger_model(loaded.model, v);
        model.emplace(std::move(loaded.model));
        if (loaded.has_optimizer) opt = std::move(loaded.opt);
    } else {
        const ModelConfig cfg = backbone_config(o.model, v.vocab_size, /*causal=*/false,
                                                /*d_cond=*/0, static_cast<int>(v.genres.size()));
        model.emplace(cfg, o.train.seed);
    }

    const TrainConfig tc = train_config(o.train, Objective::multilabel_bce);
    const std::vector<double> curve = train(*model, data, tc, &opt);
    save_checkpoint(o.out, *model, v.version, o.train.seed, &opt);
    if (!o.loss_curve.empty()) write_loss_curve(o.loss_curve, curve);

    RunManifest m;
    m.subcommand = "train-tagger";
    m.config = json{{"model", model_opts_json(o.model)},
                    {"train", train_opts_json(o.train)},
                    {"splits", o.splits},
                    {"split", o.split},
                    {"resume", o.resume}};
    m.seed = o.train.seed;
    m.inputs = {o.in};
    m.outputs = {o.out};
    if (!o.loss_curve.empty()) m.outputs.push_back(o.loss_curve);
    m.vocab_hash = v.version;
    write_run_manifest(m, run_manifest_path_for(o.out, false));

    std::cerr << "train-tagger: " << data.size() << " examples (" << skipped_unlabeled
              << " unlabeled skipped, " << skipped_missing << " without scores), " << tc.steps
              << " steps, final loss " << (curve.empty() ? 0.0 : curve.back()) << "\n";
}

// ---------------------------------------------------------------------------
// subcommand: tag

ThresholdSet load_thresholds(const std::string& path, std::size_t n_classes) {
    if (path.empty()) return default_thresholds(n_classes);
    const json j = load_json_file(path);
    ThresholdSet th;
    try {
        th.thresholds = j.at("thresholds").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw BadInput(path + ": " + e.what());
    }
    th.defaulted.assign(th.thresholds.size(), 0);
    return th;
}

void run_tag(const Ctx& ctx, const TagOpts& o) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");
    require_flag(o.model, "--model");
    const VocabSpec v = load_vocab_or_default(o.vocab);
    auto loaded = load_checkpoint<float>(o.model, v.version);
    check_tagger_model(loaded.model, v);
    const ThresholdSet th = load_thresholds(o.thresholds, v.genres.size());

    const LoadedManifest manifest = load_manifest(o.in);
    const fs::path out_path(o.out);
    ensure_writable(out_path, ctx.force);
    const fs::path out_dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");

    std::vector<ManifestEntry> entries(manifest.entries.size());
    std::atomic<std::size_t> tagged{0}, already{0}, skipped{0};
    parallel_for(manifest.entries.size(), ctx.jobs, [&](std::size_t i) {
        ManifestEntry e = manifest.entries[i];
        if (!e.metadata.genre_tags.empty()) {
            ++already;
        } else if (e.score_path.empty()) {
            ++skipped;
        } else {
            const Score score = load_score_file(resolve_score_path(manifest.dir, e.score_path));
            const TaggerOutput out = predict(loaded.model, th, score, v);
            std::vector<std::string> names;
            for (const int idx : out.predicted) names.push_back(v.genres[static_cast<std::size_t>(idx)]);
            e.metadata.genre_tags = names;
            e.metadata.genre_source = names.empty() ? GenreSource::absent : GenreSource::tagger;
            ++tagged;
        }
        e.score_path = rebase_score_path(e.score_path, manifest.dir, out_dir);
        entries[i] = std::move(e);
    });
    write_manifest_rows(out_path, entries);

    RunManifest m;
    m.subcommand = "tag";
    m.config = json{{"model", o.model}, {"thresholds", o.thresholds}, {"jobs", ctx.jobs}};
    m.inputs = {o.in};
    m.outputs = {o.out};
    m.vocab_hash = v.version;
    write_run_manifest(m, run_manifest_path_for(o.out, false));

    std::cerr << "tag: " << tagged.load() << " tagged, " << already.load()
              << " already labeled, " << skipped.load() << " without scores\n";
}

// ---------------------------------------------------------------------------
// subcommand: tune-thresholds

void run_tune_thresholds(const Ctx& ctx, const TuneOpts& o, const CLI::App* sub) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");
    require_flag(o.model, "--model");
    const VocabSpec v = load_vocab_or_default(o.vocab);
    auto loaded = load_checkpoint<float>(o.model, v.version);
    check_tagger_model(loaded.model, v);

    const LoadedManifest manifest = load_manifest(o.in);
    const auto selected = select_split(manifest, o.splits, o.split, sub->count("--split"));
    std::vector<const ManifestEntry*> usable;
    for (const ManifestEntry* e : selected)
        if (!e->metadata.genre_tags.empty() && !e->score_path.empty()) usable.push_back(e);

    ensure_writable(o.out, ctx.force);

    std::vector<ClassProbs> validation(usable.size());
    parallel_for(usable.size(), ctx.jobs, [&](std::size_t i) {
        const Score score = load_score_file(resolve_score_path(manifest.dir, usable[i]->score_path));
        ClassProbs cp;
        cp.probs = predict_probs(loaded.model, score, v);
        const std::vector<float> hot = genre_multi_hot(usable[i]->metadata.genre_tags, v);
        cp.labels.assign(hot.size(), 0);
        for (std::size_t c = 0; c < hot.size(); ++c) cp.labels[c] = hot[c] > 0.5f ? 1 : 0;
        validation[i] = std::move(cp);
    });

    const ThresholdSet th = tune_thresholds(validation);

    std::vector<std::vector<int>> predicted(validation.size()), labels(validation.size());
    for (std::size_t i = 0; i < validation.size(); ++i) {
        predicted[i].assign(validation[i].probs.size(), 0);
        labels[i] = validation[i].labels;
        for (std::size_t c = 0; c < validation[i].probs.size(); ++c)
            if (validation[i].probs[c] >= th.thresholds[c]) predicted[i][c] = 1;
    }
    const MicroScores micro = evaluate_predictions(predicted, labels);

    json out{{"thresholds", th.thresholds},
             {"defaulted", json::array()},
             {"micro",
              {{"precision", micro.precision}, {"recall", micro.recall}, {"f1", micro.f1}}}};
    for (const unsigned char d : th.defaulted) out["defaulted"].push_back(d ? 1 : 0);
    spit(o.out, out.dump(2) + "\n");

    RunManifest m;
    m.subcommand = "tune-thresholds";
    m.config = json{{"model", o.model}, {"splits", o.splits}, {"split", o.split}};
    m.inputs = {o.in};
    m.outputs = {o.out};
    m.vocab_hash = v.version;
    write_run_manifest(m, run_manifest_path_for(o.out, false));

    std::cerr << "tune-thresholds: " << validation.size() << " examples, micro F1 " << micro.f1
              << " (precision " << micro.precision << ", recall " << micro.recall << ")\n";
}

// ---------------------------------------------------------------------------
// subcommand: train-gen

void run_train_gen(const Ctx& ctx, const TrainGenOpts& o, const CLI::App* sub) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");
    if (o.mode != "tags" && o.mode != "text")
        throw UsageError("--mode: expected tags or text; got '" + o.mode + "'");
    const VocabSpec v = load_vocab_or_default(o.vocab);

    ensure_writable(o.out, ctx.force);
    if (!o.loss_curve.empty()) ensure_writable(o.loss_curve, ctx.force);

    std::vector<Sequence> data;
    std::size_t skipped_long = 0, skipped_unmatched = 0;
    int d_cond = 0;
    std::unique_ptr<TextEmbedder> embedder;

    if (o.mode == "tags") {
        if (sub->count("--captions") > 0)
            throw UsageError("--captions only applies to --mode text");
        for (const auto& row : load_jsonl(o.in)) {
            if (!row.value.is_array())
                throw BadInput(o.in + ":" + std::to_string(row.line_no) +
                               ": expected a JSON array of token ids");
            TokenSequence ids;
            try {
                ids = row.value.get<TokenSequence>();
            } catch (const json::exception& e) {
                throw BadInput(o.in + ":" + std::to_string(row.line_no) + ": " + e.what());
            }
            for (const int id : ids)
                if (id < 0 || id >= v.vocab_size)
                    throw BadInput(o.in + ":" + std::to_string(row.line_no) + ": token id " +
                                   std::to_string(id) + " outside the vocabulary");
            if (static_cast<int>(ids.size()) > o.model.max_seq_len) {
                ++skipped_long;
                continue;
            }
            data.push_back(Sequence{std::move(ids), {}, {}});
        }
    } else {
        require_flag(o.captions, "--captions");
        embedder = make_embedder(o.embedder, o.embed_dim);
        d_cond = embedder->dim();

        const LoadedManifest manifest = load_manifest(o.in);
        std::unordered_map<std::string, const ManifestEntry*> by_id;
        for (const auto& e : manifest.entries) by_id[e.id] = &e;

        for (const auto& row : load_jsonl(o.captions)) {
            if (row.value.contains("rejected_reason")) continue;
            const std::string caption_text = row.value.value("caption", "");
            const std::string source_id = row.value.value("source_id", "");
            if (caption_text.empty() || source_id.empty()) continue;
            const auto it = by_id.find(source_id);
            if (it == by_id.end() || it->second->score_path.empty()) {
                ++skipped_unmatched;
                continue;
            }
            const Score score =
                load_score_file(resolve_score_path(manifest.dir, it->second->score_path));
            EncodeOptions opts;
            opts.truncate_overlong = o.truncate_overlong;
            TokenSequence ids = encode(TagSet{}, score, v, opts);
            if (static_cast<int>(ids.size()) > o.model.max_seq_len) {
                ++skipped_long;
                continue;
            }
            const TextEmbedding emb = embedder->embed(caption_text);
            if (static_cast<int>(emb.values.size()) != d_cond)
                throw EmbeddingDimMismatch(d_cond, static_cast<int>(emb.values.size()));
            std::vector<float> cond(emb.values.begin(), emb.values.end());
            data.push_back(Sequence{std::move(ids), std::move(cond), {}});
        }
    }

    AdamState<float> opt;
    std::optional<Model<float>> model;
    if (!o.resume.empty()) {
        auto loaded = load_checkpoint<float>(o.resume, v.version);
        if (o.mode == "text" && loaded.model.config().d_cond != d_cond)
            throw ConditioningDimMismatch(loaded.model.config().d_cond, d_cond);
        model.emplace(std::move(loaded.model));
        if (loaded.has_optimizer) opt = std::move(loaded.opt);
    } else {
        const ModelConfig cfg = backbone_config(o.model, v.vocab_size, /*causal=*/true, d_cond,
                                                /*n_classes=*/0);
        model.emplace(cfg, o.train.seed);
    }

    const TrainConfig tc = train_config(o.train, Objective::next_token_ce);
    const std::vector<double> curve = train(*model, data, tc, &opt);
    save_checkpoint(o.out, *model, v.version, o.train.seed, &opt);
    if (!o.loss_curve.empty()) write_loss_curve(o.loss_curve, curve);

    RunManifest m;
    m.subcommand = "train-gen";
    m.config = json{{"mode", o.mode},
                    {"captions", o.captions},
                    {"embedder", o.embedder},
                    {"model", model_opts_json(o.model)},
                    {"train", train_opts_json(o.train)},
                    {"truncate_overlong", o.truncate_overlong},
                    {"resume", o.resume}};
    m.seed = o.train.seed;
    m.inputs = {o.in};
    if (!o.captions.empty()) m.inputs.push_back(o.captions);
    m.outputs = {o.out};
    if (!o.loss_curve.empty()) m.outputs.push_back(o.loss_curve);
    m.vocab_hash = v.version;
    write_run_manifest(m, run_manifest_path_for(o.out, false));

    std::cerr << "train-gen: " << data.size() << " sequences (" << skipped_long
              << " over length, " << skipped_unmatched << " unmatched), " << tc.steps
              << " steps, final loss " << (curve.empty() ? 0.0 : curve.back()) << "\n";
}

// ---------------------------------------------------------------------------
// subcommand: generate

void run_generate(const Ctx& ctx, const GenerateOpts& o, const CLI::App* sub) {
    require_flag(o.model, "--model");
    require_flag(o.out, "--out");
    if (o.mode != "tags" && o.mode != "text")
        throw UsageError("--mode: expected tags or text; got '" + o.mode + "'");
    if (o.num < 1) throw UsageError("--num: must be at least 1");

    SamplerConfig sampler;
    sampler.temperature = o.temperature;
    sampler.top_p = o.top_p;
    sampler.max_tokens = o.max_tokens;
    try {
        sampler.validate();
    } catch (const OutOfRangeField& e) {
        throw UsageError(std::string("--") +
                         (std::string(e.what()).find("temperature") != std::string::npos
                              ? "temperature"
                          : std::string(e.what()).find("top_p") != std::string::npos ? "top-p"
                                                                                     : "max-tokens") +
                         ": " + e.what());
    }

    if (o.mode == "text") {
        for (const char* flag : {"--genre", "--composer", "--complexity", "--instruments"})
            if (sub->count(flag) > 0)
                throw UsageError(std::string(flag) + " only applies to --mode tags");
        if (sub->count("--prompt") == 0) throw UsageError("missing --prompt");
    } else if (sub->count("--prompt") > 0) {
        throw UsageError("--prompt only applies to --mode text");
    }

    const VocabSpec v = load_vocab_or_default(o.vocab);
    auto loaded = load_checkpoint<float>(o.model, v.version);
    const Model<float>& model = loaded.model;

    TagSet tags;
    std::unique_ptr<TextEmbedder> embedder;
    if (o.mode == "tags") {
        tags.genres = o.genres;
        std::sort(tags.genres.begin(), tags.genres.end());
        tags.genres.erase(std::unique(tags.genres.begin(), tags.genres.end()), tags.genres.end());
        for (const auto& g : tags.genres)
            if (std::find(v.genres.begin(), v.genres.end(), g) == v.genres.end())
                throw UsageError("--genre: unknown genre class '" + g + "'");
        if (!o.composer.empty()) {
            const std::string folded = fold_label(o.composer);
            if (std::find(v.composers.begin(), v.composers.end(), folded) == v.composers.end())
                throw UsageError("--composer: '" + o.composer + "' is not in the vocabulary");
            tags.composer = folded;
        }
        if (!o.complexity.empty()) tags.complexity = parse_complexity_flag(o.complexity);
        if (!o.instruments.empty()) tags.instruments = parse_instruments_flag(o.instruments);
    } else {
        if (model.config().d_cond == 0)
            throw InvalidConfig("checkpoint has no conditioning projection; train with --mode text");
        embedder = make_embedder(o.embedder, model.config().d_cond);
    }

    const fs::path out_base(o.out);
    const bool as_json = lower_ext(out_base) == ".json";
    std::vector<std::string> outputs;
    std::string token_lines;
    for (int i = 0; i < o.num; ++i) {
        SamplerConfig sc = sampler;
        sc.seed = o.seed + static_cast<std::uint64_t>(i);
        const GenerationResult res = o.mode == "tags"
                                         ? generate_tags(model, v, tags, sc)
                                         : generate_text(model, v, o.prompt, *embedder, sc);
        const fs::path out_path = numbered_path(out_base, i, o.num);
        ensure_writable(out_path, ctx.force);
        Score score = res.score;
        score.metadata = metadata_from_tags(res.tags);
        if (as_json)
            spit(out_path, score_json_text(score));
        else
            spit_bytes(out_path, write_midi(score, o.tpq));
        outputs.push_back(out_path.generic_string());
        token_lines += json(res.tokens).dump() + "\n";
        std::cerr << "generate: wrote " << out_path.generic_string() << " (" << res.tokens.size()
                  << " tokens, " << score.notes.size() << " notes)\n";
    }
    if (!o.emit_tokens.empty()) {
        ensure_writable(o.emit_tokens, ctx.force);
        spit(o.emit_tokens, token_lines);
        outputs.push_back(o.emit_tokens);
    }

    RunManifest m;
    m.subcommand = "generate";
    m.config = json{{"mode", o.mode},
                    {"genres", o.genres},
                    {"composer", o.composer},
                    {"complexity", o.complexity},
                    {"instruments", o.instruments},
                    {"prompt", o.prompt},
                    {"embedder", o.mode == "text" ? o.embedder : ""},
                    {"sampler",
                     {{"temperature", sampler.temperature},
                      {"top_p", sampler.top_p},
                      {"max_tokens", sampler.max_tokens}}},
                    {"num", o.num},
                    {"tpq", o.tpq},
                    {"model", o.model}};
    m.seed = o.seed;
    m.inputs = {o.model};
    m.outputs = outputs;
    m.vocab_hash = v.version;
    write_run_manifest(m, run_manifest_path_for(o.out, false));
}

// ---------------------------------------------------------------------------
// subcommand: caption

void run_caption(const Ctx& ctx, const CaptionOpts& o) {
    require_flag(o.in, "--in");
    require_flag(o.out, "--out");
    CaptionBackend backend;
    if (o.backend == "template")
        backend = CaptionBackend::templated;
    else if (o.backend == "llm")
        backend = CaptionBackend::llm;
    else
        throw UsageError("--backend: expected template or llm; got '" + o.backend + "'");

    std::unique_ptr<HttpCompletionClient> client;
    if (backend == CaptionBackend::llm) {
        const char* url = std::getenv("SCOREGEN_COMPLETION_URL");
        if (!url || !*url) throw BackendUnavailable("SCOREGEN_COMPLETION_URL is not set");
        const char* key = std::getenv("SCOREGEN_COMPLETION_KEY");
        client = std::make_unique<HttpCompletionClient>(url, key ? key : "");
    }

    const LoadedManifest manifest = load_manifest(o.in);
    ensure_writable(o.out, ctx.force);

    std::vector<CaptionRecord> records(manifest.entries.size());
    parallel_for(manifest.entries.size(), ctx.jobs, [&](std::size_t i) {
        const ManifestEntry& e = manifest.entries[i];
        Score score;
        std::optional<TimeSignature> ts;
        if (!e.score_path.empty()) {
            score = load_score_file(resolve_score_path(manifest.dir, e.score_path));
            if (!score.time_signatures.empty()) ts = score.time_signatures.front();
        }
        const TagSet tags = tagset_from(e.metadata, score);
        records[i] = caption(e.metadata, tags, backend, e.id, client.get(), ts);
    });

    std::string text;
    std::size_t rejected = 0;
    for (const auto& rec : records) {
        json row{{"source_id", rec.source_id},
                 {"mode", rec.mode == CaptionBackend::llm ? "llm" : "template"}};
        if (rec.rejected_reason) {
            row["rejected_reason"] = *rec.rejected_reason;
            ++rejected;
        } else {
            row["caption"] = rec.caption;
        }
        text += row.dump() + "\n";
    }
    spit(o.out, text);

    RunManifest m;
    m.subcommand = "caption";
    m.config = json{{"backend", o.backend}, {"jobs", ctx.jobs}};
    m.inputs = {o.in};
    m.outputs = {o.out};
    write_run_manifest(m, run_manifest_path_for(o.out, false));

    std::cerr << "caption: " << records.size() - rejected << " captions, " << rejected
              << " rejected\n";
}

// ---------------------------------------------------------------------------
// subcommand: evaluate

void run_evaluate(const Ctx& ctx, const EvaluateOpts& o) {
    require_flag(o.in, "--in");

    std::vector<fs::path> files;
    const fs::path in(o.in);
    if (fs::is_directory(in)) {
        for (const auto& it : fs::directory_iterator(in)) {
            if (!it.is_regular_file() || is_run_sidecar(it.path())) continue;
            const std::string e = lower_ext(it.path());
            if (e == ".json" || e == ".mid" || e == ".midi") files.push_back(it.path());
        }
        std::sort(files.begin(), files.end());
    } else if (lower_ext(in) == ".jsonl") {
        const LoadedManifest manifest = load_manifest(in);
        for (const auto& e : manifest.entries) {
            if (e.score_path.empty()) throw BadInput("entry " + e.id + " has no score_path");
            files.push_back(resolve_score_path(manifest.dir, e.score_path));
        }
    } else {
        files.push_back(in);
    }

    std::vector<MetricReport> reports(files.size());
    parallel_for(files.size(), ctx.jobs, [&](std::size_t i) {
        reports[i] = compute_metrics(load_score_file(files[i]));
    });
    const AggregateReport agg = aggregate(reports);

    auto summary_json = [](const MetricSummary& s) {
        return json{{"mean", s.mean}, {"ci95", s.ci95}, {"n", s.n}, {"n_undefined", s.n_undefined}};
    };
    const json out{{"pitch_class_entropy", summary_json(agg.pitch_class_entropy)},
                   {"scale_consistency", summary_json(agg.scale_consistency)},
                   {"groove_consistency", summary_json(agg.groove_consistency)}};
    const std::string text = out.dump(2) + "\n";
    std::cout << text;

    if (!o.out.empty()) {
        ensure_writable(o.out, ctx.force);
        spit(o.out, text);
        RunManifest m;
        m.subcommand = "evaluate";
        m.config = json{{"jobs", ctx.jobs}};
        m.inputs = {o.in};
        m.outputs = {o.out};
        write_run_manifest(m, run_manifest_path_for(o.out, false));
    }
}

// ---------------------------------------------------------------------------
// config file support: JSON defaults merged under explicit flags

CLI::Option* find_config_option(CLI::App* app, const std::string& key) {
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    for (CLI::Option* opt : app->get_options()) {
        for (const std::string& lname : opt->get_lnames())
            if (lname == key || lname == dashed) return opt;
    }
    return nullptr;
}

void feed_config_value(CLI::Option* opt, const json& value) {
    auto add_one = [&](const json& v) {
        std::string s;
        if (v.is_string())
            s = v.get<std::string>();
        else if (v.is_boolean())
            s = v.get<bool>() ? "true" : "false";
        else
            s = v.dump();
        opt->add_result(s);
    };
    if (value.is_array())
        for (const auto& v : value) add_one(v);
    else
        add_one(value);
    opt->run_callback();
}

void apply_config(CLI::App* app, const json& cfg) {
    for (const auto& [key, value] : cfg.items()) {
        if (value.is_object() || key == "config") continue;
        CLI::Option* opt = find_config_option(app, key);
        if (!opt || opt->count() > 0) continue;
        try {
            feed_config_value(opt, value);
        } catch (const CLI::Error& e) {
            throw UsageError("config key '" + key + "': " + e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// option registration

void add_model_flags(CLI::App* sub, ModelOpts& m) {
    sub->add_option("--d-model", m.d_model, "embedding width")->capture_default_str();
    sub->add_option("--layers", m.layers, "transformer blocks")->capture_default_str();
    sub->add_option("--heads", m.heads, "attention heads")->capture_default_str();
    sub->add_option("--d-ff", m.d_ff, "feed-forward width")->capture_default_str();
    sub->add_option("--max-seq-len", m.max_seq_len, "maximum sequence length")
        ->capture_default_str();
    sub->add_option("--dropout", m.dropout, "dropout rate")->capture_default_str();
    sub->add_flag("--linear-attention", m.linear_attention, "linear attention variant");
}

void add_train_flags(CLI::App* sub, TrainOpts& t) {
    sub->add_option("--steps", t.steps, "optimizer steps")->capture_default_str();
    sub->add_option("--batch-size", t.batch_size, "sequences per step")->capture_default_str();
    sub->add_option("--lr", t.lr, "peak learning rate")->capture_default_str();
    sub->add_option("--warmup", t.warmup, "linear warmup steps")->capture_default_str();
    sub->add_option("--clip", t.clip, "gradient norm clip")->capture_default_str();
    sub->add_option("--seed", t.seed, "training seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    bool json_errors = false;
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--json") json_errors = true;

    Ctx ctx;
    CLI::App app{"symbolic music toolkit: corpus ingestion, tokenization, tagging,\n"
                 "conditioned generation, captioning and evaluation"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.add_flag("--json", ctx.json, "structured JSON errors on stderr");
    app.add_flag("--force", ctx.force, "overwrite existing outputs");
    app.add_option("--jobs", ctx.jobs, "per-file worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--config", ctx.config_path, "JSON config file with default flag values");
    app.require_subcommand(1);

    IngestOpts ingest_o;
    auto* ingest_cmd = app.add_subcommand("ingest", "import MIDI files into a score corpus");
    ingest_cmd->fallthrough();
    ingest_cmd->add_option("--in", ingest_o.in, "MIDI files or directories");
    ingest_cmd->add_option("--out", ingest_o.out, "output corpus directory");
    ingest_cmd->add_option("--drop-log", ingest_o.drop_log, "JSONL log of dropped files");

    NormalizeOpts normalize_o;
    auto* normalize_cmd =
        app.add_subcommand("normalize", "merge genre tags and canonicalize composers");
    normalize_cmd->fallthrough();
    normalize_cmd->add_option("--in", normalize_o.in, "input manifest.jsonl");
    normalize_cmd->add_option("--out", normalize_o.out, "output manifest.jsonl");
    normalize_cmd->add_option("--genre-table", normalize_o.genre_table, "genre merge table JSON");
    normalize_cmd->add_option("--composer-table", normalize_o.composer_table,
                              "composer alias/retention table JSON");
    normalize_cmd->add_flag("--recompute-retained", normalize_o.recompute_retained,
                            "recompute the retained composer list from corpus counts");
    normalize_cmd->add_option("--retain-threshold", normalize_o.retain_threshold,
                              "minimum corpus count to retain a composer")
        ->capture_default_str();
    normalize_cmd->add_option("--emit-tables", normalize_o.emit_tables,
                              "directory to write the effective tables into");

    TokenizeOpts tokenize_o;
    auto* tokenize_cmd = app.add_subcommand("tokenize", "encode scores as token sequences");
    tokenize_cmd->fallthrough();
    tokenize_cmd->add_option("--in", tokenize_o.in, "input manifest.jsonl");
    tokenize_cmd->add_option("--out", tokenize_o.out, "output tokens.jsonl");
    tokenize_cmd->add_option("--vocab", tokenize_o.vocab,
                             "vocabulary JSON (loaded if present, else written)");
    tokenize_cmd->add_option("--vocab-composers", tokenize_o.vocab_composers,
                             "composer table whose retained list seeds a new vocabulary");
    tokenize_cmd->add_flag("--truncate-overlong", tokenize_o.truncate_overlong,
                           "drop notes past the beat horizon instead of failing");

    DetokenizeOpts detokenize_o;
    auto* detokenize_cmd = app.add_subcommand("detokenize", "decode token sequences into scores");
    detokenize_cmd->fallthrough();
    detokenize_cmd->add_option("--in", detokenize_o.in, "input tokens.jsonl");
    detokenize_cmd->add_option("--out", detokenize_o.out, "output corpus directory");
    detokenize_cmd->add_option("--vocab", detokenize_o.vocab, "vocabulary JSON");
    detokenize_cmd->add_flag("--strict", detokenize_o.strict,
                             "reject malformed sequences instead of recovering");

    RenderOpts render_o;
    auto* render_cmd = app.add_subcommand("render", "write score JSON back out as MIDI");
    render_cmd->fallthrough();
    render_cmd->add_option("--in", render_o.in, "score JSON file or directory");
    render_cmd->add_option("--out", render_o.out, "output .mid file or directory");
    render_cmd->add_option("--tpq", render_o.tpq, "ticks per quarter note")->capture_default_str();

    SplitsOpts splits_o;
    auto* splits_cmd = app.add_subcommand("splits", "deterministic train/valid/test id split");
    splits_cmd->fallthrough();
    splits_cmd->add_option("--in", splits_o.in, "input manifest.jsonl");
    splits_cmd->add_option("--out", splits_o.out, "output splits JSON");
    splits_cmd->add_option("--seed", splits_o.seed, "shuffle seed")->capture_default_str();

    TrainTaggerOpts train_tagger_o;
    train_tagger_o.model.d_model = 64;
    train_tagger_o.model.layers = 2;
    train_tagger_o.model.d_ff = 256;
    train_tagger_o.model.max_seq_len = 1200;
    auto* train_tagger_cmd =
        app.add_subcommand("train-tagger", "train the multi-label genre tagger");
    train_tagger_cmd->fallthrough();
    train_tagger_cmd->add_option("--in", train_tagger_o.in, "input manifest.jsonl");
    train_tagger_cmd->add_option("--out", train_tagger_o.out, "output checkpoint");
    train_tagger_cmd->add_option("--vocab", train_tagger_o.vocab, "vocabulary JSON");
    train_tagger_cmd->add_option("--splits", train_tagger_o.splits, "splits JSON");
    train_tagger_cmd->add_option("--split", train_tagger_o.split,
                                 "which split to train on (train|valid|test|all)")
        ->capture_default_str();
    train_tagger_cmd->add_option("--resume", train_tagger_o.resume, "checkpoint to resume from");
    train_tagger_cmd->add_option("--loss-curve", train_tagger_o.loss_curve,
                                 "JSONL per-step loss output");
    add_model_flags(train_tagger_cmd, train_tagger_o.model);
    add_train_flags(train_tagger_cmd, train_tagger_o.train);

    TagOpts tag_o;
    auto* tag_cmd = app.add_subcommand("tag", "fill missing genre tags with tagger predictions");
    tag_cmd->fallthrough();
    tag_cmd->add_option("--in", tag_o.in, "input manifest.jsonl");
    tag_cmd->add_option("--out", tag_o.out, "output manifest.jsonl");
    tag_cmd->add_option("--model", tag_o.model, "tagger checkpoint");
    tag_cmd->add_option("--vocab", tag_o.vocab, "vocabulary JSON");
    tag_cmd->add_option("--thresholds", tag_o.thresholds,
                        "per-class threshold JSON (default 0.5 everywhere)");

    TuneOpts tune_o;
    auto* tune_cmd =
        app.add_subcommand("tune-thresholds", "grid-search per-class decision thresholds");
    tune_cmd->fallthrough();
    tune_cmd->add_option("--in", tune_o.in, "input manifest.jsonl");
    tune_cmd->add_option("--out", tune_o.out, "output thresholds JSON");
    tune_cmd->add_option("--model", tune_o.model, "tagger checkpoint");
    tune_cmd->add_option("--vocab", tune_o.vocab, "vocabulary JSON");
    tune_cmd->add_option("--splits", tune_o.splits, "splits JSON");
    tune_cmd->add_option("--split", tune_o.split, "which split to tune on")->capture_default_str();

    TrainGenOpts train_gen_o;
    auto* train_gen_cmd = app.add_subcommand("train-gen", "train the autoregressive generator");
    train_gen_cmd->fallthrough();
    train_gen_cmd->add_option("--mode", train_gen_o.mode, "conditioning mode (tags|text)")
        ->capture_default_str();
    train_gen_cmd->add_option("--in", train_gen_o.in,
                              "tokens.jsonl (tags mode) or manifest.jsonl (text mode)");
    train_gen_cmd->add_option("--captions", train_gen_o.captions,
                              "captions.jsonl paired by source_id (text mode)");
    train_gen_cmd->add_option("--embedder", train_gen_o.embedder,
                              "text embedder: stub, stub:<dim>, file:<path>, http, or a URL")
        ->capture_default_str();
    train_gen_cmd->add_option("--embed-dim", train_gen_o.embed_dim,
                              "embedding width for stub/http embedders")
        ->capture_default_str();
    train_gen_cmd->add_option("--vocab", train_gen_o.vocab, "vocabulary JSON");
    train_gen_cmd->add_option("--out", train_gen_o.out, "output checkpoint");
    train_gen_cmd->add_option("--resume", train_gen_o.resume, "checkpoint to resume from");
    train_gen_cmd->add_option("--loss-curve", train_gen_o.loss_curve,
                              "JSONL per-step loss output");
    train_gen_cmd->add_flag("--truncate-overlong", train_gen_o.truncate_overlong,
                            "drop notes past the beat horizon instead of failing (text mode)");
    add_model_flags(train_gen_cmd, train_gen_o.model);
    add_train_flags(train_gen_cmd, train_gen_o.train);

    GenerateOpts generate_o;
    auto* generate_cmd = app.add_subcommand("generate", "sample scores from a trained generator");
    generate_cmd->fallthrough();
    generate_cmd->add_option("--model", generate_o.model, "generator checkpoint");
    generate_cmd->add_option("--vocab", generate_o.vocab, "vocabulary JSON");
    generate_cmd->add_option("--mode", generate_o.mode, "conditioning mode (tags|text)")
        ->capture_default_str();
    generate_cmd->add_option("--genre", generate_o.genres, "genre class (repeatable)");
    generate_cmd->add_option("--composer", generate_o.composer, "composer name");
    generate_cmd->add_option("--complexity", generate_o.complexity,
                             "beginner, intermediate or advanced");
    generate_cmd->add_option("--instruments", generate_o.instruments,
                             "comma-separated programs 0..128 (or 'drums')");
    generate_cmd->add_option("--prompt", generate_o.prompt, "free-text prompt (text mode)");
    generate_cmd->add_option("--embedder", generate_o.embedder,
                             "text embedder: stub, stub:<dim>, file:<path>, http, or a URL")
        ->capture_default_str();
    generate_cmd->add_option("--temperature", generate_o.temperature, "softmax temperature (0 = greedy)")
        ->capture_default_str();
    generate_cmd->add_option("--top-p", generate_o.top_p, "nucleus mass")->capture_default_str();
    generate_cmd->add_option("--max-tokens", generate_o.max_tokens,
                             "total token budget including the prompt")
        ->capture_default_str();
    generate_cmd->add_option("--seed", generate_o.seed, "sampling seed (sample i uses seed+i)")
        ->capture_default_str();
    generate_cmd->add_option("--num", generate_o.num, "number of samples")->capture_default_str();
    generate_cmd->add_option("--out", generate_o.out, "output .mid or .json path");
    generate_cmd->add_option("--emit-tokens", generate_o.emit_tokens,
                             "also write sampled token sequences (one JSON array per line)");
    generate_cmd->add_option("--tpq", generate_o.tpq, "ticks per quarter note for MIDI output")
        ->capture_default_str();

    CaptionOpts caption_o;
    auto* caption_cmd = app.add_subcommand("caption", "write pseudo-captions for corpus entries");
    caption_cmd->fallthrough();
    caption_cmd->add_option("--in", caption_o.in, "input manifest.jsonl");
    caption_cmd->add_option("--out", caption_o.out, "output captions.jsonl");
    caption_cmd->add_option("--backend", caption_o.backend, "caption backend (template|llm)")
        ->capture_default_str();

    EvaluateOpts evaluate_o;
    auto* evaluate_cmd =
        app.add_subcommand("evaluate", "aggregate objective metrics over a corpus");
    evaluate_cmd->fallthrough();
    evaluate_cmd->add_option("--in", evaluate_o.in,
                             "directory, manifest.jsonl, or a single score file");
    evaluate_cmd->add_option("--out", evaluate_o.out, "also write the report JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error(json_errors, "usage", e.what());
        return 2;
    }

    bool effective_json = json_errors || ctx.json;
    try {
        CLI::App* sub = app.get_subcommands().front();
        if (!ctx.config_path.empty()) {
            json cfg;
            try {
                cfg = json::parse(slurp(ctx.config_path));
            } catch (const IoError& e) {
                throw UsageError(std::string("--config: ") + e.what());
            } catch (const json::exception& e) {
                throw UsageError("--config: " + ctx.config_path + ": " + e.what());
            }
            if (!cfg.is_object()) throw UsageError("--config: top level must be a JSON object");
            apply_config(&app, cfg);
            json merged = json::object();
            for (const auto& [key, value] : cfg.items())
                if (!value.is_object()) merged[key] = value;
            if (cfg.contains(sub->get_name()) && cfg.at(sub->get_name()).is_object())
                for (const auto& [key, value] : cfg.at(sub->get_name()).items())
                    merged[key] = value;
            apply_config(sub, merged);
            effective_json = json_errors || ctx.json;
        }

        const std::string& name = sub->get_name();
        if (name == "ingest")
            run_ingest(ctx, ingest_o);
        else if (name == "normalize")
            run_normalize(ctx, normalize_o);
        else if (name == "tokenize")
            run_tokenize(ctx, tokenize_o);
        else if (name == "detokenize")
            run_detokenize(ctx, detokenize_o);
        else if (name == "render")
            run_render(ctx, render_o);
        else if (name == "splits")
            run_splits(ctx, splits_o);
        else if (name == "train-tagger")
            run_train_tagger(ctx, train_tagger_o, train_tagger_cmd);
        else if (name == "tag")
            run_tag(ctx, tag_o);
        else if (name == "tune-thresholds")
            run_tune_thresholds(ctx, tune_o, tune_cmd);
        else if (name == "train-gen")
            run_train_gen(ctx, train_gen_o, train_gen_cmd);
        else if (name == "generate")
            run_generate(ctx, generate_o, generate_cmd);
        else if (name == "caption")
            run_caption(ctx, caption_o);
        else if (name == "evaluate")
            run_evaluate(ctx, evaluate_o);
        else
            throw UsageError("unknown subcommand: " + name);
        return 0;
    } catch (const UsageError& e) {
        print_error(effective_json, "usage", e.what());
        return 2;
    } catch (const Error& e) {
        print_error(effective_json, e.code(), e.what());
        return 1;
    } catch (const json::exception& e) {
        print_error(effective_json, "bad_input", e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        print_error(effective_json, "io_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error(effective_json, "internal", e.what());
        return 1;
    }
}
