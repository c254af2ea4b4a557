#ifndef SCOREGEN_PIPELINE_HPP
#define SCOREGEN_PIPELINE_HPP

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregen/errors.hpp"
#include "scoregen/labels.hpp"
#include "scoregen/report.hpp"
#include "scoregen/rng.hpp"
#include "scoregen/score.hpp"
#include "scoregen/score_json.hpp"

namespace scoregen {

/// Lowercases ASCII, trims, and collapses whitespace runs to single spaces.
inline std::string fold_label(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (const char c : raw) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Genre merging

struct GenreMergeTable {
    std::vector<std::string> classes;  // the 8 merged classes
    std::unordered_map<std::string, std::string> merge;  // raw tag -> class
};

inline GenreMergeTable default_genre_table() {
    GenreMergeTable t;
    t.classes = default_genre_classes();
    for (const auto& [raw, cls] : default_genre_merge()) t.merge[raw] = cls;
    return t;
}

/// Folds, maps through the merge table, drops unmapped tags, and returns the
/// deduplicated sorted class list.
inline std::vector<std::string> merge_genres(const std::vector<std::string>& raw_tags,
                                             const GenreMergeTable& table) {
    std::vector<std::string> out;
    for (const auto& raw : raw_tags) {
        const auto it = table.merge.find(fold_label(raw));
        if (it != table.merge.end()) out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline nlohmann::json genre_table_to_json(const GenreMergeTable& t) {
    nlohmann::json merge = nlohmann::json::object();
    std::vector<std::string> keys;
    for (const auto& [raw, cls] : t.merge) keys.push_back(raw);
    std::sort(keys.begin(), keys.end());
    for (const auto& k : keys) merge[k] = t.merge.at(k);
    return nlohmann::json{{"classes", t.classes}, {"merge", merge}};
}

inline GenreMergeTable genre_table_from_json(const nlohmann::json& j) {
    GenreMergeTable t;
    t.classes = j.at("classes").get<std::vector<std::string>>();
    const std::unordered_set<std::string> classes(t.classes.begin(), t.classes.end());
    for (const auto& [raw, cls] : j.at("merge").items()) {
        const std::string target = cls.get<std::string>();
        if (!classes.count(target)) throw UnknownGenre(target);
        t.merge[raw] = target;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Composer canonicalization

struct ComposerTable {
    std::unordered_map<std::string, std::string> aliases;  // folded alias -> canonical
    std::vector<std::string> retained;  // canonical names kept in the vocabulary
};

inline ComposerTable default_composer_table() {
    ComposerTable t;
    for (const auto& [alias, canonical] : default_composer_aliases())
        t.aliases[alias] = canonical;
    t.retained = default_composers();
    return t;
}

/// True when the folded string plausibly is a human name: no digits, no URL
/// fragments, at most 6 words.
inline bool looks_like_human_name(const std::string& folded) {
    if (folded.empty()) return false;
    for (const char c : folded)
        if (std::isdigit(static_cast<unsigned char>(c))) return false;
    for (const char* fragment : {"http", "www.", ".com", ".net", ".org"})
        if (folded.find(fragment) != std::string::npos) return false;
    int words = 1;
    for (const char c : folded) words += c == ' ';
    return words <= 6;
}

/// Case/whitespace-folds, resolves aliases, and keeps only names in the
/// retained vocabulary. Returns absent for non-names and unknowns.
inline std::optional<std::string> normalize_composer(const std::string& raw,
                                                     const ComposerTable& table) {
    const std::string folded = fold_label(raw);
    if (!looks_like_human_name(folded)) return std::nullopt;
    const auto it = table.aliases.find(folded);
    const std::string canonical = it != table.aliases.end() ? it->second : folded;
    if (std::find(table.retained.begin(), table.retained.end(), canonical) ==
        table.retained.end())
        return std::nullopt;
    return canonical;
}

/// Names whose corpus count reaches the threshold, sorted (the paper keeps 47
/// composers this way at full scale).
inline std::vector<std::string> retain_composers(
    const std::unordered_map<std::string, long>& counts, long threshold = 100) {
    std::vector<std::string> out;
    for (const auto& [name, count] : counts)
        if (count >= threshold) out.push_back(name);
    std::sort(out.begin(), out.end());
    return out;
}

inline nlohmann::json composer_table_to_json(const ComposerTable& t) {
    nlohmann::json aliases = nlohmann::json::object();
    std::vector<std::string> keys;
    for (const auto& [alias, canonical] : t.aliases) keys.push_back(alias);
    std::sort(keys.begin(), keys.end());
    for (const auto& k : keys) aliases[k] = t.aliases.at(k);
    return nlohmann::json{{"retained", t.retained}, {"aliases", aliases}};
}

inline ComposerTable composer_table_from_json(const nlohmann::json& j) {
    ComposerTable t;
    t.retained = j.at("retained").get<std::vector<std::string>>();
    for (const auto& [alias, canonical] : j.at("aliases").items())
        t.aliases[alias] = canonical.get<std::string>();
    return t;
}

// ---------------------------------------------------------------------------
// Splits

struct Splits {
    std::vector<std::string> train;
    std::vector<std::string> valid;
    std::vector<std::string> test;
};

/// Deterministic 90/5/5 partition: shuffle under the seed, then take
/// ceil(0.9n) / floor(0.05n) / remainder.
inline Splits make_splits(const std::vector<std::string>& ids, std::uint64_t seed) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw DuplicateId(id);

    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    rng.shuffle(shuffled);

    const std::size_t n = shuffled.size();
    const std::size_t n_train = (n * 9 + 9) / 10;  // ceil(0.9 n)
    const std::size_t n_valid = n / 20;             // floor(0.05 n)

    Splits s;
    s.train.assign(shuffled.begin(), shuffled.begin() + n_train);
    s.valid.assign(shuffled.begin() + n_train,
                   shuffled.begin() + std::min(n, n_train + n_valid));
    s.test.assign(shuffled.begin() + std::min(n, n_train + n_valid), shuffled.end());
    return s;
}

// ---------------------------------------------------------------------------
// Corpus filtering

enum class DropReason { kept, non_gm, negative_pitch };

inline const char* to_string(DropReason r) {
    switch (r) {
        case DropReason::kept: return "kept";
        case DropReason::non_gm: return "non_gm";
        case DropReason::negative_pitch: return "negative_pitch";
    }
    return "kept";
}

/// Keep/drop rule applied after import: entries with broken (negative) pitches
/// are dropped, as are entries with no notes left after General MIDI
/// filtering.
inline DropReason filter_corpus(const Score& score, const MidiImportReport& report) {
    if (report.notes_dropped_negative_pitch > 0) return DropReason::negative_pitch;
    if (score.notes.empty()) return DropReason::non_gm;
    return DropReason::kept;
}

// ---------------------------------------------------------------------------
// Corpus manifest (JSONL)

struct ManifestEntry {
    std::string id;
    std::string score_path;
    Metadata metadata;

    bool operator==(const ManifestEntry&) const = default;
};

inline nlohmann::json manifest_entry_to_json(const ManifestEntry& e) {
    return nlohmann::json{
        {"id", e.id}, {"score_path", e.score_path}, {"metadata", metadata_to_json(e.metadata)}};
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.score_path = j.value("score_path", "");
    if (j.contains("metadata")) e.metadata = metadata_from_json(j.at("metadata"));
    return e;
}

}  // namespace scoregen

#endif  // SCOREGEN_PIPELINE_HPP
