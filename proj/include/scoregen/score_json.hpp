#ifndef SCOREGEN_SCORE_JSON_HPP
#define SCOREGEN_SCORE_JSON_HPP

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "scoregen/errors.hpp"
#include "scoregen/report.hpp"
#include "scoregen/score.hpp"

namespace scoregen {

// JSON score schema:
//   {"notes":[{"beat":int,"position":int,"pitch":int,"duration":int,"program":int}],
//    "time_signatures":[{"start_beat":int,"numerator":int,"denominator":int}],
//    "metadata":{...}}
// Unknown keys are ignored; missing optional metadata fields stay absent.

inline const char* to_string(GenreSource s) {
    switch (s) {
        case GenreSource::user: return "user";
        case GenreSource::tagger: return "tagger";
        default: return "absent";
    }
}

inline const char* to_string(Complexity c) {
    switch (c) {
        case Complexity::beginner: return "beginner";
        case Complexity::intermediate: return "intermediate";
        default: return "advanced";
    }
}

inline const char* to_string(License l) {
    switch (l) {
        case License::public_domain: return "public_domain";
        case License::creative_commons: return "creative_commons";
        default: return "other";
    }
}

inline std::optional<Complexity> complexity_from_json(const nlohmann::json& v) {
    if (v.is_number_integer()) {
        switch (v.get<int>()) {
            case 0: return Complexity::beginner;
            case 1: return Complexity::intermediate;
            case 2: return Complexity::advanced;
            default: throw OutOfRangeField("complexity", v.get<int>());
        }
    }
    const auto s = v.get<std::string>();
    if (s == "beginner") return Complexity::beginner;
    if (s == "intermediate") return Complexity::intermediate;
    if (s == "advanced") return Complexity::advanced;
    return std::nullopt;
}

inline nlohmann::json metadata_to_json(const Metadata& m) {
    nlohmann::json j = nlohmann::json::object();
    if (!m.genre_tags.empty()) j["genre_tags"] = m.genre_tags;
    if (m.genre_source != GenreSource::absent) j["genre_source"] = to_string(m.genre_source);
    if (m.composer) j["composer"] = *m.composer;
    if (m.complexity) j["complexity"] = to_string(*m.complexity);
    if (!m.free_tags.empty()) j["free_tags"] = m.free_tags;
    if (m.key)
        j["key"] = {{"fifths", m.key->fifths},
                    {"mode", m.key->mode == KeyMode::major ? "major" : "minor"}};
    if (m.tempo_qpm) j["tempo_qpm"] = *m.tempo_qpm;
    if (m.user_stats)
        j["user_stats"] = {{"views", m.user_stats->views},
                           {"likes", m.user_stats->likes},
                           {"comments", m.user_stats->comments}};
    if (m.rating) j["rating"] = *m.rating;
    if (m.license != License::other) j["license"] = to_string(m.license);
    return j;
}

inline Metadata metadata_from_json(const nlohmann::json& j) {
    Metadata m;
    if (j.contains("genre_tags"))
        m.genre_tags = j.at("genre_tags").get<std::vector<std::string>>();
    if (j.contains("genre_source")) {
        const auto s = j.at("genre_source").get<std::string>();
        m.genre_source = s == "user"     ? GenreSource::user
                         : s == "tagger" ? GenreSource::tagger
                                         : GenreSource::absent;
    } else if (!m.genre_tags.empty()) {
        m.genre_source = GenreSource::user;
    }
    if (j.contains("composer") && j.at("composer").is_string())
        m.composer = j.at("composer").get<std::string>();
    if (j.contains("complexity")) m.complexity = complexity_from_json(j.at("complexity"));
    if (j.contains("free_tags"))
        m.free_tags = j.at("free_tags").get<std::vector<std::string>>();
    if (j.contains("key") && j.at("key").is_object()) {
        const auto& k = j.at("key");
        KeySignature key;
        key.fifths = k.value("fifths", 0);
        if (key.fifths < -7 || key.fifths > 7) throw OutOfRangeField("fifths", key.fifths);
        key.mode = k.value("mode", std::string("major")) == "minor" ? KeyMode::minor
                                                                    : KeyMode::major;
        m.key = key;
    }
    if (j.contains("tempo_qpm")) {
        const double qpm = j.at("tempo_qpm").get<double>();
        if (qpm <= 0) throw OutOfRangeField("tempo_qpm", static_cast<long long>(qpm));
        m.tempo_qpm = qpm;
    }
    if (j.contains("user_stats") && j.at("user_stats").is_object()) {
        const auto& u = j.at("user_stats");
        UserStats stats;
        stats.views = u.value("views", std::int64_t{0});
        stats.likes = u.value("likes", std::int64_t{0});
        stats.comments = u.value("comments", std::int64_t{0});
        if (stats.views < 0 || stats.likes < 0 || stats.comments < 0)
            throw OutOfRangeField("user_stats", -1);
        m.user_stats = stats;
    }
    if (j.contains("rating")) {
        const double r = j.at("rating").get<double>();
        if (r < 1.0 || r > 5.0) throw OutOfRangeField("rating", static_cast<long long>(r));
        m.rating = r;
    }
    if (j.contains("license")) {
        const auto s = j.at("license").get<std::string>();
        m.license = s == "public_domain"      ? License::public_domain
                    : s == "creative_commons" ? License::creative_commons
                                              : License::other;
    }
    return m;
}

inline nlohmann::json score_to_json(const Score& s) {
    nlohmann::json notes = nlohmann::json::array();
    for (const auto& n : s.notes)
        notes.push_back({{"beat", n.beat},
                         {"position", n.position},
                         {"pitch", n.pitch},
                         {"duration", n.duration},
                         {"program", n.program}});
    nlohmann::json sigs = nlohmann::json::array();
    for (const auto& ts : s.time_signatures)
        sigs.push_back({{"start_beat", ts.start_beat},
                        {"numerator", ts.numerator},
                        {"denominator", ts.denominator}});
    return {{"notes", notes}, {"time_signatures", sigs}, {"metadata", metadata_to_json(s.metadata)}};
}

/// Reads the JSON score schema. Negative pitches are dropped and counted,
/// over-long durations clipped and counted (mirroring MIDI ingest); any other
/// out-of-range field is an error. The result is canonical.
inline Score score_from_json(const nlohmann::json& j, MidiImportReport* report = nullptr) {
    MidiImportReport local;
    MidiImportReport& rep = report ? *report : local;
    Score s;
    if (j.contains("notes")) {
        for (const auto& nj : j.at("notes")) {
            Note n;
            n.beat = nj.value("beat", 0);
            n.position = nj.value("position", 0);
            n.pitch = nj.value("pitch", 0);
            n.duration = nj.value("duration", 1);
            n.program = nj.value("program", 0);
            if (n.pitch < 0) {
                ++rep.notes_dropped_negative_pitch;
                continue;
            }
            if (n.duration > kMaxDuration) {
                n.duration = kMaxDuration;
                ++rep.notes_clipped_duration;
            }
            if (n.is_drum()) n.duration = 1;
            validate_note(n);
            s.notes.push_back(n);
            ++rep.notes_kept;
        }
    }
    if (j.contains("time_signatures")) {
        for (const auto& tj : j.at("time_signatures")) {
            TimeSignature ts;
            ts.start_beat = tj.value("start_beat", 0);
            ts.numerator = tj.value("numerator", 4);
            ts.denominator = tj.value("denominator", 4);
            validate_time_signature(ts);
            s.time_signatures.push_back(ts);
        }
    }
    if (j.contains("metadata")) s.metadata = metadata_from_json(j.at("metadata"));
    return canonicalize(std::move(s));
}

}  // namespace scoregen

#endif  // SCOREGEN_SCORE_JSON_HPP
