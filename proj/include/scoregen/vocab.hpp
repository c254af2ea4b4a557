#ifndef SCOREGEN_VOCAB_HPP
#define SCOREGEN_VOCAB_HPP

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregen/errors.hpp"
#include "scoregen/labels.hpp"
#include "scoregen/rng.hpp"
#include "scoregen/score.hpp"

namespace scoregen {

/// Highest encodable beat index plus one.
inline constexpr int kMaxBeat = 1024;
/// Number of instrument values: GM programs 0..127 plus the drum kit (128).
inline constexpr int kInstrumentCount = 129;

enum class TokenKind {
    pad,
    start_of_song,
    start_of_genre,
    tag_genre,
    tag_genre_none,
    start_of_composer,
    tag_composer,
    tag_composer_none,
    start_of_complexity,
    tag_complexity,
    tag_complexity_none,
    start_of_instrument,
    tag_instrument,
    tag_instrument_none,
    start_of_notes,
    end_of_song,
    beat,
    position,
    instrument,
    pitch,
    duration,
    drum_pitch,
    invalid,
};

/// Bijection between symbolic events and token ids. Layout is contiguous in
/// the order the fields below are initialized; with the default label lists
/// the total size is 1812.
struct VocabSpec {
    std::string version;  // content hash over the label lists
    std::vector<std::string> genres;
    std::vector<std::string> composers;
    std::vector<std::string> complexities;

    int pad = 0;
    int sos = 0;
    int sog = 0;
    int genre_base = 0;
    int genre_none = 0;
    int soc = 0;
    int composer_base = 0;
    int composer_none = 0;
    int sox = 0;
    int complexity_base = 0;
    int complexity_none = 0;
    int soi = 0;
    int tag_instrument_base = 0;
    int tag_instrument_none = 0;
    int son = 0;
    int eos = 0;
    int beat_base = 0;
    int position_base = 0;
    int instrument_base = 0;
    int pitch_base = 0;
    int duration_base = 0;
    int drum_pitch_base = 0;
    int vocab_size = 0;

    std::unordered_map<std::string, int> genre_index;
    std::unordered_map<std::string, int> composer_index;
    std::unordered_map<std::string, int> complexity_index;

    // --- token constructors ---

    int genre_token(const std::string& name) const {
        auto it = genre_index.find(name);
        if (it == genre_index.end()) throw UnknownGenre(name);
        return genre_base + it->second;
    }
    int composer_token(const std::string& name) const {
        auto it = composer_index.find(name);
        if (it == composer_index.end()) throw UnknownComposer(name);
        return composer_base + it->second;
    }
    int complexity_token(Complexity c) const { return complexity_base + static_cast<int>(c); }
    int instrument_tag_token(int program) const {
        if (program < 0 || program >= kInstrumentCount) throw OutOfRangeField("program", program);
        return tag_instrument_base + program;
    }
    int beat_token(int beat) const {
        if (beat < 0 || beat >= kMaxBeat) throw BeatOverflow(beat);
        return beat_base + beat;
    }
    int position_token(int position) const {
        if (position < 0 || position >= kResolution) throw OutOfRangeField("position", position);
        return position_base + position;
    }
    int instrument_token(int program) const {
        if (program < 0 || program >= kInstrumentCount) throw OutOfRangeField("program", program);
        return instrument_base + program;
    }
    int pitch_token(int pitch) const {
        if (pitch < 0 || pitch > 127) throw OutOfRangeField("pitch", pitch);
        return pitch_base + pitch;
    }
    int duration_token(int duration) const {
        if (duration < 1 || duration > kMaxDuration) throw OutOfRangeField("duration", duration);
        return duration_base + duration - 1;
    }
    int drum_pitch_token(int pitch) const {
        if (pitch < 0 || pitch > 127) throw OutOfRangeField("pitch", pitch);
        return drum_pitch_base + pitch;
    }

    // --- introspection ---

    TokenKind kind_of(int id) const {
        if (id == pad) return TokenKind::pad;
        if (id == sos) return TokenKind::start_of_song;
        if (id == sog) return TokenKind::start_of_genre;
        if (id >= genre_base && id < genre_none) return TokenKind::tag_genre;
        if (id == genre_none) return TokenKind::tag_genre_none;
        if (id == soc) return TokenKind::start_of_composer;
        if (id >= composer_base && id < composer_none) return TokenKind::tag_composer;
        if (id == composer_none) return TokenKind::tag_composer_none;
        if (id == sox) return TokenKind::start_of_complexity;
        if (id >= complexity_base && id < complexity_none) return TokenKind::tag_complexity;
        if (id == complexity_none) return TokenKind::tag_complexity_none;
        if (id == soi) return TokenKind::start_of_instrument;
        if (id >= tag_instrument_base && id < tag_instrument_none) return TokenKind::tag_instrument;
        if (id == tag_instrument_none) return TokenKind::tag_instrument_none;
        if (id == son) return TokenKind::start_of_notes;
        if (id == eos) return TokenKind::end_of_song;
        if (id >= beat_base && id < beat_base + kMaxBeat) return TokenKind::beat;
        if (id >= position_base && id < position_base + kResolution) return TokenKind::position;
        if (id >= instrument_base && id < instrument_base + kInstrumentCount)
            return TokenKind::instrument;
        if (id >= pitch_base && id < pitch_base + 128) return TokenKind::pitch;
        if (id >= duration_base && id < duration_base + kMaxDuration) return TokenKind::duration;
        if (id >= drum_pitch_base && id < drum_pitch_base + 128) return TokenKind::drum_pitch;
        return TokenKind::invalid;
    }

    /// Index of `id` within its event family (beat number, program, pitch,
    /// duration value, or label-list index). Structural tokens return 0.
    int value_of(int id) const {
        switch (kind_of(id)) {
            case TokenKind::tag_genre: return id - genre_base;
            case TokenKind::tag_composer: return id - composer_base;
            case TokenKind::tag_complexity: return id - complexity_base;
            case TokenKind::tag_instrument: return id - tag_instrument_base;
            case TokenKind::beat: return id - beat_base;
            case TokenKind::position: return id - position_base;
            case TokenKind::instrument: return id - instrument_base;
            case TokenKind::pitch: return id - pitch_base;
            case TokenKind::duration: return id - duration_base + 1;
            case TokenKind::drum_pitch: return id - drum_pitch_base;
            default: return 0;
        }
    }

    std::string name_of(int id) const {
        switch (kind_of(id)) {
            case TokenKind::pad: return "pad";
            case TokenKind::start_of_song: return "start_of_song";
            case TokenKind::start_of_genre: return "start_of_genre";
            case TokenKind::tag_genre: return "tag_genre_" + genres[value_of(id)];
            case TokenKind::tag_genre_none: return "tag_genre_none";
            case TokenKind::start_of_composer: return "start_of_composer";
            case TokenKind::tag_composer: return "tag_composer_" + composers[value_of(id)];
            case TokenKind::tag_composer_none: return "tag_composer_none";
            case TokenKind::start_of_complexity: return "start_of_complexity";
            case TokenKind::tag_complexity: return "tag_complexity_" + complexities[value_of(id)];
            case TokenKind::tag_complexity_none: return "tag_complexity_none";
            case TokenKind::start_of_instrument: return "start_of_instrument";
            case TokenKind::tag_instrument: return "tag_instrument_" + std::to_string(value_of(id));
            case TokenKind::tag_instrument_none: return "tag_instrument_none";
            case TokenKind::start_of_notes: return "start_of_notes";
            case TokenKind::end_of_song: return "end_of_song";
            case TokenKind::beat: return "beat_" + std::to_string(value_of(id));
            case TokenKind::position: return "position_" + std::to_string(value_of(id));
            case TokenKind::instrument: return "instrument_" + std::to_string(value_of(id));
            case TokenKind::pitch: return "pitch_" + std::to_string(value_of(id));
            case TokenKind::duration: return "duration_" + std::to_string(value_of(id));
            case TokenKind::drum_pitch: return "drum_pitch_" + std::to_string(value_of(id));
            case TokenKind::invalid: break;
        }
        return "invalid_" + std::to_string(id);
    }
};

namespace vocab_detail {

inline void check_unique(const std::vector<std::string>& labels, const char* family) {
    std::unordered_set<std::string> seen;
    for (const auto& label : labels)
        if (!seen.insert(label).second)
            throw DuplicateLabel(std::string(family) + ": " + label);
}

inline std::string content_hash(const std::vector<std::string>& genres,
                                const std::vector<std::string>& composers,
                                const std::vector<std::string>& complexities) {
    std::string blob = "mst-vocab/1";
    for (const auto* list : {&genres, &composers, &complexities}) {
        blob += '|';
        for (const auto& s : *list) {
            blob += s;
            blob += '\x1f';
        }
    }
    return fnv1a64_hex(blob);
}

}  // namespace vocab_detail

inline VocabSpec build_vocab(std::vector<std::string> genres = default_genre_classes(),
                             std::vector<std::string> composers = default_composers(),
                             std::vector<std::string> complexities = complexity_names()) {
    vocab_detail::check_unique(genres, "genre");
    vocab_detail::check_unique(composers, "composer");
    vocab_detail::check_unique(complexities, "complexity");

    VocabSpec v;
    v.genres = std::move(genres);
    v.composers = std::move(composers);
    v.complexities = std::move(complexities);
    v.version = vocab_detail::content_hash(v.genres, v.composers, v.complexities);

    int id = 0;
    v.pad = id++;
    v.sos = id++;
    v.sog = id++;
    v.genre_base = id;
    id += static_cast<int>(v.genres.size());
    v.genre_none = id++;
    v.soc = id++;
    v.composer_base = id;
    id += static_cast<int>(v.composers.size());
    v.composer_none = id++;
    v.sox = id++;
    v.complexity_base = id;
    id += static_cast<int>(v.complexities.size());
    v.complexity_none = id++;
    v.soi = id++;
    v.tag_instrument_base = id;
    id += kInstrumentCount;
    v.tag_instrument_none = id++;
    v.son = id++;
    v.eos = id++;
    v.beat_base = id;
    id += kMaxBeat;
    v.position_base = id;
    id += kResolution;
    v.instrument_base = id;
    id += kInstrumentCount;
    v.pitch_base = id;
    id += 128;
    v.duration_base = id;
    id += kMaxDuration;
    v.drum_pitch_base = id;
    id += 128;
    v.vocab_size = id;

    for (int i = 0; i < static_cast<int>(v.genres.size()); ++i) v.genre_index[v.genres[i]] = i;
    for (int i = 0; i < static_cast<int>(v.composers.size()); ++i)
        v.composer_index[v.composers[i]] = i;
    for (int i = 0; i < static_cast<int>(v.complexities.size()); ++i)
        v.complexity_index[v.complexities[i]] = i;
    return v;
}

inline nlohmann::json vocab_to_json(const VocabSpec& v) {
    return nlohmann::json{
        {"format", "mst-vocab"},
        {"version", v.version},
        {"vocab_size", v.vocab_size},
        {"genres", v.genres},
        {"composers", v.composers},
        {"complexities", v.complexities},
    };
}

inline VocabSpec vocab_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "mst-vocab")
        throw VocabMismatch("not a vocabulary file");
    VocabSpec v = build_vocab(j.at("genres").get<std::vector<std::string>>(),
                              j.at("composers").get<std::vector<std::string>>(),
                              j.at("complexities").get<std::vector<std::string>>());
    const std::string declared = j.value("version", "");
    if (!declared.empty() && declared != v.version)
        throw VocabMismatch("content hash mismatch: file says " + declared + ", computed " +
                            v.version);
    if (j.contains("vocab_size") && j.at("vocab_size").get<int>() != v.vocab_size)
        throw VocabMismatch("vocab_size mismatch");
    return v;
}

}  // namespace scoregen

#endif  // SCOREGEN_VOCAB_HPP
