#ifndef SCOREGEN_SCORE_HPP
#define SCOREGEN_SCORE_HPP

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scoregen/errors.hpp"

namespace scoregen {

/// Sub-beat slots per beat. 12 covers straight sixteenths and triplets.
inline constexpr int kResolution = 12;
/// Longest representable duration, in position slots (16 beats).
inline constexpr int kMaxDuration = 192;
/// Pseudo General MIDI program number for the drum kit.
inline constexpr int kDrumProgram = 128;

/// A quantized note. Field declaration order doubles as the canonical sort
/// order: (beat, position, program, pitch, duration).
struct Note {
    int beat = 0;      // whole beats from song start, >= 0
    int position = 0;  // sub-beat slot in [0, kResolution)
    int program = 0;   // 0..127 General MIDI, 128 = drum kit
    int pitch = 0;     // MIDI pitch (percussion key for drums), 0..127
    int duration = 1;  // position slots, 1..kMaxDuration (always 1 for drums)

    bool is_drum() const { return program == kDrumProgram; }
    auto operator<=>(const Note&) const = default;

    static Note drum(int beat, int position, int pitch) {
        return Note{beat, position, kDrumProgram, pitch, 1};
    }
};

struct TimeSignature {
    int start_beat = 0;
    int numerator = 4;
    int denominator = 4;  // power of two in {1,2,4,8,16,32}
    bool operator==(const TimeSignature&) const = default;
};

enum class GenreSource { user, tagger, absent };
enum class Complexity { beginner, intermediate, advanced };
enum class License { public_domain, creative_commons, other };
enum class KeyMode { major, minor };

struct KeySignature {
    int fifths = 0;  // [-7, 7]
    KeyMode mode = KeyMode::major;
    bool operator==(const KeySignature&) const = default;
};

struct UserStats {
    std::int64_t views = 0;
    std::int64_t likes = 0;
    std::int64_t comments = 0;
    bool operator==(const UserStats&) const = default;
};

struct Metadata {
    std::vector<std::string> genre_tags;  // merged-genre labels
    GenreSource genre_source = GenreSource::absent;
    std::optional<std::string> composer;  // canonical lowercase name
    std::optional<Complexity> complexity;
    std::vector<std::string> free_tags;
    std::optional<KeySignature> key;
    std::optional<double> tempo_qpm;
    std::optional<UserStats> user_stats;
    std::optional<double> rating;  // [1, 5]
    License license = License::other;
    bool operator==(const Metadata&) const = default;
};

struct Score {
    std::vector<Note> notes;  // canonical order after canonicalize()
    std::vector<TimeSignature> time_signatures;
    Metadata metadata;
    bool operator==(const Score&) const = default;
};

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline void validate_note(const Note& n) {
    if (n.beat < 0) throw OutOfRangeField("beat", n.beat);
    if (n.position < 0 || n.position >= kResolution) throw OutOfRangeField("position", n.position);
    if (n.pitch < 0 || n.pitch > 127) throw OutOfRangeField("pitch", n.pitch);
    if (n.duration < 1 || n.duration > kMaxDuration) throw OutOfRangeField("duration", n.duration);
    if (n.program < 0 || n.program > kDrumProgram) throw OutOfRangeField("program", n.program);
}

inline void validate_time_signature(const TimeSignature& ts) {
    if (ts.start_beat < 0) throw OutOfRangeField("start_beat", ts.start_beat);
    if (ts.numerator < 1) throw OutOfRangeField("numerator", ts.numerator);
    if (!is_power_of_two(ts.denominator) || ts.denominator > 32)
        throw OutOfRangeField("denominator", ts.denominator);
}

/// Sorts notes into canonical order, removes exact duplicates, and pins drum
/// durations to 1. Time signatures are sorted and deduplicated by start beat
/// (the last entry wins). Idempotent.
inline Score canonicalize(Score s) {
    for (auto& n : s.notes) {
        validate_note(n);
        if (n.is_drum()) n.duration = 1;
    }
    std::sort(s.notes.begin(), s.notes.end());
    s.notes.erase(std::unique(s.notes.begin(), s.notes.end()), s.notes.end());

    for (const auto& ts : s.time_signatures) validate_time_signature(ts);
    std::stable_sort(s.time_signatures.begin(), s.time_signatures.end(),
                     [](const TimeSignature& a, const TimeSignature& b) {
                         return a.start_beat < b.start_beat;
                     });
    // keep the last signature declared for each start beat
    std::vector<TimeSignature> unique_ts;
    for (const auto& ts : s.time_signatures) {
        if (!unique_ts.empty() && unique_ts.back().start_beat == ts.start_beat)
            unique_ts.back() = ts;
        else
            unique_ts.push_back(ts);
    }
    s.time_signatures = std::move(unique_ts);
    return s;
}

struct Bar {
    int start_beat = 0;
    int beat_count = 0;
    bool operator==(const Bar&) const = default;
};

/// Nominal bar length in beats: numerator * (4 / denominator), rounded to the
/// nearest integer, never below 1.
inline int beats_per_bar(const TimeSignature& ts) {
    const long v = std::lround(static_cast<double>(ts.numerator) * 4.0 / ts.denominator);
    return std::max(1, static_cast<int>(v));
}

/// Partitions [0, last note beat] into bars. 4/4 is assumed before the first
/// time signature (and throughout when none exist). A bar never crosses a
/// time-signature change; the final bar keeps its nominal length.
inline std::vector<Bar> bars_of(const Score& s) {
    if (s.notes.empty()) return {};
    int last_beat = 0;
    for (const auto& n : s.notes) last_beat = std::max(last_beat, n.beat);

    std::vector<TimeSignature> sigs = s.time_signatures;
    if (sigs.empty() || sigs.front().start_beat > 0)
        sigs.insert(sigs.begin(), TimeSignature{0, 4, 4});

    std::vector<Bar> bars;
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        const int seg_start = sigs[i].start_beat;
        const bool has_next = i + 1 < sigs.size();
        const int seg_end = has_next ? sigs[i + 1].start_beat : last_beat + 1;
        const int len = beats_per_bar(sigs[i]);
        for (int b = seg_start; b < seg_end && b <= last_beat; b += len) {
            int count = len;
            if (has_next) count = std::min(count, seg_end - b);
            bars.push_back(Bar{b, count});
        }
    }
    return bars;
}

/// Distinct programs present in a score, ascending (drums = 128 last).
inline std::vector<int> programs_of(const Score& s) {
    std::set<int> programs;
    for (const auto& n : s.notes) programs.insert(n.program);
    return {programs.begin(), programs.end()};
}

}  // namespace scoregen

#endif  // SCOREGEN_SCORE_HPP
