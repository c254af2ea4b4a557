// Shared generators for property tests. Everything is driven by the
// library's own deterministic Rng so failures reproduce across runs.
#ifndef SCOREGEN_TEST_HELPERS_HPP
#define SCOREGEN_TEST_HELPERS_HPP

#include <algorithm>
#include <vector>

#include "scoregen/rng.hpp"
#include "scoregen/score.hpp"
#include "scoregen/tokenizer.hpp"
#include "scoregen/vocab.hpp"

namespace scoregen::testing {

struct ScoreGenOptions {
    int max_notes = 200;
    int max_beat = 64;        // exclusive upper bound for note beats
    bool allow_drums = true;
    bool with_time_signatures = true;
    // Restrict to what a Standard MIDI File round trip can represent:
    // no nested same-(program,pitch) overlaps, metadata limited to tempo.
    bool midi_safe = false;
};

inline bool overlaps_same_voice(const Note& a, const Note& b) {
    if (a.program != b.program || a.pitch != b.pitch) return false;
    const int a0 = a.beat * kResolution + a.position;
    const int b0 = b.beat * kResolution + b.position;
    return a0 < b0 + b.duration && b0 < a0 + a.duration;
}

inline Score random_score(Rng& rng, const ScoreGenOptions& opts = {}) {
    Score s;
    const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(opts.max_notes) + 1));
    const int programs[] = {0, 0, 24, 32, 40, 48, 56, 65, 73, 118};
    for (int i = 0; i < n; ++i) {
        Note note;
        note.beat = static_cast<int>(rng.below(opts.max_beat));
        note.position = static_cast<int>(rng.below(kResolution));
        const bool drum = opts.allow_drums && rng.below(5) == 0;
        if (drum) {
            note.program = kDrumProgram;
            note.pitch = 35 + static_cast<int>(rng.below(47));
            note.duration = 1;
        } else {
            note.program = programs[rng.below(10)];
            note.pitch = 21 + static_cast<int>(rng.below(88));
            note.duration = 1 + static_cast<int>(rng.below(48));
        }
        if (opts.midi_safe) {
            bool clash = false;
            for (const auto& kept : s.notes)
                if (overlaps_same_voice(kept, note)) {
                    clash = true;
                    break;
                }
            if (clash) continue;
        }
        s.notes.push_back(note);
    }

    if (opts.with_time_signatures && rng.below(2) == 0) {
        const int num_ts = 1 + static_cast<int>(rng.below(3));
        std::vector<int> starts;
        for (int i = 0; i < num_ts; ++i)
            starts.push_back(static_cast<int>(rng.below(opts.max_beat)));
        std::sort(starts.begin(), starts.end());
        starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
        const int denominators[] = {1, 2, 4, 8, 16, 32};
        for (const int start : starts)
            s.time_signatures.push_back(TimeSignature{
                start, 1 + static_cast<int>(rng.below(12)), denominators[rng.below(6)]});
    }

    if (rng.below(2) == 0) {
        // divisors of 60e6 so the SMF tempo meta event is lossless
        const double tempos[] = {50, 60, 75, 80, 96, 100, 120, 125, 150, 160, 200, 240};
        s.metadata.tempo_qpm = tempos[rng.below(12)];
    }
    if (!opts.midi_safe && rng.below(3) == 0) {
        s.metadata.genre_tags = {"urban"};
        s.metadata.genre_source = GenreSource::user;
    }
    return canonicalize(std::move(s));
}

inline TagSet random_tagset(Rng& rng, const VocabSpec& vocab) {
    TagSet t;
    const int n_genres = static_cast<int>(rng.below(4));
    for (int i = 0; i < n_genres; ++i)
        t.genres.push_back(vocab.genres[rng.below(vocab.genres.size())]);
    std::sort(t.genres.begin(), t.genres.end());
    t.genres.erase(std::unique(t.genres.begin(), t.genres.end()), t.genres.end());

    if (rng.below(2) == 0) t.composer = vocab.composers[rng.below(vocab.composers.size())];
    if (rng.below(2) == 0) t.complexity = static_cast<Complexity>(rng.below(3));

    const int n_instruments = static_cast<int>(rng.below(4));
    for (int i = 0; i < n_instruments; ++i)
        t.instruments.push_back(static_cast<int>(rng.below(kInstrumentCount)));
    std::sort(t.instruments.begin(), t.instruments.end());
    t.instruments.erase(std::unique(t.instruments.begin(), t.instruments.end()),
                        t.instruments.end());
    return t;
}

}  // namespace scoregen::testing

#endif  // SCOREGEN_TEST_HELPERS_HPP
