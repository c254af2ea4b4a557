// Nucleus (top-p) sampling and the event-grammar mask used during
// autoregressive generation. The grammar only permits token families that
// can extend the current note group, which guarantees every emitted
// sequence decodes strictly after at most trailing-group truncation.
#ifndef SCOREGEN_SAMPLING_HPP
#define SCOREGEN_SAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "scoregen/errors.hpp"
#include "scoregen/rng.hpp"
#include "scoregen/vocab.hpp"

namespace scoregen {

struct SamplerConfig {
    double temperature = 1.0;  // 0 is the greedy (argmax) limit
    double top_p = 0.95;
    int max_tokens = 1024;  // total sequence budget, prompt included
    std::uint64_t seed = 0;

    void validate() const {
        if (!(temperature >= 0.0) || !std::isfinite(temperature))
            throw OutOfRangeField("temperature", static_cast<long long>(temperature));
        if (!(top_p > 0.0 && top_p <= 1.0)) throw OutOfRangeField("top_p", 0);
        if (max_tokens < 1) throw OutOfRangeField("max_tokens", max_tokens);
    }
};

/// Draws one token id from a logits row restricted to `allowed`.
/// temperature 0 short-circuits to the allowed argmax (lowest id on ties).
/// Ranking ties inside the nucleus break by ascending id so results are
/// reproducible across platforms.
template <class RowLike>
int sample_from_logits(const RowLike& logits, const std::vector<unsigned char>& allowed,
                       double temperature, double top_p, Rng& rng) {
    const int n = static_cast<int>(allowed.size());
    std::vector<int> candidates;
    candidates.reserve(64);
    for (int i = 0; i < n; ++i)
        if (allowed[static_cast<std::size_t>(i)]) candidates.push_back(i);
    if (candidates.empty()) throw OutOfRangeField("allowed_tokens", 0);

    if (temperature == 0.0) {
        int best = candidates.front();
        for (int id : candidates)
            if (static_cast<double>(logits(id)) > static_cast<double>(logits(best))) best = id;
        return best;
    }

    double mx = -std::numeric_limits<double>::infinity();
    for (int id : candidates) mx = std::max(mx, static_cast<double>(logits(id)) / temperature);
    std::vector<double> probs(candidates.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        probs[i] = std::exp(static_cast<double>(logits(candidates[i])) / temperature - mx);
        sum += probs[i];
    }
    for (auto& p : probs) p /= sum;

    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return candidates[a] < candidates[b];
    });

    // smallest prefix of the ranking whose mass reaches top_p
    std::size_t keep = 0;
    double mass = 0.0;
    while (keep < order.size()) {
        mass += probs[order[keep]];
        ++keep;
        if (mass >= top_p) break;
    }

    const double u = rng.uniform() * mass;
    double cum = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        cum += probs[order[i]];
        if (u < cum) return candidates[order[i]];
    }
    return candidates[order[keep - 1]];  // float accumulation fell short of mass
}

/// Tracks where we are inside the note-region grammar and produces the set
/// of token ids that may legally come next. The tag prefix itself is forced
/// by the caller, so the state machine starts right after start-of-notes.
class GrammarState {
public:
    explicit GrammarState(const VocabSpec& v) : v_(&v), allowed_(static_cast<std::size_t>(v.vocab_size), 0) {}

    bool done() const { return state_ == State::finished; }

    /// Marks legal next tokens in an internal buffer and returns it.
    const std::vector<unsigned char>& allowed_mask() {
        std::fill(allowed_.begin(), allowed_.end(), static_cast<unsigned char>(0));
        switch (state_) {
            case State::note_or_end:
                for (int b = min_beat_; b < kMaxBeat; ++b)
                    allowed_[static_cast<std::size_t>(v_->beat_base + b)] = 1;
                allowed_[static_cast<std::size_t>(v_->eos)] = 1;
                break;
            case State::position:
                mark_range(v_->position_base, kResolution);
                break;
            case State::instrument:
                mark_range(v_->instrument_base, kInstrumentCount);
                break;
            case State::pitch:
                mark_range(v_->pitch_base, 128);
                break;
            case State::drum_pitch:
                mark_range(v_->drum_pitch_base, 128);
                break;
            case State::duration:
                mark_range(v_->duration_base, kMaxDuration);
                break;
            case State::finished:
                break;
        }
        return allowed_;
    }

    /// Folds one emitted token into the state. Tokens that the current state
    /// does not allow raise GrammarViolation with the sequence index.
    void advance(int token) {
        const TokenKind kind = v_->kind_of(token);
        switch (state_) {
            case State::note_or_end:
                if (kind == TokenKind::beat) {
                    const int beat = v_->value_of(token);
                    if (beat < min_beat_)
                        throw GrammarViolation(index_, "beat >= " + std::to_string(min_beat_),
                                               v_->name_of(token));
                    min_beat_ = beat;
                    state_ = State::position;
                } else if (kind == TokenKind::end_of_song) {
                    state_ = State::finished;
                } else {
                    throw GrammarViolation(index_, "beat or end_of_song", v_->name_of(token));
                }
                break;
            case State::position:
                expect(kind, TokenKind::position, "position", token);
                state_ = State::instrument;
                break;
            case State::instrument:
                expect(kind, TokenKind::instrument, "instrument", token);
                state_ = v_->value_of(token) == kDrumProgram ? State::drum_pitch : State::pitch;
                break;
            case State::pitch:
                expect(kind, TokenKind::pitch, "pitch", token);
                state_ = State::duration;
                break;
            case State::drum_pitch:
                expect(kind, TokenKind::drum_pitch, "drum_pitch", token);
                state_ = State::note_or_end;
                break;
            case State::duration:
                expect(kind, TokenKind::duration, "duration", token);
                state_ = State::note_or_end;
                break;
            case State::finished:
                throw GrammarViolation(index_, "nothing after end_of_song", v_->name_of(token));
        }
        ++index_;
    }

private:
    enum class State { note_or_end, position, instrument, pitch, drum_pitch, duration, finished };

    void mark_range(int base, int count) {
        for (int i = 0; i < count; ++i) allowed_[static_cast<std::size_t>(base + i)] = 1;
    }

    void expect(TokenKind got, TokenKind want, const char* name, int token) const {
        if (got != want) throw GrammarViolation(index_, name, v_->name_of(token));
    }

    const VocabSpec* v_;
    std::vector<unsigned char> allowed_;
    State state_ = State::note_or_end;
    int min_beat_ = 0;
    std::size_t index_ = 0;
};

}  // namespace scoregen

#endif  // SCOREGEN_SAMPLING_HPP
