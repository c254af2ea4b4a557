#ifndef SCOREGEN_TOKENIZER_HPP
#define SCOREGEN_TOKENIZER_HPP

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "scoregen/errors.hpp"
#include "scoregen/score.hpp"
#include "scoregen/vocab.hpp"

namespace scoregen {

/// The four control fields. Empty genre/instrument lists mean "not tagged"
/// (the encoder emits the family's None token).
struct TagSet {
    std::vector<std::string> genres;      // sorted merged-genre classes
    std::optional<std::string> composer;  // canonical lowercase name
    std::optional<Complexity> complexity;
    std::vector<int> instruments;  // sorted unique programs in [0,128]

    bool operator==(const TagSet&) const = default;
};

using TokenSequence = std::vector<int>;

/// Tokens for one note in a sequence: beat, position, instrument, then
/// pitch+duration (melodic) or drum_pitch (drums).
inline void append_note_tokens(TokenSequence& out, const Note& n, const VocabSpec& v) {
    out.push_back(v.beat_token(n.beat));
    out.push_back(v.position_token(n.position));
    out.push_back(v.instrument_token(n.program));
    if (n.program == kDrumProgram) {
        out.push_back(v.drum_pitch_token(n.pitch));
    } else {
        out.push_back(v.pitch_token(n.pitch));
        out.push_back(v.duration_token(n.duration));
    }
}

/// The note-region tokens of a score (everything between start-of-notes and
/// end-of-song), in canonical note order.
inline TokenSequence note_tokens(const Score& score, const VocabSpec& v,
                                 bool truncate_overlong = false, int* truncated_notes = nullptr) {
    TokenSequence out;
    out.reserve(score.notes.size() * 5);
    for (const auto& n : score.notes) {
        if (n.beat >= kMaxBeat) {
            if (!truncate_overlong) throw BeatOverflow(n.beat);
            if (truncated_notes) ++*truncated_notes;
            continue;  // canonical order puts all later notes past the limit too
        }
        append_note_tokens(out, n, v);
    }
    return out;
}

/// The conditioning prefix: start-of-song through start-of-notes, with each
/// tag family's tokens or its None placeholder.
inline TokenSequence tag_prefix(const TagSet& tags, const VocabSpec& v) {
    TokenSequence out;
    out.push_back(v.sos);

    out.push_back(v.sog);
    if (tags.genres.empty()) {
        out.push_back(v.genre_none);
    } else {
        std::vector<std::string> genres = tags.genres;
        std::sort(genres.begin(), genres.end());
        genres.erase(std::unique(genres.begin(), genres.end()), genres.end());
        for (const auto& g : genres) out.push_back(v.genre_token(g));
    }

    out.push_back(v.soc);
    out.push_back(tags.composer ? v.composer_token(*tags.composer) : v.composer_none);

    out.push_back(v.sox);
    out.push_back(tags.complexity ? v.complexity_token(*tags.complexity) : v.complexity_none);

    out.push_back(v.soi);
    if (tags.instruments.empty()) {
        out.push_back(v.tag_instrument_none);
    } else {
        std::vector<int> programs = tags.instruments;
        std::sort(programs.begin(), programs.end());
        programs.erase(std::unique(programs.begin(), programs.end()), programs.end());
        for (const int p : programs) out.push_back(v.instrument_tag_token(p));
    }

    out.push_back(v.son);
    return out;
}

struct EncodeOptions {
    bool truncate_overlong = false;  // drop notes at beat >= kMaxBeat instead of erroring
};

inline TokenSequence encode(const TagSet& tags, const Score& score, const VocabSpec& v,
                            EncodeOptions opts = {}, int* truncated_notes = nullptr) {
    TokenSequence out = tag_prefix(tags, v);
    TokenSequence notes = note_tokens(score, v, opts.truncate_overlong, truncated_notes);
    out.insert(out.end(), notes.begin(), notes.end());
    out.push_back(v.eos);
    return out;
}

struct DecodeResult {
    TagSet tags;
    Score score;
};

namespace tokenizer_detail {

struct PartialNote {
    int beat = -1;
    int position = -1;
    int program = -1;
    int pitch = -1;

    bool started() const { return beat >= 0; }
    void reset() { beat = position = program = pitch = -1; }
};

}  // namespace tokenizer_detail

/// Total decoder for arbitrary (e.g. model-generated) sequences. Ill-placed
/// or unknown tokens are skipped, an incomplete trailing note group is
/// dropped, and a missing end-of-song is tolerated. Tag tokens are read from
/// the region before start-of-notes; note groups from the region after it.
inline DecodeResult decode(const TokenSequence& tokens, const VocabSpec& v) {
    DecodeResult result;
    std::vector<std::string> genres;
    std::vector<int> instruments;

    bool in_notes = false;
    tokenizer_detail::PartialNote cur;
    for (const int id : tokens) {
        const TokenKind kind = v.kind_of(id);
        if (kind == TokenKind::end_of_song) break;
        if (!in_notes) {
            switch (kind) {
                case TokenKind::tag_genre: genres.push_back(v.genres[v.value_of(id)]); break;
                case TokenKind::tag_composer:
                    if (!result.tags.composer) result.tags.composer = v.composers[v.value_of(id)];
                    break;
                case TokenKind::tag_complexity:
                    if (!result.tags.complexity)
                        result.tags.complexity = static_cast<Complexity>(v.value_of(id));
                    break;
                case TokenKind::tag_instrument: instruments.push_back(v.value_of(id)); break;
                case TokenKind::start_of_notes: in_notes = true; break;
                default: break;  // structural / None / ill-placed: skip
            }
            continue;
        }
        switch (kind) {
            case TokenKind::beat:
                cur.reset();  // a beat token always opens a fresh group
                cur.beat = v.value_of(id);
                break;
            case TokenKind::position:
                if (cur.started() && cur.position < 0) cur.position = v.value_of(id);
                break;
            case TokenKind::instrument:
                if (cur.position >= 0 && cur.program < 0) cur.program = v.value_of(id);
                break;
            case TokenKind::pitch:
                if (cur.program >= 0 && cur.program != kDrumProgram && cur.pitch < 0)
                    cur.pitch = v.value_of(id);
                break;
            case TokenKind::duration:
                if (cur.pitch >= 0) {
                    result.score.notes.push_back(
                        Note{cur.beat, cur.position, cur.program, cur.pitch, v.value_of(id)});
                    cur.reset();
                }
                break;
            case TokenKind::drum_pitch:
                if (cur.program == kDrumProgram) {
                    result.score.notes.push_back(Note::drum(cur.beat, cur.position, v.value_of(id)));
                    cur.reset();
                }
                break;
            default: break;  // skip
        }
    }

    std::sort(genres.begin(), genres.end());
    genres.erase(std::unique(genres.begin(), genres.end()), genres.end());
    result.tags.genres = std::move(genres);
    std::sort(instruments.begin(), instruments.end());
    instruments.erase(std::unique(instruments.begin(), instruments.end()), instruments.end());
    result.tags.instruments = std::move(instruments);

    result.score = canonicalize(std::move(result.score));
    return result;
}

/// Strict decoder: accepts exactly the encoder's output grammar, raising
/// GrammarViolation(index, expected, found) on the first deviation.
inline DecodeResult decode_strict(const TokenSequence& tokens, const VocabSpec& v) {
    std::size_t i = 0;
    auto fail = [&](const std::string& expected) -> GrammarViolation {
        const std::string found =
            i < tokens.size() ? v.name_of(tokens[i]) : std::string("end of sequence");
        return GrammarViolation(i, expected, found);
    };
    auto peek_kind = [&]() -> TokenKind {
        return i < tokens.size() ? v.kind_of(tokens[i]) : TokenKind::invalid;
    };
    auto expect = [&](TokenKind k, const std::string& what) {
        if (peek_kind() != k) throw fail(what);
        ++i;
    };

    DecodeResult result;
    expect(TokenKind::start_of_song, "start_of_song");
    expect(TokenKind::start_of_genre, "start_of_genre");
    if (peek_kind() == TokenKind::tag_genre_none) {
        ++i;
    } else if (peek_kind() == TokenKind::tag_genre) {
        while (peek_kind() == TokenKind::tag_genre) {
            result.tags.genres.push_back(v.genres[v.value_of(tokens[i])]);
            ++i;
        }
    } else {
        throw fail("tag_genre or tag_genre_none");
    }

    expect(TokenKind::start_of_composer, "start_of_composer");
    if (peek_kind() == TokenKind::tag_composer_none) {
        ++i;
    } else if (peek_kind() == TokenKind::tag_composer) {
        result.tags.composer = v.composers[v.value_of(tokens[i])];
        ++i;
    } else {
        throw fail("tag_composer or tag_composer_none");
    }

    expect(TokenKind::start_of_complexity, "start_of_complexity");
    if (peek_kind() == TokenKind::tag_complexity_none) {
        ++i;
    } else if (peek_kind() == TokenKind::tag_complexity) {
        result.tags.complexity = static_cast<Complexity>(v.value_of(tokens[i]));
        ++i;
    } else {
        throw fail("tag_complexity or tag_complexity_none");
    }

    expect(TokenKind::start_of_instrument, "start_of_instrument");
    if (peek_kind() == TokenKind::tag_instrument_none) {
        ++i;
    } else if (peek_kind() == TokenKind::tag_instrument) {
        while (peek_kind() == TokenKind::tag_instrument) {
            result.tags.instruments.push_back(v.value_of(tokens[i]));
            ++i;
        }
    } else {
        throw fail("tag_instrument or tag_instrument_none");
    }

    expect(TokenKind::start_of_notes, "start_of_notes");
    while (peek_kind() == TokenKind::beat) {
        Note n;
        n.beat = v.value_of(tokens[i]);
        ++i;
        if (peek_kind() != TokenKind::position) throw fail("position");
        n.position = v.value_of(tokens[i]);
        ++i;
        if (peek_kind() != TokenKind::instrument) throw fail("instrument");
        n.program = v.value_of(tokens[i]);
        ++i;
        if (n.program == kDrumProgram) {
            if (peek_kind() != TokenKind::drum_pitch) throw fail("drum_pitch");
            n.pitch = v.value_of(tokens[i]);
            n.duration = 1;
            ++i;
        } else {
            if (peek_kind() != TokenKind::pitch) throw fail("pitch");
            n.pitch = v.value_of(tokens[i]);
            ++i;
            if (peek_kind() != TokenKind::duration) throw fail("duration");
            n.duration = v.value_of(tokens[i]);
            ++i;
        }
        result.score.notes.push_back(n);
    }
    expect(TokenKind::end_of_song, "beat or end_of_song");
    if (i != tokens.size()) throw fail("end of sequence");

    result.score = canonicalize(std::move(result.score));
    return result;
}

/// Fixed-length (1023) tagger view of a note-region sequence: first 341
/// tokens, 341 centered at the midpoint, and last 341. Shorter sequences are
/// right-padded with pad(0).
inline TokenSequence segment_for_tagger(const TokenSequence& tokens) {
    constexpr int kSegment = 341;
    constexpr int kTotal = 3 * kSegment;  // 1023
    const int n = static_cast<int>(tokens.size());
    TokenSequence out;
    out.reserve(kTotal);
    if (n <= kTotal) {
        out = tokens;
        out.resize(kTotal, 0);
        return out;
    }
    out.insert(out.end(), tokens.begin(), tokens.begin() + kSegment);
    const int mid_start = n / 2 - 170;
    out.insert(out.end(), tokens.begin() + mid_start, tokens.begin() + mid_start + kSegment);
    out.insert(out.end(), tokens.end() - kSegment, tokens.end());
    return out;
}

/// TagSet implied by an entry's normalized metadata plus the score's own
/// instrument set.
inline TagSet tagset_from(const Metadata& md, const Score& score) {
    TagSet t;
    t.genres = md.genre_tags;
    std::sort(t.genres.begin(), t.genres.end());
    t.genres.erase(std::unique(t.genres.begin(), t.genres.end()), t.genres.end());
    t.composer = md.composer;
    t.complexity = md.complexity;
    t.instruments = programs_of(score);
    return t;
}

}  // namespace scoregen

#endif  // SCOREGEN_TOKENIZER_HPP
