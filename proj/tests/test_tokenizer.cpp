#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "scoregen/errors.hpp"
#include "scoregen/tokenizer.hpp"
#include "scoregen/vocab.hpp"

using namespace scoregen;

namespace {
const VocabSpec& vocab() {
    static const VocabSpec v = build_vocab();
    return v;
}
}  // namespace

TEST_CASE("vocabulary layout") {
    const auto& v = vocab();
    CHECK(v.vocab_size == 1812);
    CHECK(v.pad == 0);
    CHECK(v.sos == 1);
    CHECK(v.sog == 2);
    CHECK(v.genre_token("classical & traditional") == 3);
    CHECK(v.genre_none == 11);
    CHECK(v.soc == 12);
    CHECK(v.composer_base == 13);
    CHECK(v.composer_none == 60);
    CHECK(v.sox == 61);
    CHECK(v.complexity_token(Complexity::beginner) == 62);
    CHECK(v.complexity_none == 65);
    CHECK(v.soi == 66);
    CHECK(v.instrument_tag_token(0) == 67);
    CHECK(v.tag_instrument_none == 196);
    CHECK(v.son == 197);
    CHECK(v.eos == 198);
    CHECK(v.beat_token(0) == 199);
    CHECK(v.position_token(0) == 1223);
    CHECK(v.instrument_token(0) == 1235);
    CHECK(v.pitch_token(0) == 1364);
    CHECK(v.duration_token(1) == 1492);
    CHECK(v.duration_token(192) == 1683);
    CHECK(v.drum_pitch_token(0) == 1684);
    CHECK(v.drum_pitch_token(127) == 1811);

    SECTION("every id maps to exactly one kind and back") {
        for (int id = 0; id < v.vocab_size; ++id) {
            CHECK(v.kind_of(id) != TokenKind::invalid);
        }
        CHECK(v.kind_of(-1) == TokenKind::invalid);
        CHECK(v.kind_of(v.vocab_size) == TokenKind::invalid);
    }
    SECTION("duplicate labels are rejected") {
        auto genres = default_genre_classes();
        genres.push_back(genres.front());
        CHECK_THROWS_AS(build_vocab(genres), DuplicateLabel);
    }
    SECTION("composer count matches the retained vocabulary") {
        CHECK(v.composers.size() == 47);
        CHECK(v.genres.size() == 8);
        CHECK(v.complexities.size() == 3);
    }
}

TEST_CASE("vocabulary JSON round trip") {
    const auto& v = vocab();
    const auto j = vocab_to_json(v);
    const VocabSpec w = vocab_from_json(j);
    CHECK(w.version == v.version);
    CHECK(w.vocab_size == v.vocab_size);
    CHECK(w.composers == v.composers);

    SECTION("tampered content hash is rejected") {
        auto bad = j;
        bad["version"] = "deadbeef";
        CHECK_THROWS_AS(vocab_from_json(bad), VocabMismatch);
    }
    SECTION("tampered label list is rejected via the hash") {
        auto bad = j;
        bad["composers"][0] = "someone else";
        CHECK_THROWS_AS(vocab_from_json(bad), VocabMismatch);
    }
}

TEST_CASE("encode skeletons") {
    const auto& v = vocab();
    SECTION("all-None empty score is the 11-token skeleton") {
        const TokenSequence got = encode(TagSet{}, Score{}, v);
        const TokenSequence want = {1, 2, 11, 12, 60, 61, 65, 66, 196, 197, 198};
        CHECK(got == want);
    }
    SECTION("single genre and one piano note") {
        TagSet tags;
        tags.genres = {"jazz & blues"};
        Score s;
        s.notes = {Note{0, 0, 0, 60, 12}};
        const TokenSequence got = encode(tags, canonicalize(s), v);
        const TokenSequence want = {1,
                                    2,
                                    v.genre_token("jazz & blues"),
                                    12,
                                    60,
                                    61,
                                    65,
                                    66,
                                    196,
                                    197,
                                    v.beat_token(0),
                                    v.position_token(0),
                                    v.instrument_token(0),
                                    v.pitch_token(60),
                                    v.duration_token(12),
                                    198};
        CHECK(got == want);
        CHECK(got.size() == 16);
    }
    SECTION("drum notes take four tokens and no duration") {
        Score s;
        s.notes = {Note::drum(0, 0, 36)};
        const TokenSequence got = encode(TagSet{}, canonicalize(s), v);
        const TokenSequence tail(got.end() - 5, got.end());
        const TokenSequence want = {v.beat_token(0), v.position_token(0),
                                    v.instrument_token(kDrumProgram), v.drum_pitch_token(36),
                                    v.eos};
        CHECK(tail == want);
    }
    SECTION("length follows the tag and note counts") {
        Rng rng(48);
        for (int trial = 0; trial < 100; ++trial) {
            const TagSet tags = testing::random_tagset(rng, v);
            const Score s = testing::random_score(rng);
            const TokenSequence seq = encode(tags, s, v);
            std::size_t want = 11;
            if (!tags.genres.empty()) want += tags.genres.size() - 1;
            if (!tags.instruments.empty()) want += tags.instruments.size() - 1;
            for (const auto& n : s.notes) want += n.is_drum() ? 4 : 5;
            CHECK(seq.size() == want);
        }
    }
    SECTION("first token after start-of-genre depends only on the tag set") {
        TagSet tags;
        tags.genres = {"urban"};
        Rng rng(49);
        for (int trial = 0; trial < 20; ++trial) {
            const TokenSequence seq = encode(tags, testing::random_score(rng), v);
            CHECK(seq[2] == v.genre_token("urban"));
        }
    }
    SECTION("beats beyond the vocabulary overflow or truncate") {
        Score s;
        s.notes = {Note{kMaxBeat, 0, 0, 60, 12}, Note{0, 0, 0, 60, 12}};
        s = canonicalize(s);
        CHECK_THROWS_AS(encode(TagSet{}, s, v), BeatOverflow);
        int dropped = 0;
        const TokenSequence seq = encode(TagSet{}, s, v, {.truncate_overlong = true}, &dropped);
        CHECK(dropped == 1);
        CHECK(seq.size() == 11 + 5);
    }
    SECTION("unknown tags are rejected") {
        TagSet tags;
        tags.genres = {"vaporwave"};
        CHECK_THROWS_AS(encode(tags, Score{}, v), UnknownGenre);
        tags.genres.clear();
        tags.composer = "nobody in particular";
        CHECK_THROWS_AS(encode(tags, Score{}, v), UnknownComposer);
    }
}

TEST_CASE("decode") {
    const auto& v = vocab();
    SECTION("round trip over random tag sets and scores") {
        Rng rng(50);
        for (int trial = 0; trial < 300; ++trial) {
            const TagSet tags = testing::random_tagset(rng, v);
            const Score s = testing::random_score(rng);
            const TokenSequence seq = encode(tags, s, v);

            const DecodeResult rec = decode(seq, v);
            CHECK(rec.tags == tags);
            CHECK(rec.score.notes == s.notes);

            const DecodeResult strict = decode_strict(seq, v);
            CHECK(strict.tags == tags);
            CHECK(strict.score.notes == s.notes);
        }
    }
    SECTION("truncated final group is dropped in recovery") {
        Score s;
        s.notes = {Note{0, 0, 0, 60, 12}};
        TokenSequence seq = encode(TagSet{}, canonicalize(s), v);
        seq.pop_back();  // EOS
        seq.push_back(v.beat_token(3));
        seq.push_back(v.position_token(2));
        const DecodeResult rec = decode(seq, v);
        CHECK(rec.score.notes == s.notes);
    }
    SECTION("missing end-of-song is tolerated") {
        Score s;
        s.notes = {Note{0, 0, 0, 60, 12}};
        TokenSequence seq = encode(TagSet{}, canonicalize(s), v);
        seq.pop_back();
        CHECK(decode(seq, v).score.notes == s.notes);
    }
    SECTION("strict mode reports the first violation") {
        const TokenSequence seq = {v.sos, v.son, v.eos};
        try {
            decode_strict(seq, v);
            FAIL("expected GrammarViolation");
        } catch (const GrammarViolation& e) {
            CHECK(e.index == 1);
            CHECK(e.expected == "start_of_genre");
        }
    }
    SECTION("recovery decoding of arbitrary id soup stays valid") {
        Rng rng(51);
        for (int trial = 0; trial < 400; ++trial) {
            TokenSequence seq(rng.below(256));
            for (auto& id : seq)
                id = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.vocab_size) + 8)) - 4;
            const DecodeResult rec = decode(seq, v);
            for (const auto& n : rec.score.notes) validate_note(n);
            CHECK(canonicalize(rec.score) == rec.score);
        }
    }
}

TEST_CASE("segment_for_tagger") {
    auto iota = [](int n) {
        TokenSequence t(n);
        for (int i = 0; i < n; ++i) t[i] = i + 1;  // avoid pad id so padding is visible
        return t;
    };
    SECTION("long sequences take start, centered middle, and end") {
        const TokenSequence out = segment_for_tagger(iota(3000));
        REQUIRE(out.size() == 1023);
        CHECK(out[0] == 1);
        CHECK(out[340] == 341);
        CHECK(out[341] == 1331);   // token at index 1330
        CHECK(out[681] == 1671);   // token at index 1670
        CHECK(out[682] == 2660);   // token at index 2659
        CHECK(out[1022] == 3000);  // last token
    }
    SECTION("short sequences are right-padded") {
        const TokenSequence out = segment_for_tagger(iota(500));
        REQUIRE(out.size() == 1023);
        CHECK(out[499] == 500);
        for (int i = 500; i < 1023; ++i) REQUIRE(out[i] == 0);
    }
    SECTION("exact fit is the identity") {
        const TokenSequence in = iota(1023);
        CHECK(segment_for_tagger(in) == in);
    }
    SECTION("boundary just past the fit stays disjoint and ordered") {
        const TokenSequence out = segment_for_tagger(iota(1024));
        REQUIRE(out.size() == 1023);
        CHECK(out[340] == 341);
        CHECK(out[341] == 343);  // middle window starts at index 342
        CHECK(out[682] == 684);  // last window starts at index 683
    }
}
