#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "scoregen/errors.hpp"
#include "scoregen/score.hpp"
#include "scoregen/score_json.hpp"

using namespace scoregen;

TEST_CASE("canonicalize basics") {
    SECTION("empty score stays empty") {
        Score s;
        CHECK(canonicalize(s).notes.empty());
    }
    SECTION("exact duplicates collapse to one note") {
        Score s;
        s.notes = {Note{0, 0, 0, 60, 12}, Note{0, 0, 0, 60, 12}};
        CHECK(canonicalize(s).notes.size() == 1);
    }
    SECTION("notes sort by (beat, position, program, pitch, duration)") {
        Score s;
        s.notes = {Note{1, 0, 0, 64, 12}, Note{0, 6, 0, 60, 12}};
        const Score c = canonicalize(s);
        REQUIRE(c.notes.size() == 2);
        CHECK(c.notes[0] == Note{0, 6, 0, 60, 12});
        CHECK(c.notes[1] == Note{1, 0, 0, 64, 12});
    }
    SECTION("drum notes are forced to duration 1") {
        Score s;
        s.notes = {Note{0, 0, kDrumProgram, 36, 48}};
        CHECK(canonicalize(s).notes[0].duration == 1);
    }
    SECTION("out-of-range fields are rejected") {
        Score s;
        s.notes = {Note{0, 12, 0, 60, 12}};
        CHECK_THROWS_AS(canonicalize(s), OutOfRangeField);
        s.notes = {Note{-1, 0, 0, 60, 12}};
        CHECK_THROWS_AS(canonicalize(s), OutOfRangeField);
        s.notes = {Note{0, 0, 129, 60, 12}};
        CHECK_THROWS_AS(canonicalize(s), OutOfRangeField);
        s.notes = {Note{0, 0, 0, 128, 12}};
        CHECK_THROWS_AS(canonicalize(s), OutOfRangeField);
        s.notes = {Note{0, 0, 0, 60, 0}};
        CHECK_THROWS_AS(canonicalize(s), OutOfRangeField);
        s.notes = {Note{0, 0, 0, 60, kMaxDuration + 1}};
        CHECK_THROWS_AS(canonicalize(s), OutOfRangeField);
    }
    SECTION("time signatures sort and deduplicate by start beat, last wins") {
        Score s;
        s.time_signatures = {TimeSignature{4, 3, 4}, TimeSignature{0, 4, 4},
                             TimeSignature{4, 6, 8}};
        const Score c = canonicalize(s);
        REQUIRE(c.time_signatures.size() == 2);
        CHECK(c.time_signatures[0] == TimeSignature{0, 4, 4});
        CHECK(c.time_signatures[1] == TimeSignature{4, 6, 8});
    }
    SECTION("idempotence on random scores") {
        Rng rng(41);
        for (int trial = 0; trial < 200; ++trial) {
            const Score s = testing::random_score(rng);
            CHECK(canonicalize(s) == s);
        }
    }
}

TEST_CASE("bars_of") {
    auto score_to_beat = [](int last_beat, std::vector<TimeSignature> ts = {}) {
        Score s;
        s.notes = {Note{last_beat, 0, 0, 60, 12}, Note{0, 0, 0, 60, 12}};
        s.time_signatures = std::move(ts);
        return canonicalize(s);
    };

    SECTION("default 4/4, notes up to beat 7") {
        const auto bars = bars_of(score_to_beat(7));
        CHECK(bars == std::vector<Bar>{{0, 4}, {4, 4}});
    }
    SECTION("3/4 from beat 0, notes to beat 5") {
        const auto bars = bars_of(score_to_beat(5, {{0, 3, 4}}));
        CHECK(bars == std::vector<Bar>{{0, 3}, {3, 3}});
    }
    SECTION("6/8 is three beats per bar") {
        const auto bars = bars_of(score_to_beat(2, {{0, 6, 8}}));
        CHECK(bars == std::vector<Bar>{{0, 3}});
    }
    SECTION("empty score has no bars") { CHECK(bars_of(Score{}).empty()); }
    SECTION("bars never cross a time-signature change") {
        const auto bars = bars_of(score_to_beat(8, {{0, 4, 4}, {6, 3, 4}}));
        CHECK(bars == std::vector<Bar>{{0, 4}, {4, 2}, {6, 3}});
    }
    SECTION("degenerate signatures keep a minimum bar of one beat") {
        CHECK(beats_per_bar(TimeSignature{0, 1, 32}) == 1);
        CHECK(beats_per_bar(TimeSignature{0, 6, 8}) == 3);
        CHECK(beats_per_bar(TimeSignature{0, 7, 8}) == 4);  // 3.5 rounds away from zero
    }
    SECTION("contiguous and covering on random scores") {
        Rng rng(42);
        for (int trial = 0; trial < 200; ++trial) {
            const Score s = testing::random_score(rng);
            const auto bars = bars_of(s);
            if (s.notes.empty()) {
                CHECK(bars.empty());
                continue;
            }
            REQUIRE(!bars.empty());
            CHECK(bars.front().start_beat == 0);
            for (std::size_t i = 0; i + 1 < bars.size(); ++i) {
                CHECK(bars[i].beat_count >= 1);
                CHECK(bars[i].start_beat + bars[i].beat_count == bars[i + 1].start_beat);
            }
            int last_beat = 0;
            for (const auto& n : s.notes) last_beat = std::max(last_beat, n.beat);
            CHECK(bars.back().start_beat <= last_beat);
            CHECK(bars.back().start_beat + bars.back().beat_count > last_beat);
        }
    }
}

TEST_CASE("programs_of lists distinct programs ascending") {
    Score s;
    s.notes = {Note{0, 0, 40, 60, 1}, Note{0, 0, 0, 60, 1}, Note::drum(0, 0, 36),
               Note{1, 0, 40, 62, 1}};
    s = canonicalize(s);
    CHECK(programs_of(s) == std::vector<int>{0, 40, kDrumProgram});
}

TEST_CASE("score JSON") {
    SECTION("round trip preserves random scores") {
        Rng rng(43);
        for (int trial = 0; trial < 100; ++trial) {
            const Score s = testing::random_score(rng);
            CHECK(score_from_json(score_to_json(s)) == s);
        }
    }
    SECTION("negative pitches are dropped and counted") {
        const auto j = nlohmann::json::parse(R"({
            "notes": [
                {"beat":0,"position":0,"pitch":-5,"duration":12,"program":0},
                {"beat":0,"position":0,"pitch":60,"duration":12,"program":0}
            ]})");
        MidiImportReport report;
        const Score s = score_from_json(j, &report);
        CHECK(s.notes.size() == 1);
        CHECK(report.notes_dropped_negative_pitch == 1);
        CHECK(report.notes_kept == 1);
    }
    SECTION("overlong durations are clipped and counted") {
        const auto j = nlohmann::json::parse(R"({
            "notes": [{"beat":0,"position":0,"pitch":60,"duration":500,"program":0}]})");
        MidiImportReport report;
        const Score s = score_from_json(j, &report);
        REQUIRE(s.notes.size() == 1);
        CHECK(s.notes[0].duration == kMaxDuration);
        CHECK(report.notes_clipped_duration == 1);
    }
    SECTION("unknown keys are ignored") {
        const auto j = nlohmann::json::parse(R"({
            "notes": [{"beat":0,"position":0,"pitch":60,"duration":12,"program":0,"velocity":99}],
            "layout": {"page": 1}})");
        CHECK(score_from_json(j).notes.size() == 1);
    }
    SECTION("absent optional metadata stays absent") {
        const Score s = score_from_json(nlohmann::json::parse(R"({"notes":[]})"));
        CHECK(!s.metadata.composer);
        CHECK(!s.metadata.tempo_qpm);
        CHECK(s.metadata.genre_tags.empty());
        CHECK(s.metadata.genre_source == GenreSource::absent);
    }
    SECTION("metadata fields survive a round trip") {
        Score s;
        s.notes = {Note{0, 0, 0, 60, 12}};
        s.metadata.genre_tags = {"jazz & blues", "urban"};
        s.metadata.genre_source = GenreSource::tagger;
        s.metadata.composer = "wolfgang amadeus mozart";
        s.metadata.complexity = Complexity::intermediate;
        s.metadata.free_tags = {"waltz", "wedding"};
        s.metadata.key = KeySignature{-3, KeyMode::minor};
        s.metadata.tempo_qpm = 132.5;
        s.metadata.user_stats = UserStats{10, 5, 2};
        s.metadata.rating = 4.5;
        s.metadata.license = License::creative_commons;
        s = canonicalize(s);
        CHECK(score_from_json(score_to_json(s)) == s);
    }
}
