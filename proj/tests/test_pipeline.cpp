#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "scoregen/pipeline.hpp"

using namespace scoregen;

TEST_CASE("normalize_composer") {
    const ComposerTable table = default_composer_table();
    SECTION("well-known aliases resolve to full canonical names") {
        CHECK(normalize_composer("mozart", table) == "wolfgang amadeus mozart");
        CHECK(normalize_composer("bach", table) == "johann sebastian bach");
        CHECK(normalize_composer("rachmaninov", table) == "sergei rachmaninoff");
    }
    SECTION("case and whitespace fold before lookup") {
        CHECK(normalize_composer("MOZART ", table) == "wolfgang amadeus mozart");
        CHECK(normalize_composer("  J.S.   Bach\t", table) == "johann sebastian bach");
        CHECK(normalize_composer("Ludwig van Beethoven", table) == "ludwig van beethoven");
    }
    SECTION("non-names are rejected") {
        CHECK(!normalize_composer("www.example.com", table));
        CHECK(!normalize_composer("http://scores.example.org/x", table));
        CHECK(!normalize_composer("great composer 2012", table));
        CHECK(!normalize_composer("arranged by someone from the old town band", table));
        CHECK(!normalize_composer("", table));
    }
    SECTION("unknown names fall outside the retained vocabulary") {
        CHECK(!normalize_composer("some hobbyist", table));
    }
    SECTION("idempotent on its own outputs") {
        for (const auto& [alias, canonical] : default_composer_aliases()) {
            const auto once = normalize_composer(alias, table);
            REQUIRE(once == canonical);
            CHECK(normalize_composer(*once, table) == once);
        }
        for (const auto& name : table.retained)
            CHECK(normalize_composer(name, table) == name);
    }
}

TEST_CASE("merge_genres") {
    const GenreMergeTable table = default_genre_table();
    SECTION("documented merges") {
        CHECK(merge_genres({"hip hop", "funk&soul"}, table) ==
              std::vector<std::string>{"urban"});
        CHECK(merge_genres({"pop", "rock", "metal"}, table) ==
              std::vector<std::string>{"rock & metal"});
        CHECK(merge_genres({"classical"}, table) ==
              std::vector<std::string>{"classical & traditional"});
    }
    SECTION("excluded noisy genres are dropped") {
        CHECK(merge_genres({"darkwave"}, table).empty());
        CHECK(merge_genres({"experimental"}, table).empty());
        CHECK(merge_genres({}, table).empty());
    }
    SECTION("folding applies to raw tags") {
        CHECK(merge_genres({"  Hip Hop "}, table) == std::vector<std::string>{"urban"});
    }
    SECTION("output is always a sorted subset of the 8 classes") {
        const std::set<std::string> classes(table.classes.begin(), table.classes.end());
        REQUIRE(classes.size() == 8);
        Rng rng(54);
        std::vector<std::string> pool = {"jazz",   "blues", "darkwave", "zydeco", "pop",
                                         "reggae&ska", "Classical", "noise",    "disco"};
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::string> raw;
            const int n = static_cast<int>(rng.below(6));
            for (int i = 0; i < n; ++i) raw.push_back(pool[rng.below(pool.size())]);
            const auto merged = merge_genres(raw, table);
            CHECK(std::is_sorted(merged.begin(), merged.end()));
            CHECK(std::adjacent_find(merged.begin(), merged.end()) == merged.end());
            for (const auto& cls : merged) CHECK(classes.count(cls) == 1);
        }
    }
}

TEST_CASE("make_splits") {
    auto ids_of = [](int n) {
        std::vector<std::string> ids;
        for (int i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
        return ids;
    };
    SECTION("100 ids split 90/5/5") {
        const Splits s = make_splits(ids_of(100), 7);
        CHECK(s.train.size() == 90);
        CHECK(s.valid.size() == 5);
        CHECK(s.test.size() == 5);
    }
    SECTION("single id goes to train") {
        const Splits s = make_splits(ids_of(1), 7);
        CHECK(s.train.size() == 1);
        CHECK(s.valid.empty());
        CHECK(s.test.empty());
    }
    SECTION("same ids and seed give the identical partition") {
        const Splits a = make_splits(ids_of(57), 123);
        const Splits b = make_splits(ids_of(57), 123);
        CHECK(a.train == b.train);
        CHECK(a.valid == b.valid);
        CHECK(a.test == b.test);
        const Splits c = make_splits(ids_of(57), 124);
        CHECK(a.train != c.train);  // different seed shuffles differently
    }
    SECTION("duplicate ids are rejected") {
        auto ids = ids_of(5);
        ids.push_back("id3");
        CHECK_THROWS_AS(make_splits(ids, 7), DuplicateId);
    }
    SECTION("partition property for all small n") {
        for (int n = 1; n <= 40; ++n) {
            const auto ids = ids_of(n);
            const Splits s = make_splits(ids, 1000 + n);
            CHECK(s.train.size() == (n * 9 + 9) / 10);
            CHECK(s.valid.size() == static_cast<std::size_t>(n / 20));
            std::set<std::string> all;
            for (const auto* part : {&s.train, &s.valid, &s.test})
                for (const auto& id : *part) CHECK(all.insert(id).second);
            CHECK(all == std::set<std::string>(ids.begin(), ids.end()));
        }
    }
}

TEST_CASE("filter_corpus") {
    Score one_note;
    one_note.notes = {Note{0, 0, 0, 60, 12}};
    one_note = canonicalize(one_note);

    SECTION("clean entries are kept") {
        CHECK(filter_corpus(one_note, MidiImportReport{1, 0, 0, 0}) == DropReason::kept);
    }
    SECTION("negative pitches drop the entry") {
        MidiImportReport r;
        r.notes_dropped_negative_pitch = 2;
        CHECK(filter_corpus(one_note, r) == DropReason::negative_pitch);
    }
    SECTION("empty scores drop as non-GM") {
        CHECK(filter_corpus(Score{}, MidiImportReport{}) == DropReason::non_gm);
    }
}

TEST_CASE("shipped tables match the built-in defaults") {
    auto slurp = [](const std::string& path) {
        std::ifstream in(path);
        REQUIRE(in.good());
        std::stringstream ss;
        ss << in.rdbuf();
        return nlohmann::json::parse(ss.str());
    };
    const std::string root = SCOREGEN_SOURCE_DIR;

    const auto genre_json = slurp(root + "/data/genre_merge.json");
    const GenreMergeTable genre_table = genre_table_from_json(genre_json);
    CHECK(genre_table.classes == default_genre_table().classes);
    CHECK(genre_table.merge == default_genre_table().merge);
    CHECK(genre_table_to_json(default_genre_table()) == genre_json);

    const auto composer_json = slurp(root + "/data/composer_aliases.json");
    const ComposerTable composer_table = composer_table_from_json(composer_json);
    CHECK(composer_table.retained == default_composer_table().retained);
    CHECK(composer_table.aliases == default_composer_table().aliases);
    CHECK(composer_table_to_json(default_composer_table()) == composer_json);

    CHECK(composer_table.retained.size() == 47);
    CHECK(std::is_sorted(composer_table.retained.begin(), composer_table.retained.end()));
}

TEST_CASE("retain_composers thresholds corpus counts") {
    const std::unordered_map<std::string, long> counts = {
        {"wolfgang amadeus mozart", 250},
        {"johann sebastian bach", 100},
        {"some hobbyist", 99},
    };
    CHECK(retain_composers(counts) ==
          std::vector<std::string>{"johann sebastian bach", "wolfgang amadeus mozart"});
    CHECK(retain_composers(counts, 200) ==
          std::vector<std::string>{"wolfgang amadeus mozart"});
}

TEST_CASE("manifest entries round trip") {
    ManifestEntry e;
    e.id = "song-42";
    e.score_path = "scores/song-42.json";
    e.metadata.genre_tags = {"urban"};
    e.metadata.genre_source = GenreSource::user;
    e.metadata.composer = "scott joplin";
    e.metadata.tempo_qpm = 96;
    CHECK(manifest_entry_from_json(manifest_entry_to_json(e)) == e);
}
