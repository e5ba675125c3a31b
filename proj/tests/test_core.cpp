#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "canoe/errors.hpp"
#include "canoe/kg_store.hpp"
#include "canoe/prompts.hpp"
#include "canoe/text_norm.hpp"
#include "canoe/util.hpp"
#include "test_support.hpp"

using namespace canoe;

// ---------------------------------------------------------------------------
// util

TEST_CASE("fnv1a64 is deterministic and input-sensitive") {
    CHECK(fnv1a64("alpha") == fnv1a64("alpha"));
    CHECK(fnv1a64("alpha") != fnv1a64("beta"));
    CHECK(fnv1a64("alpha", 1) != fnv1a64("alpha", 2));
    CHECK(fnv1a64("") == 1469598103934665603ULL);  // empty input returns the seed
}

TEST_CASE("derive_seed separates tags and indices") {
    const auto s = derive_seed(42, "stage");
    CHECK(s == derive_seed(42, "stage"));
    CHECK(s != derive_seed(42, "stage", 1));
    CHECK(s != derive_seed(42, "other"));
    CHECK(s != derive_seed(43, "stage"));
}

TEST_CASE("bounded_uint stays in range and rejects zero") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(bounded_uint(rng, 13) < 13);
    }
    CHECK(bounded_uint(rng, 1) == 0);
    CHECK_THROWS_AS(bounded_uint(rng, 0), NumericError);

    std::mt19937_64 a(3), b(3);
    for (int i = 0; i < 50; ++i) CHECK(bounded_uint(a, 97) == bounded_uint(b, 97));
}

TEST_CASE("uniform01 lies in [0,1)") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const double u = uniform01(rng);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("deterministic_shuffle permutes reproducibly") {
    std::vector<int> v(20);
    std::iota(v.begin(), v.end(), 0);
    auto a = v;
    auto b = v;
    std::mt19937_64 r1(5), r2(5), r3(6);
    deterministic_shuffle(a, r1);
    deterministic_shuffle(b, r2);
    CHECK(a == b);
    CHECK(a != v);  // 20! permutations; identity is effectively impossible
    auto c = v;
    deterministic_shuffle(c, r3);
    CHECK(a != c);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
}

TEST_CASE("sample_indices draws unique in-range indices") {
    std::mt19937_64 rng(9);
    const auto s = sample_indices(rng, 50, 10);
    CHECK(s.size() == 10);
    std::set<size_t> unique(s.begin(), s.end());
    CHECK(unique.size() == 10);
    for (const auto i : s) CHECK(i < 50);
    CHECK_THROWS_AS(sample_indices(rng, 3, 4), CapacityError);
    CHECK(sample_indices(rng, 5, 0).empty());
}

TEST_CASE("sha256_hex matches the published test vectors") {
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("string helpers") {
    CHECK(trim("  x y\t\n") == "x y");
    CHECK(trim("") == "");
    CHECK(trim(" \n ") == "");
    CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(split("", ',') == std::vector<std::string>{""});
    CHECK(contains("haystack", "ays"));
    CHECK_FALSE(contains("haystack", "needle"));
    CHECK(count_occurrences("aaaa", "aa") == 2);  // non-overlapping
    CHECK(count_occurrences("abcabc", "abc") == 2);
    CHECK(count_occurrences("abc", "") == 0);
    CHECK(word_count("one two\tthree\nfour") == 4);
    CHECK(word_count("   ") == 0);
}

TEST_CASE("format_double emits shortest round-trip-ish decimals") {
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-2.5) == "-2.5");
    CHECK(format_double(0.30685281944005469) == "0.3068528194");
}

TEST_CASE("file round trip and missing file error") {
    testing::TempDir dir("util");
    const std::string path = dir.file("blob.txt");
    write_file(path, "line1\nline2\n");
    CHECK(read_file(path) == "line1\nline2\n");
    CHECK_THROWS_AS(read_file(dir.file("missing.txt")), Error);
}

// ---------------------------------------------------------------------------
// text_norm

TEST_CASE("normalize default policy folds case, strips articles and edge punctuation") {
    CHECK(normalize("The  Answer, is PARIS.") == "answer is paris");
    CHECK(normalize("  a  b  ") == "b");
    CHECK(normalize("\"Quoted!\"") == "quoted");
    CHECK(normalize("an apple") == "apple");
    CHECK(normalize("") == "");
    CHECK(normalize("...") == "");
}

TEST_CASE("normalize is idempotent") {
    const std::vector<std::string> samples = {
        "The  Answer, is PARIS.", "", "a an the", "Self-evident -- yes!", "tabs\tand\nnewlines",
    };
    for (const auto& s : samples) {
        const std::string once = normalize(s);
        CHECK(normalize(once) == once);
    }
}

TEST_CASE("match policies can be relaxed individually") {
    MatchPolicy keep_case;
    keep_case.case_fold = false;
    CHECK(normalize("Paris", keep_case) == "Paris");

    MatchPolicy keep_articles;
    keep_articles.article_strip = false;
    CHECK(normalize("the cat", keep_articles) == "the cat");

    CHECK(normalize("A b C.", MatchPolicy::exact()) == "A b C.");
    CHECK(match_equal("PARIS.", "paris"));
    CHECK_FALSE(match_equal("PARIS.", "paris", MatchPolicy::exact()));
}

TEST_CASE("interior punctuation survives edge stripping") {
    CHECK(normalize("o'clock") == "o'clock");
    CHECK(normalize("(self-aware)") == "self-aware");
    CHECK(normalize_tokens("one, two; three") ==
          std::vector<std::string>{"one", "two", "three"});
}

// ---------------------------------------------------------------------------
// prompts

TEST_CASE("prompt library loads all pinned templates") {
    const PromptLibrary lib = PromptLibrary::load_default();
    CHECK(PromptLibrary::names().size() == 15);
    for (const auto& name : PromptLibrary::names()) {
        CHECK_FALSE(lib.text(name).empty());
        CHECK(lib.digest(name) == sha256_hex(lib.text(name)));
    }
    CHECK_THROWS_AS(lib.text("no_such_prompt"), Error);
}

TEST_CASE("tampered or incomplete resource directories are rejected") {
    const PromptLibrary lib = PromptLibrary::load_default();
    testing::TempDir dir("prompts");
    for (const auto& entry : std::filesystem::directory_iterator(lib.directory())) {
        std::filesystem::copy_file(entry.path(), dir.path() / entry.path().filename());
    }
    CHECK_NOTHROW(PromptLibrary::load_from(dir.path().string()));

    // Flip one byte of a template: digest check must fail.
    const std::string victim = (dir.path() / "sys_prompt.txt").string();
    write_file(victim, read_file(victim) + "x");
    CHECK_THROWS_AS(PromptLibrary::load_from(dir.path().string()), ResourceError);

    // Remove the digest registry entirely.
    std::filesystem::remove(dir.path() / "DIGESTS.sha256");
    CHECK_THROWS_AS(PromptLibrary::load_from(dir.path().string()), ResourceError);
}

TEST_CASE("render_prompt handles named, positional and unknown markers") {
    CHECK(render_prompt("X={x}, Y={y}", {{"x", "1"}, {"y", "2"}}) == "X=1, Y=2");
    CHECK(render_prompt("A={}, B={ }", {}, {"first", "second"}) == "A=first, B=second");
    CHECK(render_prompt("keep {unknown} marker", {}) == "keep {unknown} marker");
    CHECK(render_prompt("{x} and {x}", {{"x", "v"}}) == "v and v");
    CHECK_THROWS_AS(render_prompt("{} {}", {}, {"only-one"}), ConfigError);
}

// ---------------------------------------------------------------------------
// kg_store

namespace {

const char* kTinyTsv =
    "# comment line\n"
    "France\tP36\tcapital\tParis\n"
    "Peru\tP36\tcapital\tLima\n"
    "Lima\tP112\tfounder\tPizarro\n"
    "France\tP36\tcapital\tParis\n"   // duplicate
    "Narcissus\tP17\tcountry\tNarcissus\n"  // self loop
    "\n";

}  // namespace

TEST_CASE("triple store ingest: comments, duplicates, self-loops, canonical order") {
    kg::IngestStats stats;
    const auto store = kg::TripleStore::from_text(kTinyTsv, &stats);
    CHECK(stats.triples_added == 3);
    CHECK(stats.duplicates_skipped == 1);
    CHECK(stats.self_loops_skipped == 1);
    CHECK(store.triple_count() == 3);
    CHECK(store.entity_count() == 5);  // france, paris, peru, lima, pizarro
    CHECK(store.relation_count() == 2);
    CHECK(std::is_sorted(store.triples().begin(), store.triples().end(), kg::triple_less));
    CHECK(store.has_entity("france"));
    CHECK_FALSE(store.has_entity("France"));  // ids are normalized forms
}

TEST_CASE("triple store rejects malformed rows with line numbers") {
    CHECK_THROWS_AS(kg::TripleStore::from_text("only\tthree\tfields\n"), ParseError);
    try {
        kg::TripleStore::from_text("ok\tP1\tr\tfine\nbad row\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("serialize round trip preserves content") {
    const auto store = kg::TripleStore::from_text(kTinyTsv);
    const auto again = kg::TripleStore::from_text(store.serialize_text());
    CHECK(again.triple_count() == store.triple_count());
    CHECK(again.serialize_text() == store.serialize_text());
}

TEST_CASE("summary_json reports counts") {
    const auto store = kg::TripleStore::from_text(kTinyTsv);
    const auto json = store.summary_json();
    CHECK(json.find("\"triple_count\":3") != std::string::npos);
    CHECK(json.find("\"entity_count\":5") != std::string::npos);
}

TEST_CASE("sample_triples is seeded and bounded") {
    const auto store = kg::TripleStore::from_text(testing::fixture_tsv(30, 4, 1));
    const auto a = store.sample_triples(10, 99);
    const auto b = store.sample_triples(10, 99);
    CHECK(a.size() == 10);
    REQUIRE(b.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK_THROWS_AS(store.sample_triples(store.triple_count() + 1, 0), CapacityError);
}

TEST_CASE("sampling visits every triple at a fair rate") {
    // Five triples, 10^4 single-triple draws: each should land near 2000.
    const auto store = kg::TripleStore::from_text(
        "A\tP1\tr\tB\nB\tP1\tr\tC\nC\tP1\tr\tD\nD\tP1\tr\tE\nE\tP1\tr\tA\n");
    REQUIRE(store.triple_count() == 5);
    std::map<std::string, int> hits;
    for (int i = 0; i < 10000; ++i) {
        const auto one = store.sample_triples(1, static_cast<std::uint64_t>(i));
        hits[one[0].head.id] += 1;
    }
    REQUIRE(hits.size() == 5);
    for (const auto& [head, count] : hits) {
        INFO("head ", head, " count ", count);
        CHECK(count >= 1800);
        CHECK(count <= 2200);
    }
}

TEST_CASE("make_path validates hop count, chaining and entity repeats") {
    const auto t = [](const char* h, const char* tl) {
        kg::Triple tr;
        tr.head = {normalize(h), h};
        tr.relation = {"P1", "r"};
        tr.tail = {normalize(tl), tl};
        return tr;
    };
    CHECK_THROWS_AS(kg::make_path({t("A", "B")}), Error);  // too short
    CHECK_THROWS_AS(kg::make_path({t("A", "B"), t("C", "D")}), Error);  // broken chain
    CHECK_THROWS_AS(kg::make_path({t("A", "B"), t("B", "A")}), Error);  // repeat
    const auto p = kg::make_path({t("A", "B"), t("B", "C"), t("C", "D")});
    CHECK(p.hops.size() == 3);
    CHECK(p.answer.label == "D");
    CHECK_THROWS_AS(
        kg::make_path({t("A", "B"), t("B", "C"), t("C", "D"), t("D", "E"), t("E", "F")}),
        Error);  // longer than 4 hops
}

TEST_CASE("extract_paths yields chained, repeat-free, seeded paths") {
    const auto store = kg::TripleStore::from_text(testing::fixture_tsv(25, 4, 3));
    for (const std::size_t n : {2u, 3u, 4u}) {
        const auto paths = store.extract_paths(n, 40, 17);
        CHECK_FALSE(paths.empty());
        for (const auto& p : paths) {
            REQUIRE(p.hops.size() == n);
            std::set<std::string> seen{p.hops.front().head.id};
            for (std::size_t i = 0; i < p.hops.size(); ++i) {
                if (i + 1 < p.hops.size()) {
                    CHECK(p.hops[i].tail.id == p.hops[i + 1].head.id);
                }
                CHECK(seen.insert(p.hops[i].tail.id).second);  // no entity repeats
            }
            CHECK(p.answer.id == p.hops.back().tail.id);
        }
        const auto again = store.extract_paths(n, 40, 17);
        REQUIRE(again.size() == paths.size());
        for (std::size_t i = 0; i < paths.size(); ++i) {
            CHECK(again[i].hops.front().head.id == paths[i].hops.front().head.id);
            CHECK(again[i].answer.id == paths[i].answer.id);
        }
        CHECK(store.extract_paths(n, 40, 18).size() == paths.size());
    }
    CHECK_THROWS_AS(store.extract_paths(1, 10, 0), Error);
    CHECK_THROWS_AS(store.extract_paths(5, 10, 0), Error);
    CHECK(store.extract_paths(2, 7, 0).size() == 7);  // truncation at max_paths
}

TEST_CASE("counterfactual substitution swaps the tail and keeps invariants") {
    const auto store = kg::TripleStore::from_text(kTinyTsv);
    const kg::Triple base = store.triples().front();
    kg::Entity cf{"atlantis", "Atlantis"};
    const auto swapped = kg::substitute_counterfactual(base, cf);
    CHECK(swapped.head == base.head);
    CHECK(swapped.relation == base.relation);
    CHECK(swapped.tail.label == "Atlantis");
    CHECK_THROWS_AS(kg::substitute_counterfactual(base, base.tail), Error);

    const auto big = kg::TripleStore::from_text(testing::fixture_tsv(25, 4, 5));
    const auto paths = big.extract_paths(3, 5, 2);
    REQUIRE_FALSE(paths.empty());
    const auto& path = paths.front();
    const auto swapped_path = kg::substitute_counterfactual(path, cf);
    CHECK(swapped_path.answer.label == "Atlantis");
    CHECK(swapped_path.hops.size() == path.hops.size());
    CHECK_THROWS_AS(kg::substitute_counterfactual(path, path.answer), Error);
    // Replacement equal to an on-path entity breaks the no-repeat invariant.
    const kg::Entity clash = path.hops.front().head;
    CHECK_THROWS_AS(kg::substitute_counterfactual(path, clash), Error);
}

TEST_CASE("store-backed counterfactual source proposes a different tail") {
    const auto store = kg::TripleStore::from_text(testing::fixture_tsv(30, 4, 8));
    kg::StoreCfSource source(store);
    const kg::Triple base = store.triples().front();
    std::set<std::string> proposals;
    for (int i = 0; i < 10; ++i) {
        const std::string label = source.propose(base, static_cast<std::uint64_t>(i));
        CHECK_FALSE(label.empty());
        CHECK(normalize(label) != base.tail.id);
        proposals.insert(label);
    }
    CHECK(proposals.size() > 1);  // seeded variety

    // A relation with a single known tail cannot produce an alternative.
    const auto lone = kg::TripleStore::from_text("A\tP9\tonly\tB\n");
    kg::StoreCfSource lone_source(lone);
    CHECK_THROWS_AS(lone_source.propose(lone.triples().front(), 0), CapacityError);
}
