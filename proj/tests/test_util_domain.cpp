#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evoderm/csv.hpp"
#include "evoderm/domain.hpp"
#include "evoderm/error.hpp"
#include "evoderm/serialization.hpp"
#include "evoderm/util.hpp"
#include "support.hpp"

#include <cmath>
#include <limits>

using namespace evoderm;

TEST_CASE("stable_hash is seed sensitive and repeatable") {
    CHECK(stable_hash("abc") == stable_hash("abc"));
    CHECK(stable_hash("abc") != stable_hash("abd"));
    CHECK(stable_hash("abc", 1) != stable_hash("abc", 2));
    CHECK(hex_digest("abc").size() == 16);
    CHECK(derive_seed(7, 0) != derive_seed(7, 1));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("unit_interval and uniform_index stay in range") {
    CHECK(unit_interval(0) == 0.0);
    CHECK(unit_interval(~0ULL) < 1.0);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) CHECK(uniform_index(rng, 7) < 7);
}

TEST_CASE("tokenize_terms keeps inner punctuation") {
    auto terms = tokenize_terms("  Silvery-scale, well-demarcated   PLAQUE. (auspitz)  ;; ");
    CHECK(terms == std::vector<std::string>{"silvery-scale", "well-demarcated", "plaque", "auspitz"});
    CHECK(term_set("a b a").size() == 2);
    CHECK(normalize_text("  Mixed \t CASE\n text ") == "mixed case text");
}

TEST_CASE("base64 round trip") {
    for (std::string s : {"", "f", "fo", "foo", "foob", "fooba", "foobar"}) {
        CHECK(base64_decode(base64_encode(as_bytes(s))) == Bytes(s.begin(), s.end()));
    }
    CHECK(base64_encode(as_bytes("foobar")) == "Zm9vYmFy");
    CHECK_THROWS_AS(base64_decode("Zm9v!"), Error);
}

TEST_CASE("format_double round trips") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.875, 0.0}) CHECK(parse_double(format_double(x)) == x);
    CHECK_THROWS_AS(parse_double("1.5x"), Error);
}

TEST_CASE("csv parsing handles quotes and blank lines") {
    auto rows = csv::parse("a,b\r\n\"x, y\",\"he said \"\"hi\"\"\"\n\nlast,\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1] == csv::Row{"x, y", "he said \"hi\""});
    CHECK(rows[2] == csv::Row{"last", ""});
    CHECK(csv::escape("plain") == "plain");
    CHECK(csv::escape("a,b") == "\"a,b\"");
    CHECK_THROWS_AS(csv::parse("a,\"open\n"), Error);
}

TEST_CASE("normalize_label applies NFC") {
    std::string decomposed = "Ecze\xCC\x81ma";  // e + combining acute
    std::string composed = "Ecz\xC3\xA9ma";
    CHECK(normalize_label(decomposed) == composed);
    CHECK(normalize_label("Psoriasis") == "Psoriasis");
}

TEST_CASE("validate_entry reports the first violated invariant") {
    MemoryEntry e{"c1", Embedding({1.0, 0.0}), "scale", "psoriasis", 0};
    CHECK_NOTHROW(validate_entry(e, 2));
    auto code_of = [](auto fn) {
        try {
            fn();
        } catch (const Error& err) {
            return err.code();
        }
        return ErrorCode::InvalidArgument;
    };
    CHECK(code_of([&] { validate_entry(e, 3); }) == ErrorCode::DimensionMismatch);
    auto bad = e;
    bad.key_findings = "  ";
    CHECK(code_of([&] { validate_entry(bad, 2); }) == ErrorCode::EmptyFindings);
    bad = e;
    bad.diagnosis = "";
    CHECK(code_of([&] { validate_entry(bad, 2); }) == ErrorCode::EmptyDiagnosis);
    bad = e;
    bad.embedding = Embedding({std::numeric_limits<double>::quiet_NaN(), 1.0});
    CHECK(code_of([&] { validate_entry(bad, 2); }) == ErrorCode::NonFiniteEmbedding);
    bad.embedding = Embedding({0.0, 0.0});
    CHECK(code_of([&] { validate_entry(bad, 2); }) == ErrorCode::ZeroVector);
}

TEST_CASE("candidates sort by confidence then label") {
    std::vector<CandidateDiagnosis> c{{"b", 0.2}, {"a", 0.2}, {"c", 0.6}};
    sort_candidates(c);
    CHECK(c[0].label == "c");
    CHECK(c[1].label == "a");
    CHECK(c[2].label == "b");
}

TEST_CASE("stage records must carry the canonical name") {
    StageRecord r{3, std::string(kStageNames[2]), "d", "x", std::nullopt};
    CHECK(stage_record_consistent(r));
    r.stage_index = 4;
    CHECK_FALSE(stage_record_consistent(r));
    r.stage_index = 0;
    CHECK_FALSE(stage_record_consistent(r));
}

TEST_CASE("domain types survive JSON") {
    MemoryEntry e{"c1", Embedding({0.1, -0.3}), "scale", "psoriasis", 4};
    nlohmann::json j = e;
    CHECK(j.get<MemoryEntry>() == e);
    GuidelineVersion g{"psoriasis", 2, "a; b", {"c1", "c2"}, 0.5, 9};
    j = g;
    CHECK(j.get<GuidelineVersion>() == g);
}

TEST_CASE("atomic writes replace file contents") {
    testing::TempDir dir;
    write_file_atomic(dir / "f.txt", "one");
    write_file_atomic(dir / "f.txt", "two");
    CHECK(read_file_text(dir / "f.txt") == "two");
    CHECK_THROWS_AS(read_file_text(dir / "missing"), Error);
}
