#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evoderm/error.hpp"
#include "evoderm/knowledge_base.hpp"
#include "evoderm/mock_backends.hpp"
#include "support.hpp"

#include <filesystem>

using namespace evoderm;

namespace {

std::shared_ptr<const TextEmbedderPort> embedder() { return std::make_shared<MockTextEmbedder>(32, 3); }

std::string paragraphs(int count, std::size_t len) {
    std::string doc;
    for (int i = 0; i < count; ++i) {
        if (i) doc += "\n\n";
        doc += std::string(len, static_cast<char>('a' + i));
    }
    return doc;
}

}  // namespace

TEST_CASE("policy validation") {
    ChunkPolicy p;
    CHECK_NOTHROW(p.validate());
    p.overlap_chars = p.max_chars;
    CHECK_THROWS_AS(p.validate(), Error);
    p.max_chars = 0;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("paragraphs pack greedily under max_chars") {
    ChunkPolicy p{500, 50, true};
    auto chunks = chunk_document(paragraphs(10, 200), p);
    CHECK(chunks.size() == 5);
    for (const auto& c : chunks) CHECK(c.size() <= 500);
    // Each later chunk opens with the tail of the one before it.
    for (std::size_t i = 1; i < chunks.size(); ++i) {
        std::string tail = chunks[i - 1].substr(chunks[i - 1].size() - 50);
        CHECK(chunks[i].substr(0, 50) == tail);
    }
}

TEST_CASE("without overlap chunks break exactly at paragraphs") {
    ChunkPolicy p{500, 0, true};
    auto chunks = chunk_document(paragraphs(10, 200), p);
    REQUIRE(chunks.size() == 5);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        std::string a(200, static_cast<char>('a' + 2 * i)), b(200, static_cast<char>('a' + 2 * i + 1));
        CHECK(chunks[i] == a + "\n\n" + b);
    }
}

TEST_CASE("every paragraph survives chunking") {
    ChunkPolicy p{300, 40, true};
    std::string doc = paragraphs(6, 120);
    auto chunks = chunk_document(doc, p);
    for (int i = 0; i < 6; ++i) {
        std::string para(120, static_cast<char>('a' + i));
        bool found = false;
        for (const auto& c : chunks) found = found || c.find(para) != std::string::npos;
        CHECK(found);
    }
}

TEST_CASE("long paragraphs split on whitespace and UTF-8 boundaries") {
    std::string word = "\xC3\xA9t\xC3\xA9 ";  // "été "
    std::string doc;
    for (int i = 0; i < 100; ++i) doc += word;
    ChunkPolicy p{64, 8, true};
    auto chunks = chunk_document(doc, p);
    CHECK(chunks.size() > 1);
    for (const auto& c : chunks) {
        CHECK(c.size() <= 64);
        REQUIRE_FALSE(c.empty());
        // never starts with a UTF-8 continuation byte
        CHECK((static_cast<unsigned char>(c.front()) & 0xC0) != 0x80);
        CHECK((static_cast<unsigned char>(c.back()) & 0xC0) != 0xC0);
    }
}

TEST_CASE("ingest, retrieve and dedupe") {
    KnowledgeBase kb(embedder());
    CHECK(kb.retrieve_prior("psoriasis").empty());
    CHECK_THROWS_AS(kb.ingest("   \n\n  ", "empty.md"), Error);
    std::size_t n = kb.ingest(paragraphs(4, 300), "book.md", ChunkPolicy{400, 40, true});
    CHECK(n == kb.size());
    CHECK(kb.ingest(paragraphs(4, 300), "copy.md", ChunkPolicy{400, 40, true}, true) == 0);
    auto hits = kb.retrieve_prior("psoriasis", 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].chunk_id.rfind("book.md#", 0) == 0);
    CHECK(hits[0].score.has_value());
    CHECK(*hits[0].score >= *hits[1].score);
    CHECK(kb.retrieve_prior("psoriasis", 2) == hits);
}

TEST_CASE("save and load keep chunks and embeddings") {
    testing::TempDir dir;
    KnowledgeBase kb(embedder());
    kb.ingest(paragraphs(3, 100), "a.txt");
    kb.save(dir / "kb.json");
    KnowledgeBase back(embedder());
    back.load(dir / "kb.json");
    CHECK(back.to_json() == kb.to_json());
    CHECK(back.retrieve_prior("eczema", 3) == kb.retrieve_prior("eczema", 3));

    KnowledgeBase other(std::make_shared<MockTextEmbedder>(16, 3));
    CHECK_THROWS_AS(other.load(dir / "kb.json"), Error);
}

TEST_CASE("ingest_directory reads txt and md in path order") {
    testing::TempDir dir;
    std::filesystem::create_directories(dir.path / "sub");
    write_file_atomic(dir / "b.md", "beta text");
    write_file_atomic(dir / "a.txt", "alpha text");
    write_file_atomic(dir / "sub/c.md", "gamma text");
    write_file_atomic(dir / "skip.pdf", "nope");
    KnowledgeBase kb(embedder());
    CHECK(kb.ingest_directory(dir.path) == 3);
    auto j = kb.to_json();
    CHECK(j["chunks"][0]["source_doc"] == "a.txt");
    CHECK(j["chunks"][2]["source_doc"] == "sub/c.md");
}
