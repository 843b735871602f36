#pragma once

#include "evoderm/domain.hpp"
#include "evoderm/embedding_index.hpp"
#include "evoderm/ports.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace evoderm {

struct ChunkPolicy {
    std::size_t max_chars = 800;
    std::size_t overlap_chars = 80;
    bool prefer_paragraphs = true;

    void validate() const;
};

/// Splits a document into chunks of at most `max_chars` characters.
///
/// With prefer_paragraphs, paragraphs (separated by blank lines) are packed
/// greedily and joined with "\n\n"; a paragraph longer than max_chars is cut
/// into windows. Each chunk after the first starts with the last
/// overlap_chars of its predecessor when that still fits.
std::vector<std::string> chunk_document(std::string_view document, const ChunkPolicy& policy);

/// Handbook store: embedded chunks searched by exact cosine top-k.
///
/// One writer at a time; retrieval reads an immutable chunk list and never
/// blocks on ingestion.
class KnowledgeBase {
public:
    explicit KnowledgeBase(std::shared_ptr<const TextEmbedderPort> embedder);

    /// Returns the number of chunks stored. With `dedupe`, chunks whose text
    /// is already present are skipped. Throws EmptyDocument.
    std::size_t ingest(std::string_view document, const std::string& source_name, const ChunkPolicy& policy = {},
                       bool dedupe = false);

    /// Ingests every .txt and .md file below `dir`, in path order.
    std::size_t ingest_directory(const std::filesystem::path& dir, const ChunkPolicy& policy = {},
                                 bool dedupe = false);

    /// Top-k chunks for Emb_text(label). Empty when nothing was ingested.
    std::vector<KnowledgeSnippet> retrieve_prior(std::string_view disease_label, std::size_t k = 1) const;

    std::size_t size() const;
    std::size_t dim() const noexcept { return embedder_->dim(); }

    nlohmann::json to_json() const;
    void load_json(const nlohmann::json& payload);
    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    struct Chunk {
        KnowledgeSnippet snippet;
        Embedding embedding;
    };
    struct State {
        std::vector<Chunk> chunks;
        std::vector<IndexRow> rows;
    };

    std::shared_ptr<const TextEmbedderPort> embedder_;
    mutable std::mutex write_mutex_;
    mutable std::mutex publish_mutex_;
    std::shared_ptr<const State> state_;

    std::shared_ptr<const State> current() const;
    void publish(std::vector<Chunk> chunks);
};

}  // namespace evoderm
