#include "evoderm/knowledge_base.hpp"

#include "evoderm/error.hpp"
#include "evoderm/serialization.hpp"
#include "evoderm/snapshot_io.hpp"
#include "evoderm/util.hpp"

#include <algorithm>
#include <unordered_set>

namespace evoderm {

namespace fs = std::filesystem;
using nlohmann::json;

void ChunkPolicy::validate() const {
    if (max_chars == 0) throw Error(ErrorCode::InvalidArgument, "max_chars must be positive");
    if (overlap_chars >= max_chars) throw Error(ErrorCode::InvalidArgument, "overlap_chars must be below max_chars");
}

namespace {

bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

// Largest cut <= pos that does not split a UTF-8 sequence.
std::size_t char_boundary(std::string_view s, std::size_t pos) {
    while (pos > 0 && pos < s.size() && is_continuation(s[pos])) --pos;
    return pos;
}

std::vector<std::string> paragraphs_of(std::string_view doc) {
    std::vector<std::string> out;
    std::string current;
    std::size_t pos = 0;
    while (pos <= doc.size()) {
        auto eol = doc.find('\n', pos);
        if (eol == std::string_view::npos) eol = doc.size();
        std::string line = trim(doc.substr(pos, eol - pos));
        if (line.empty()) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            if (!current.empty()) current += '\n';
            current += line;
        }
        pos = eol + 1;
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

// Cuts text into windows of at most max_chars, backing off to whitespace when
// a break exists in the second half of the window.
void split_long(std::string_view text, const ChunkPolicy& policy, std::vector<std::string>& out) {
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = std::min(text.size(), start + policy.max_chars);
        if (end < text.size()) {
            auto space = text.find_last_of(" \t\n", end);
            if (space != std::string_view::npos && space > start + policy.max_chars / 2) end = space;
            end = char_boundary(text, end);
            if (end <= start) end = std::min(text.size(), start + policy.max_chars);
        }
        std::string piece = trim(text.substr(start, end - start));
        if (!piece.empty()) out.push_back(std::move(piece));
        if (end >= text.size()) break;
        std::size_t next = end > policy.overlap_chars ? end - policy.overlap_chars : end;
        next = char_boundary(text, std::max(next, start + 1));
        start = next > start ? next : end;
    }
}

}  // namespace

std::vector<std::string> chunk_document(std::string_view document, const ChunkPolicy& policy) {
    policy.validate();
    std::vector<std::string> chunks;
    if (!policy.prefer_paragraphs) {
        split_long(document, policy, chunks);
        return chunks;
    }

    std::string current;
    auto overlap_prefix = [&](std::size_t incoming) -> std::string {
        if (policy.overlap_chars == 0 || chunks.empty()) return {};
        const std::string& prev = chunks.back();
        std::size_t from = prev.size() > policy.overlap_chars ? prev.size() - policy.overlap_chars : 0;
        while (from < prev.size() && is_continuation(prev[from])) ++from;
        std::string tail = trim(std::string_view(prev).substr(from));
        if (tail.empty() || tail.size() + 2 + incoming > policy.max_chars) return {};
        return tail + "\n\n";
    };

    for (const auto& para : paragraphs_of(document)) {
        if (para.size() > policy.max_chars) {
            if (!current.empty()) chunks.push_back(std::move(current));
            current.clear();
            split_long(para, policy, chunks);
            continue;
        }
        if (current.empty()) {
            current = overlap_prefix(para.size()) + para;
        } else if (current.size() + 2 + para.size() <= policy.max_chars) {
            current += "\n\n";
            current += para;
        } else {
            chunks.push_back(std::move(current));
            current = overlap_prefix(para.size()) + para;
        }
    }
    if (!current.empty()) chunks.push_back(std::move(current));
    return chunks;
}

KnowledgeBase::KnowledgeBase(std::shared_ptr<const TextEmbedderPort> embedder)
    : embedder_(std::move(embedder)), state_(std::make_shared<const State>()) {
    if (!embedder_) throw Error(ErrorCode::InvalidArgument, "knowledge base needs a text embedder");
}

std::shared_ptr<const KnowledgeBase::State> KnowledgeBase::current() const {
    std::lock_guard lock(publish_mutex_);
    return state_;
}

void KnowledgeBase::publish(std::vector<Chunk> chunks) {
    auto next = std::make_shared<State>();
    next->chunks = std::move(chunks);
    next->rows.reserve(next->chunks.size());
    for (std::size_t i = 0; i < next->chunks.size(); ++i) {
        const auto& c = next->chunks[i];
        next->rows.push_back({&c.embedding, squared_norm(c.embedding.values()), i, c.snippet.chunk_id});
    }
    std::lock_guard lock(publish_mutex_);
    state_ = std::move(next);
}

std::size_t KnowledgeBase::ingest(std::string_view document, const std::string& source_name,
                                  const ChunkPolicy& policy, bool dedupe) {
    if (trim(document).empty()) throw Error(ErrorCode::EmptyDocument, "document '" + source_name + "' is empty");
    auto pieces = chunk_document(document, policy);

    std::lock_guard writer(write_mutex_);
    auto base = current();
    std::vector<Chunk> chunks = base->chunks;
    std::unordered_set<std::string> seen;
    if (dedupe) {
        for (const auto& c : chunks) seen.insert(c.snippet.text);
    }

    // Chunk ids stay unique across repeated ingests of the same source.
    std::size_t ordinal = 0;
    for (const auto& c : chunks) {
        if (c.snippet.source_doc == source_name) ++ordinal;
    }

    std::size_t added = 0;
    for (auto& text : pieces) {
        if (dedupe && !seen.insert(text).second) continue;
        Embedding e = embedder_->embed_text(text);
        validate_embedding(e, embedder_->dim());
        KnowledgeSnippet snippet{source_name + "#" + std::to_string(ordinal++), source_name, std::move(text), std::nullopt};
        chunks.push_back({std::move(snippet), std::move(e)});
        ++added;
    }
    publish(std::move(chunks));
    return added;
}

std::size_t KnowledgeBase::ingest_directory(const fs::path& dir, const ChunkPolicy& policy, bool dedupe) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IoFailure, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t total = 0;
    for (const auto& f : files) {
        std::string text = read_file_text(f.string());
        if (trim(text).empty()) continue;
        total += ingest(text, fs::relative(f, dir).generic_string(), policy, dedupe);
    }
    return total;
}

std::vector<KnowledgeSnippet> KnowledgeBase::retrieve_prior(std::string_view disease_label, std::size_t k) const {
    auto state = current();
    if (state->chunks.empty() || k == 0) return {};
    Embedding query = embedder_->embed_text(disease_label);
    std::vector<KnowledgeSnippet> out;
    for (const auto& hit : top_k(query, state->rows, k)) {
        KnowledgeSnippet s = state->chunks[hit.row].snippet;
        s.score = hit.score;
        out.push_back(std::move(s));
    }
    return out;
}

std::size_t KnowledgeBase::size() const { return current()->chunks.size(); }

json KnowledgeBase::to_json() const {
    auto state = current();
    json chunks = json::array();
    for (const auto& c : state->chunks) {
        json j = c.snippet;
        j["embedding"] = c.embedding;
        chunks.push_back(std::move(j));
    }
    return json{{"schema_version", kSnapshotSchemaVersion},
                {"kind", "knowledge_base"},
                {"dim", embedder_->dim()},
                {"chunks", std::move(chunks)}};
}

void KnowledgeBase::load_json(const json& payload) {
    std::vector<Chunk> chunks;
    try {
        if (payload.value("kind", std::string{}) != "knowledge_base") {
            throw Error(ErrorCode::CorruptSnapshot, "not a knowledge base snapshot");
        }
        std::size_t dim = payload.at("dim").get<std::size_t>();
        if (dim != embedder_->dim()) {
            throw Error(ErrorCode::DimensionMismatch, "snapshot dim " + std::to_string(dim) + " but embedder dim " +
                                                          std::to_string(embedder_->dim()));
        }
        std::unordered_set<std::string> ids;
        for (const auto& j : payload.at("chunks")) {
            Chunk c{j.get<KnowledgeSnippet>(), j.at("embedding").get<Embedding>()};
            c.snippet.score.reset();
            validate_embedding(c.embedding, dim);
            if (c.snippet.text.empty() || !ids.insert(c.snippet.chunk_id).second) {
                throw Error(ErrorCode::CorruptSnapshot, "bad chunk " + c.snippet.chunk_id);
            }
            chunks.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptSnapshot, std::string("knowledge base snapshot: ") + e.what());
    }
    std::lock_guard writer(write_mutex_);
    publish(std::move(chunks));
}

void KnowledgeBase::save(const std::string& path) const { write_snapshot_file(path, to_json()); }

void KnowledgeBase::load(const std::string& path) { load_json(read_snapshot_file(path)); }

}  // namespace evoderm
