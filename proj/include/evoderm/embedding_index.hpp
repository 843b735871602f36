#pragma once

#include "evoderm/domain.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evoderm {

double squared_norm(std::span<const double> v) noexcept;

/// Cosine similarity clamped to [-1, 1]. Throws DimensionMismatch or ZeroVector.
double cosine(const Embedding& a, const Embedding& b);

/// One searchable row. `squared_norm` must equal squared_norm(embedding).
struct IndexRow {
    const Embedding* embedding = nullptr;
    double squared_norm = 0.0;
    std::uint64_t created_at = 0;
    std::string_view id;
};

struct RankedRow {
    std::size_t row = 0;
    double score = 0.0;
};

/// Exact exhaustive top-k: score descending, then smaller created_at, then id.
/// Returns min(k, rows.size()) entries. Scores are bit-identical to cosine().
std::vector<RankedRow> top_k(const Embedding& query, std::span<const IndexRow> rows, std::size_t k);

/// Deterministic stand-in for a frozen image encoder: seeded hash of the
/// bytes expanded into `dim` coordinates in [-1, 1].
Embedding mock_extract(std::span<const std::uint8_t> image_bytes, std::size_t dim, std::uint64_t seed);

/// Precomputed-embedding sidecar: `image_path,d,v1,...,vd` per line.
struct SidecarRecord {
    std::string image_path;
    Embedding embedding;
};

std::vector<SidecarRecord> read_embedding_sidecar(const std::string& path);
void write_embedding_sidecar(const std::string& path, std::span<const SidecarRecord> records);

}  // namespace evoderm
