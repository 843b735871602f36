#include "evoderm/embedding_index.hpp"

#include "evoderm/csv.hpp"
#include "evoderm/error.hpp"
#include "evoderm/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace evoderm {

double squared_norm(std::span<const double> v) noexcept {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// sqrt(na2 * nb2) rather than sqrt(na2) * sqrt(nb2): for a == b this is
// exactly dot, so self-similarity is exactly 1.
double cosine_from_parts(double dot_ab, double na2, double nb2) noexcept {
    return std::clamp(dot_ab / std::sqrt(na2 * nb2), -1.0, 1.0);
}

}  // namespace

double cosine(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "cosine of dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
    }
    double na2 = squared_norm(a.values());
    double nb2 = squared_norm(b.values());
    if (na2 == 0.0 || nb2 == 0.0) throw Error(ErrorCode::ZeroVector, "cosine undefined for zero vector");
    return cosine_from_parts(dot(a.values(), b.values()), na2, nb2);
}

std::vector<RankedRow> top_k(const Embedding& query, std::span<const IndexRow> rows, std::size_t k) {
    if (k == 0 || rows.empty()) return {};
    double nq2 = squared_norm(query.values());
    if (nq2 == 0.0) throw Error(ErrorCode::ZeroVector, "query is the zero vector");

    std::vector<RankedRow> scored(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Embedding& e = *rows[i].embedding;
        if (e.dim() != query.dim()) {
            throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.dim()) +
                                                          " != row dim " + std::to_string(e.dim()));
        }
        scored[i] = {i, cosine_from_parts(dot(query.values(), e.values()), nq2, rows[i].squared_norm)};
    }

    auto before = [&](const RankedRow& a, const RankedRow& b) {
        if (a.score != b.score) return a.score > b.score;
        const IndexRow& ra = rows[a.row];
        const IndexRow& rb = rows[b.row];
        if (ra.created_at != rb.created_at) return ra.created_at < rb.created_at;
        return ra.id < rb.id;
    };
    std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), before);
    scored.resize(take);
    return scored;
}

Embedding mock_extract(std::span<const std::uint8_t> image_bytes, std::size_t dim, std::uint64_t seed) {
    if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be >= 1");
    std::uint64_t base = stable_hash(image_bytes, seed);
    std::vector<double> values(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        values[i] = 2.0 * unit_interval(splitmix64(base + 0x9E3779B97F4A7C15ULL * (i + 1))) - 1.0;
    }
    if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) values[0] = 1.0;
    return Embedding(std::move(values));
}

std::vector<SidecarRecord> read_embedding_sidecar(const std::string& path) {
    std::vector<SidecarRecord> out;
    auto rows = csv::parse(read_file_text(path));
    std::size_t line = 0;
    for (const auto& row : rows) {
        ++line;
        auto where = path + ":" + std::to_string(line);
        if (row.size() < 2) throw Error(ErrorCode::MalformedInput, where + ": expected image_path,d,values...");
        std::size_t d = 0;
        try {
            d = static_cast<std::size_t>(std::stoull(row[1]));
        } catch (const std::exception&) {
            throw Error(ErrorCode::MalformedInput, where + ": bad dimension '" + row[1] + "'");
        }
        if (row.size() != d + 2) {
            throw Error(ErrorCode::MalformedInput, where + ": declared d=" + std::to_string(d) + " but found " +
                                                       std::to_string(row.size() - 2) + " values");
        }
        std::vector<double> values;
        values.reserve(d);
        for (std::size_t i = 0; i < d; ++i) values.push_back(parse_double(row[i + 2]));
        out.push_back({row[0], Embedding(std::move(values))});
    }
    return out;
}

void write_embedding_sidecar(const std::string& path, std::span<const SidecarRecord> records) {
    std::string text;
    for (const auto& rec : records) {
        text += csv::escape(rec.image_path);
        text += ',';
        text += std::to_string(rec.embedding.dim());
        for (double v : rec.embedding.values()) {
            text += ',';
            text += format_double(v);
        }
        text += '\n';
    }
    write_file_atomic(path, text);
}

}  // namespace evoderm
