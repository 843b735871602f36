#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evoderm {

using Bytes = std::vector<std::uint8_t>;

inline std::span<const std::uint8_t> as_bytes(std::string_view text) noexcept {
    return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

// --- hashing -------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// 64-bit FNV-1a over `data`, with the seed folded into the offset basis.
std::uint64_t stable_hash(std::span<const std::uint8_t> data, std::uint64_t seed = 0) noexcept;

inline std::uint64_t stable_hash(std::string_view text, std::uint64_t seed = 0) noexcept {
    return stable_hash(as_bytes(text), seed);
}

/// Seed for an independent stream `index` derived from a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(seed ^ splitmix64(index + 0xD1B54A32D192ED03ULL));
}

/// Maps a 64-bit word onto [0, 1) using its top 53 bits.
constexpr double unit_interval(std::uint64_t word) noexcept {
    return static_cast<double>(word >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n) from a 64-bit engine; defined independently of
/// std::uniform_int_distribution so streams replay identically everywhere.
inline std::size_t uniform_index(std::mt19937_64& engine, std::size_t n) {
    return static_cast<std::size_t>(unit_interval(engine()) * static_cast<double>(n));
}

/// 16 lowercase hex characters of stable_hash(text).
std::string hex_digest(std::string_view text);

// --- text ----------------------------------------------------------------

/// Lowercases ASCII and collapses whitespace runs to single spaces, trimming ends.
std::string normalize_text(std::string_view text);

/// Whitespace tokens, lowercased, with leading/trailing ASCII punctuation
/// stripped; empty tokens are dropped. Order of appearance is kept.
std::vector<std::string> tokenize_terms(std::string_view text);

std::set<std::string> term_set(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string trim(std::string_view text);

// --- misc encodings ------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

Bytes read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);
/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace evoderm
