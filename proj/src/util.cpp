#include "evoderm/util.hpp"

#include "evoderm/error.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace evoderm {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyFindings: return "EmptyFindings";
        case ErrorCode::EmptyDiagnosis: return "EmptyDiagnosis";
        case ErrorCode::NonFiniteEmbedding: return "NonFiniteEmbedding";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::AlreadyInitialized: return "AlreadyInitialized";
        case ErrorCode::EmptyCategory: return "EmptyCategory";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::CorruptSnapshot: return "CorruptSnapshot";
        case ErrorCode::SchemaVersionUnsupported: return "SchemaVersionUnsupported";
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::BackendFailure: return "BackendFailure";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::AuthMissing: return "AuthMissing";
        case ErrorCode::DistributionInvalid: return "DistributionInvalid";
        case ErrorCode::PriorKeyMismatch: return "PriorKeyMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyManifest: return "EmptyManifest";
        case ErrorCode::MalformedInput: return "MalformedInput";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

std::uint64_t stable_hash(std::span<const std::uint8_t> data, std::uint64_t seed) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ splitmix64(seed);
    for (std::uint8_t b : data) {
        h ^= b;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(h);
}

std::string hex_digest(std::string_view text) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::uint64_t h = stable_hash(text);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(lower(c));
    }
    return out;
}

std::vector<std::string> tokenize_terms(std::string_view text) {
    std::vector<std::string> terms;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        std::size_t end = i;
        while (start < end && is_punct(text[start])) ++start;
        while (end > start && is_punct(text[end - 1])) --end;
        if (start == end) continue;
        std::string term;
        term.reserve(end - start);
        for (std::size_t j = start; j < end; ++j) term.push_back(lower(text[j]));
        terms.push_back(std::move(term));
    }
    return terms;
}

std::set<std::string> term_set(std::string_view text) {
    auto terms = tokenize_terms(text);
    return {std::make_move_iterator(terms.begin()), std::make_move_iterator(terms.end())};
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i != 0) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

std::string trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return std::string(text.substr(b, e - b));
}

std::string base64_encode(std::span<const std::uint8_t> data) {
    static constexpr char kAlphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < data.size(); i += 3) {
        std::uint32_t v = (std::uint32_t{data[i]} << 16) | (std::uint32_t{data[i + 1]} << 8) | data[i + 2];
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back(kAlphabet[v & 63]);
    }
    std::size_t rest = data.size() - i;
    if (rest == 1) {
        std::uint32_t v = std::uint32_t{data[i]} << 16;
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.append("==");
    } else if (rest == 2) {
        std::uint32_t v = (std::uint32_t{data[i]} << 16) | (std::uint32_t{data[i + 1]} << 8);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

Bytes base64_decode(std::string_view text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+' || c == '-') return 62;
        if (c == '/' || c == '_') return 63;
        return -1;
    };
    Bytes out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        if (is_space(c)) continue;
        int v = value_of(c);
        if (v < 0) throw Error(ErrorCode::MalformedInput, "invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw Error(ErrorCode::InvalidArgument, "cannot format double");
    return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
    std::string t = trim(text);
    double value = 0.0;
    const char* begin = t.data();
    if (!t.empty() && t.front() == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw Error(ErrorCode::MalformedInput, "not a number: '" + t + "'");
    }
    return value;
}

Bytes read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed: " + path);
    return data;
}

std::string read_file_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "rename failed: " + ec.message());
}

}  // namespace evoderm
