#include "evoderm/snapshot_io.hpp"

#include "evoderm/error.hpp"
#include "evoderm/util.hpp"

#include <cstdio>

#include <zlib.h>

namespace evoderm {

namespace {
constexpr std::string_view kTrailerTag = "crc32:";
}

std::uint32_t crc32_of(std::string_view payload) noexcept {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32_z(crc, reinterpret_cast<const Bytef*>(payload.data()), payload.size());
    return static_cast<std::uint32_t>(crc);
}

std::string frame_snapshot(const nlohmann::json& payload) {
    std::string body = payload.dump(1);
    char trailer[16];
    std::snprintf(trailer, sizeof trailer, "%08x", crc32_of(body));
    return body + "\n" + std::string(kTrailerTag) + trailer + "\n";
}

nlohmann::json unframe_snapshot(std::string_view contents) {
    if (contents.size() < kTrailerTag.size() + 10 || contents.back() != '\n') {
        throw Error(ErrorCode::CorruptSnapshot, "missing checksum trailer (truncated?)");
    }
    std::string_view without_nl = contents.substr(0, contents.size() - 1);
    auto split = without_nl.rfind('\n');
    if (split == std::string_view::npos) throw Error(ErrorCode::CorruptSnapshot, "missing checksum trailer");
    std::string_view body = without_nl.substr(0, split);
    std::string_view trailer = without_nl.substr(split + 1);
    if (trailer.size() != kTrailerTag.size() + 8 || trailer.substr(0, kTrailerTag.size()) != kTrailerTag) {
        throw Error(ErrorCode::CorruptSnapshot, "malformed checksum trailer");
    }
    std::uint32_t stored = 0;
    for (char c : trailer.substr(kTrailerTag.size())) {
        int v = (c >= '0' && c <= '9') ? c - '0' : (c >= 'a' && c <= 'f') ? c - 'a' + 10 : -1;
        if (v < 0) throw Error(ErrorCode::CorruptSnapshot, "malformed checksum trailer");
        stored = (stored << 4) | static_cast<std::uint32_t>(v);
    }
    if (stored != crc32_of(body)) throw Error(ErrorCode::CorruptSnapshot, "checksum mismatch");

    nlohmann::json payload;
    try {
        payload = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptSnapshot, std::string("unparsable payload: ") + e.what());
    }
    if (!payload.is_object() || !payload.contains("schema_version") ||
        !payload["schema_version"].is_number_integer()) {
        throw Error(ErrorCode::CorruptSnapshot, "payload lacks schema_version");
    }
    int version = payload["schema_version"].get<int>();
    if (version != kSnapshotSchemaVersion) {
        throw Error(ErrorCode::SchemaVersionUnsupported, "schema_version " + std::to_string(version));
    }
    return payload;
}

void write_snapshot_file(const std::string& path, const nlohmann::json& payload) {
    write_file_atomic(path, frame_snapshot(payload));
}

nlohmann::json read_snapshot_file(const std::string& path) {
    return unframe_snapshot(read_file_text(path));
}

}  // namespace evoderm
