#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace evoderm {

inline constexpr int kSnapshotSchemaVersion = 1;

std::uint32_t crc32_of(std::string_view payload) noexcept;

/// Snapshot framing: the JSON payload, a newline, then `crc32:<8 hex>\n`.
std::string frame_snapshot(const nlohmann::json& payload);

/// Verifies the trailer and schema_version. Throws CorruptSnapshot on any
/// framing, checksum or JSON error and SchemaVersionUnsupported on a
/// schema_version other than kSnapshotSchemaVersion.
nlohmann::json unframe_snapshot(std::string_view file_contents);

void write_snapshot_file(const std::string& path, const nlohmann::json& payload);
nlohmann::json read_snapshot_file(const std::string& path);

}  // namespace evoderm
