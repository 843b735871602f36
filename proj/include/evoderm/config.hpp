#pragma once

#include "evoderm/knowledge_base.hpp"
#include "evoderm/memory_store.hpp"
#include "evoderm/model_adapters.hpp"
#include "evoderm/orchestrator.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evoderm {

enum class BackendMode { Mock, Http };

inline constexpr std::array<std::string_view, 6> kRoles = {
    "vision", "classifier", "reviewer", "summarizer", "text_embedder", "image_embedder",
};

struct RoleConfig {
    BackendMode mode = BackendMode::Mock;
    BackendProfile profile;
};

struct AppConfig {
    std::string memory_dir = "evoderm-data/memory";
    std::size_t snapshot_every = 256;
    std::string kb_path = "evoderm-data/kb.json";
    std::string handbook_dir;  // ingested when kb_path does not exist yet
    ChunkPolicy chunk_policy;

    EvolutionConfig evolution;
    ReviewWeights weights;

    std::vector<std::string> labels;
    std::size_t history_k = 5;
    std::size_t prior_k = 1;
    bool use_memory = true;

    std::uint64_t mock_seed = 42;
    double planted_boost = 4.0;

    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::size_t max_in_flight = 4;

    std::map<std::string, RoleConfig, std::less<>> roles;  // one entry per kRoles name

    AppConfig();
    void validate() const;
};

/// Looks up an environment variable; the default reads the process environment.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Parses the TOML subset used by config files: [section] and
/// [backend.<role>] headers, `key = value` with strings, integers, floats,
/// booleans and string arrays, and # comments. Any known key can be
/// overridden by EVODERM_<SECTION>_<KEY> (dots become underscores, upper
/// case). Relative paths resolve against `base_dir`. Throws ConfigError.
AppConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                       const EnvLookup& env = process_env());

/// Reads and parses `path`; an empty path yields defaults plus env overrides.
AppConfig load_config(const std::string& path, const EnvLookup& env = process_env());

/// Every known key, as "section.key".
std::vector<std::string> config_keys();

/// Commented example configuration listing every key with its default.
std::string example_config();

}  // namespace evoderm
