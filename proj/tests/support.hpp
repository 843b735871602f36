#pragma once

#include "evoderm/domain.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

// Removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "evoderm-test-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

inline evoderm::Embedding random_embedding(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = n(rng);
    return evoderm::Embedding(std::move(v));
}

inline std::string source_path(const std::string& rel) { return std::string(EVODERM_SOURCE_DIR) + "/" + rel; }

}  // namespace testing
