#include "evoderm/mock_backends.hpp"

#include "evoderm/embedding_index.hpp"
#include "evoderm/error.hpp"
#include "evoderm/util.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

namespace evoderm {

ImageMeta parse_image_meta(std::string_view json_text) {
    ImageMeta meta;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, std::string("image metadata: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::MalformedInput, "image metadata must be a JSON object");
    if (j.contains("planted_label") && j["planted_label"].is_string()) {
        meta.planted_label = normalize_label(j["planted_label"].get<std::string>());
    }
    if (j.contains("gold_label") && j["gold_label"].is_string()) {
        meta.gold_label = normalize_label(j["gold_label"].get<std::string>());
    }
    if (j.contains("findings_terms")) meta.findings_terms = j["findings_terms"].get<std::vector<std::string>>();
    return meta;
}

ImageInput load_image(const std::string& path) {
    ImageInput image;
    image.bytes = read_file_bytes(path);
    std::string meta_path = path + ".meta.json";
    std::error_code ec;
    if (std::filesystem::exists(meta_path, ec)) image.meta = parse_image_meta(read_file_text(meta_path));
    return image;
}

std::vector<double> mock_classify(const ImageInput& image, std::span<const std::string> label_space,
                                  std::uint64_t seed, double planted_boost) {
    std::uint64_t image_hash = stable_hash(image.bytes, seed);
    std::vector<double> logits;
    logits.reserve(label_space.size());
    for (const auto& label : label_space) {
        double score = unit_interval(stable_hash(label, image_hash));
        if (image.meta.planted_label && *image.meta.planted_label == label) score += planted_boost;
        logits.push_back(score);
    }
    if (logits.empty()) return logits;
    double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - top);
        total += l;
    }
    for (double& l : logits) l /= total;
    return logits;
}

std::string mock_describe(const ImageInput& image) {
    if (!image.meta.findings_terms.empty()) return join(image.meta.findings_terms, ", ") + ".";
    return "Morphology signature " + hex_digest(std::string_view(
                                         reinterpret_cast<const char*>(image.bytes.data()), image.bytes.size())) +
           ".";
}

std::string mock_summarize(const std::optional<std::string>& previous, std::span<const std::string> findings) {
    std::set<std::string> terms;
    if (previous) terms = term_set(*previous);
    for (const auto& f : findings) {
        auto more = term_set(f);
        terms.insert(more.begin(), more.end());
    }
    return join(std::vector<std::string>(terms.begin(), terms.end()), "; ");
}

Embedding mock_embed_text(std::string_view text, std::size_t dim, std::uint64_t seed) {
    return mock_extract(as_bytes(normalize_text(text)), dim, seed);
}

Embedding MockFeatureExtractor::extract(const ImageInput& image) const {
    return mock_extract(image.bytes, dim_, seed_);
}

}  // namespace evoderm
