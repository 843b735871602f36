#pragma once

#include "evoderm/ports.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace evoderm {

inline constexpr double kDefaultPlantedBoost = 4.0;

/// Per-label scores hash(image ‖ label) in [0, 1), +boost for the planted
/// label, softmax-normalized. Aligned with `label_space`.
std::vector<double> mock_classify(const ImageInput& image, std::span<const std::string> label_space,
                                  std::uint64_t seed, double planted_boost = kDefaultPlantedBoost);

/// The sidecar's findings terms as a sentence, or a hash-named template.
std::string mock_describe(const ImageInput& image);

/// Term-set union of the previous guideline and all findings: lowercased,
/// deduplicated, sorted, joined with "; ".
std::string mock_summarize(const std::optional<std::string>& previous, std::span<const std::string> findings);

/// Hash of the normalized (lowercased, whitespace-collapsed) text.
Embedding mock_embed_text(std::string_view text, std::size_t dim, std::uint64_t seed);

class MockFeatureExtractor final : public FeatureExtractorPort {
public:
    MockFeatureExtractor(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
    std::size_t dim() const override { return dim_; }
    Embedding extract(const ImageInput& image) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

class MockTextEmbedder final : public TextEmbedderPort {
public:
    MockTextEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
    std::size_t dim() const override { return dim_; }
    Embedding embed_text(std::string_view text) const override { return mock_embed_text(text, dim_, seed_); }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

class MockVisionDescriber final : public VisionDescriberPort {
public:
    std::string describe(const ImageInput& image, std::string_view) const override { return mock_describe(image); }
};

class MockClassifier final : public ClassifierPort {
public:
    explicit MockClassifier(std::uint64_t seed, double planted_boost = kDefaultPlantedBoost)
        : seed_(seed), boost_(planted_boost) {}
    std::vector<double> classify(const ImageInput& image, std::span<const std::string> label_space) const override {
        return mock_classify(image, label_space, seed_, boost_);
    }

private:
    std::uint64_t seed_;
    double boost_;
};

class MockSummarizer final : public SummarizerPort {
public:
    std::string summarize(const std::optional<std::string>& previous,
                          std::span<const std::string> findings) const override {
        return mock_summarize(previous, findings);
    }
};

}  // namespace evoderm
