#pragma once

#include "evoderm/domain.hpp"
#include "evoderm/util.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evoderm {

/// Sidecar metadata (`<image>.meta.json`) used to plant ground truth in
/// synthetic corpora. Real images simply have none.
struct ImageMeta {
    std::optional<std::string> planted_label;
    std::vector<std::string> findings_terms;
    std::optional<std::string> gold_label;

    bool empty() const noexcept {
        return !planted_label && findings_terms.empty() && !gold_label;
    }
};

/// Images are opaque blobs; a precomputed embedding may ride along.
struct ImageInput {
    Bytes bytes;
    ImageMeta meta;
    std::optional<Embedding> embedding;
};

/// Reads `path` and, if present, `path + ".meta.json"`.
ImageInput load_image(const std::string& path);
ImageMeta parse_image_meta(std::string_view json_text);

inline constexpr std::string_view kDefaultMorphologyPrompt =
    "Describe only the objective morphology of the skin lesion in this image: primary lesion type, "
    "color and pigmentation pattern, border and shape, surface changes, distribution. "
    "Do not propose a diagnosis.";

class FeatureExtractorPort {
public:
    virtual ~FeatureExtractorPort() = default;
    virtual std::size_t dim() const = 0;
    virtual Embedding extract(const ImageInput& image) const = 0;
};

class TextEmbedderPort {
public:
    virtual ~TextEmbedderPort() = default;
    virtual std::size_t dim() const = 0;
    virtual Embedding embed_text(std::string_view text) const = 0;
};

class VisionDescriberPort {
public:
    virtual ~VisionDescriberPort() = default;
    virtual std::string describe(const ImageInput& image, std::string_view morphology_prompt) const = 0;
};

/// Returns the full distribution P(d | I), aligned index-for-index with `label_space`.
class ClassifierPort {
public:
    virtual ~ClassifierPort() = default;
    virtual std::vector<double> classify(const ImageInput& image,
                                         std::span<const std::string> label_space) const = 0;
};

struct ReviewOutcome {
    std::string final_diagnosis;
    std::string validated_findings;
    std::vector<StageRecord> stages;
};

class ReviewerPort {
public:
    virtual ~ReviewerPort() = default;
    virtual ReviewOutcome review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                                 std::span<const GuidelineVersion> guidelines) const = 0;
};

/// G' = A(previous ⊕ findings). `previous` is empty for an initial synthesis.
class SummarizerPort {
public:
    virtual ~SummarizerPort() = default;
    virtual std::string summarize(const std::optional<std::string>& previous,
                                  std::span<const std::string> findings) const = 0;
};

}  // namespace evoderm
