#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace evoderm {

/// Dense feature vector z in R^d.
class Embedding {
public:
    Embedding() = default;
    explicit Embedding(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool all_finite() const noexcept;
    bool is_zero() const noexcept;

    friend bool operator==(const Embedding&, const Embedding&) = default;

private:
    std::vector<double> values_;
};

/// One confirmed case: the linked triplet <z, K, D> plus its identity.
struct MemoryEntry {
    std::string id;
    Embedding embedding;
    std::string key_findings;
    std::string diagnosis;
    std::uint64_t created_at = 0;  // store-assigned sequence number

    friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

struct GuidelineVersion {
    std::string category;
    std::uint32_t version = 0;
    std::string text;
    std::vector<std::string> source_case_ids;
    double refinement_delta = 0.0;
    std::uint64_t created_at = 0;

    friend bool operator==(const GuidelineVersion&, const GuidelineVersion&) = default;
};

struct GuidelineRef {
    std::string category;
    std::uint32_t version = 0;

    friend bool operator==(const GuidelineRef&, const GuidelineRef&) = default;
};

struct CandidateDiagnosis {
    std::string label;
    double confidence = 0.0;

    friend bool operator==(const CandidateDiagnosis&, const CandidateDiagnosis&) = default;
};

/// Strict weak order for candidate lists: confidence descending, then label.
bool candidate_before(const CandidateDiagnosis& a, const CandidateDiagnosis& b) noexcept;
void sort_candidates(std::vector<CandidateDiagnosis>& candidates);

struct KnowledgeSnippet {
    std::string chunk_id;
    std::string source_doc;
    std::string text;
    std::optional<double> score;  // set on retrieval results only

    friend bool operator==(const KnowledgeSnippet&, const KnowledgeSnippet&) = default;
};

/// A prior is either a snippet or the explicit "no snippet found" marker.
using PriorSlot = std::optional<KnowledgeSnippet>;

/// Review input space: findings, candidates, one textbook prior per candidate.
struct EvidenceBundle {
    std::string visual_findings;
    std::vector<CandidateDiagnosis> candidates;
    std::map<std::string, PriorSlot> textbook_priors;
};

inline constexpr std::array<std::string_view, 5> kStageNames = {
    "Visual Feature Validation",
    "Canonical Guidelines Cross-Check",
    "Empirical Evidence Alignment",
    "Conflict Resolution & Systematic Synthesis",
    "Final Diagnostic Determination",
};

struct StageRecord {
    int stage_index = 0;  // 1..5
    std::string stage_name;
    std::string inputs_digest;
    std::string decision;
    std::optional<std::vector<std::pair<std::string, double>>> per_candidate_scores;

    friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

bool stage_record_consistent(const StageRecord& record) noexcept;

struct CaseHit {
    std::string case_id;
    double score = 0.0;
    std::string diagnosis;
    std::string key_findings;

    friend bool operator==(const CaseHit&, const CaseHit&) = default;
};

struct DiagnosticReport {
    std::string final_diagnosis;
    std::string raw_findings;
    std::string validated_findings;
    std::vector<StageRecord> stage_trace;
    std::vector<CaseHit> retrieved_cases;
    std::vector<GuidelineRef> guidelines_used;
    std::vector<CandidateDiagnosis> candidates;
};

/// Unicode NFC normalization of a disease label. Labels are otherwise
/// compared as exact, case-sensitive strings.
std::string normalize_label(std::string_view label);

/// Throws Error(DimensionMismatch | EmptyFindings | EmptyDiagnosis |
/// NonFiniteEmbedding | ZeroVector) on the first violated invariant.
void validate_entry(const MemoryEntry& entry, std::size_t expected_dim);

void validate_embedding(const Embedding& embedding, std::size_t expected_dim);

}  // namespace evoderm
