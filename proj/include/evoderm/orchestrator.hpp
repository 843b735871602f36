#pragma once

#include "evoderm/domain.hpp"
#include "evoderm/error.hpp"
#include "evoderm/knowledge_base.hpp"
#include "evoderm/memory_store.hpp"
#include "evoderm/ports.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evoderm {

/// Stage-5 synthesis weights for the deterministic reviewer.
struct ReviewWeights {
    double w_conf = 0.5;
    double w_guideline = 0.3;
    double w_history = 0.2;

    void validate() const;
};

struct PipelinePorts {
    std::shared_ptr<const FeatureExtractorPort> extractor;
    std::shared_ptr<const VisionDescriberPort> describer;
    std::shared_ptr<const ClassifierPort> classifier;
    std::shared_ptr<const ReviewerPort> reviewer;
    std::shared_ptr<const SummarizerPort> summarizer;

    void validate() const;
};

struct PipelineConfig {
    std::vector<std::string> label_space;
    std::size_t history_k = 5;
    std::size_t prior_k = 1;
    bool use_memory = true;  // false reproduces the "without memory" ablation
    std::string morphology_prompt{kDefaultMorphologyPrompt};

    void validate() const;
};

struct TraceStep {
    std::string step_name;
    std::string inputs_digest;
    std::string outputs_digest;
    std::chrono::microseconds duration{0};
};

struct PipelineTrace {
    std::vector<TraceStep> steps;
    std::vector<StageRecord> stage_records;
};

struct DiagnosisResult {
    DiagnosticReport report;
    PipelineTrace trace;
    Embedding embedding;  // z_I, kept for confirmed write-back
};

/// An error raised inside diagnose(), tagged with the failing step.
class PipelineError : public Error {
public:
    PipelineError(ErrorCode code, std::string step, const std::string& detail)
        : Error(code, "step " + step + ": " + detail), step_(std::move(step)) {}
    const std::string& step() const noexcept { return step_; }

private:
    std::string step_;
};

/// Runs the full inference pipeline: embed, describe, pre-diagnose,
/// per-candidate prior retrieval, guideline union, memory query, evidence
/// build, review, report. `memory` and `kb` may be null; absent evidence is
/// carried as explicit markers rather than errors.
DiagnosisResult diagnose(const ImageInput& image, const PipelinePorts& ports, const MemoryGraph* memory,
                         const KnowledgeBase* kb, const PipelineConfig& config);

/// Throws PriorKeyMismatch unless `priors` is keyed by exactly the candidate labels.
EvidenceBundle build_evidence(std::string p_vis, std::vector<CandidateDiagnosis> d_pre,
                              std::map<std::string, PriorSlot> priors);

struct ReviewScores {
    std::vector<double> guideline_match;
    std::vector<double> hist_vote;
    std::vector<double> combined;
    bool conflict = false;
    std::size_t chosen = 0;
};

/// The numeric core of the deterministic reviewer, aligned with bundle.candidates.
ReviewScores score_review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                          std::span<const GuidelineVersion> guidelines, const ReviewWeights& weights);

/// Deterministic five-stage review.
ReviewOutcome mock_review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                          std::span<const GuidelineVersion> guidelines, const ReviewWeights& weights);

class MockReviewer final : public ReviewerPort {
public:
    explicit MockReviewer(ReviewWeights weights = {}) : weights_(weights) { weights_.validate(); }
    ReviewOutcome review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                         std::span<const GuidelineVersion> guidelines) const override {
        return mock_review(bundle, history, guidelines, weights_);
    }

private:
    ReviewWeights weights_;
};

inline constexpr int kReportSchemaVersion = 1;

/// Report document. Step durations are left out unless asked for so that
/// identical runs serialize to identical bytes.
nlohmann::json report_to_json(const DiagnosisResult& result, bool include_timing = false);

/// Inserts the diagnosed case as a confirmed memory entry.
AddResult confirm_case(MemoryGraph& memory, const DiagnosisResult& result, const std::string& case_id,
                       const SummarizerPort& summarizer);

}  // namespace evoderm
