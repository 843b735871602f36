#pragma once

#include "evoderm/domain.hpp"
#include "evoderm/embedding_index.hpp"
#include "evoderm/ports.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace evoderm {

struct EvolutionConfig {
    std::uint32_t n_thresh = 10;  // N_thresh: pending cases that trigger a new guideline version
    std::uint32_t top_k = 5;
    std::size_t dim = 64;
    bool allow_new_labels = false;

    void validate() const;
};

/// Per-category linkage: member cases, cases not yet folded into a
/// guideline (their count is ΔN), and the append-only version history.
struct CategoryState {
    std::vector<std::string> case_ids;
    std::vector<std::string> pending;
    std::vector<GuidelineVersion> versions;
};

struct AddResult {
    std::string case_id;
    std::optional<GuidelineVersion> evolved;
};

struct TimelineRow {
    std::uint32_t version = 0;
    double refinement_delta = 0.0;
    std::uint64_t created_at = 0;
    std::size_t source_count = 0;
};

/// |terms(next) \ terms(previous)| / max(1, |terms(next)|).
double novel_term_ratio(std::string_view previous_text, std::string_view next_text);

/// Refinement delta between consecutive versions of one category.
/// Throws VersionMismatch unless prev.version + 1 == next.version and the
/// categories agree.
double refinement_delta(const GuidelineVersion& prev, const GuidelineVersion& next);

/// Immutable point-in-time view of the memory graph. Readers hold one of
/// these while the writer publishes newer ones.
class MemorySnapshot {
public:
    std::size_t size() const noexcept { return cases_.size(); }
    std::uint64_t seq() const noexcept { return seq_; }
    const std::set<std::string>& labels() const noexcept { return labels_; }

    const MemoryEntry* find_case(std::string_view id) const;
    const CategoryState* category(std::string_view name) const;
    std::vector<std::string> categories() const;
    std::span<const std::shared_ptr<const MemoryEntry>> cases() const noexcept { return cases_; }

    /// Global exact top-k over every stored case.
    std::vector<CaseHit> query_similar(const Embedding& query, std::size_t k) const;
    std::vector<TimelineRow> guideline_timeline(std::string_view category) const;

private:
    friend class MemoryGraph;

    std::vector<std::shared_ptr<const MemoryEntry>> cases_;  // created_at order
    std::vector<IndexRow> rows_;                             // rows_[i] describes cases_[i]
    std::unordered_map<std::string, std::size_t> by_id_;
    std::map<std::string, std::shared_ptr<const CategoryState>, std::less<>> categories_;
    std::set<std::string> labels_;
    std::uint64_t seq_ = 0;
};

/// The case repository with threshold-triggered guideline evolution.
///
/// Single writer, many readers: mutations serialize on an internal lock and
/// publish a fresh MemorySnapshot; queries run against whatever snapshot was
/// current when they started and never block the writer.
///
/// A graph opened on a directory is durable: every mutation is appended to
/// `oplog.jsonl` before it is published, and `snapshot.json` (CRC-32
/// framed) is rewritten every `snapshot_every` records. Opening replays the
/// log tail past the snapshot's sequence number.
class MemoryGraph {
public:
    explicit MemoryGraph(EvolutionConfig config = {});
    MemoryGraph(MemoryGraph&&) noexcept;
    MemoryGraph& operator=(MemoryGraph&&) noexcept;
    ~MemoryGraph();

    const EvolutionConfig& config() const noexcept { return config_; }
    std::shared_ptr<const MemorySnapshot> snapshot() const;

    void register_labels(std::span<const std::string> labels);

    /// Inserts a confirmed case; evolves its category synchronously when ΔN
    /// reaches N_thresh. Throws DimensionMismatch, DuplicateId, UnknownLabel
    /// (plus the validate_entry errors) and leaves the graph unchanged on error.
    AddResult add_case(MemoryEntry entry, const SummarizerPort& summarizer);

    /// Only confirmed cases enter the graph; returns nullopt otherwise.
    std::optional<AddResult> ingest(MemoryEntry entry, bool confirmed, const SummarizerPort& summarizer);

    GuidelineVersion synthesize_initial(const std::string& category, const SummarizerPort& summarizer);
    std::optional<GuidelineVersion> maybe_evolve(const std::string& category, const SummarizerPort& summarizer);

    std::vector<CaseHit> query_similar(const Embedding& query, std::size_t k) const;
    std::vector<TimelineRow> guideline_timeline(const std::string& category) const;
    std::optional<GuidelineVersion> latest_guideline(const std::string& category) const;
    std::vector<GuidelineVersion> guidelines(const std::string& category) const;
    std::size_t pending_count(const std::string& category) const;
    std::size_t size() const;

    nlohmann::json to_json() const;
    static MemoryGraph from_json(const nlohmann::json& payload);
    void save(const std::string& path) const;
    static MemoryGraph load(const std::string& path);

    /// Durable mode. `config.dim` must match an existing snapshot's dim;
    /// n_thresh/top_k/allow_new_labels come from `config`.
    static MemoryGraph open(const std::filesystem::path& dir, const EvolutionConfig& config,
                            std::size_t snapshot_every = 256);
    void checkpoint();
    bool durable() const noexcept;

private:
    struct Sync;
    struct Journal;

    std::unique_ptr<Sync> sync_;
    std::unique_ptr<Journal> journal_;
    EvolutionConfig config_;
    std::shared_ptr<const MemorySnapshot> state_;

    static void insert_case(MemorySnapshot& state, MemoryEntry entry);
    void publish(std::shared_ptr<const MemorySnapshot> next);
    void commit(std::shared_ptr<const MemorySnapshot> next, const std::vector<nlohmann::json>& records);
    void append_journal(const std::vector<nlohmann::json>& records);
    void apply_record(MemorySnapshot& state, const nlohmann::json& record) const;
    std::optional<GuidelineVersion> evolve_locked(MemorySnapshot& state, const std::string& category,
                                                  const SummarizerPort& summarizer, bool initial_only) const;
    void checkpoint_locked();
};

}  // namespace evoderm
