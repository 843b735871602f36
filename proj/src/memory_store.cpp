#include "evoderm/memory_store.hpp"

#include "evoderm/error.hpp"
#include "evoderm/serialization.hpp"
#include "evoderm/snapshot_io.hpp"
#include "evoderm/util.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

namespace evoderm {

using nlohmann::json;

void EvolutionConfig::validate() const {
    if (n_thresh < 1) throw Error(ErrorCode::ConfigError, "n_thresh must be >= 1");
    if (top_k < 1) throw Error(ErrorCode::ConfigError, "top_k must be >= 1");
    if (dim < 1) throw Error(ErrorCode::ConfigError, "dim must be >= 1");
}

double novel_term_ratio(std::string_view previous_text, std::string_view next_text) {
    auto prev = term_set(previous_text);
    auto next = term_set(next_text);
    std::size_t novel = 0;
    for (const auto& t : next) {
        if (!prev.contains(t)) ++novel;
    }
    return static_cast<double>(novel) / static_cast<double>(std::max<std::size_t>(1, next.size()));
}

double refinement_delta(const GuidelineVersion& prev, const GuidelineVersion& next) {
    if (prev.category != next.category || prev.version + 1 != next.version) {
        throw Error(ErrorCode::VersionMismatch, prev.category + " v" + std::to_string(prev.version) + " -> " +
                                                    next.category + " v" + std::to_string(next.version));
    }
    return novel_term_ratio(prev.text, next.text);
}

// --- snapshot --------------------------------------------------------------

const MemoryEntry* MemorySnapshot::find_case(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : cases_[it->second].get();
}

const CategoryState* MemorySnapshot::category(std::string_view name) const {
    auto it = categories_.find(name);
    return it == categories_.end() ? nullptr : it->second.get();
}

std::vector<std::string> MemorySnapshot::categories() const {
    std::vector<std::string> out;
    out.reserve(categories_.size());
    for (const auto& [name, _] : categories_) out.push_back(name);
    return out;
}

std::vector<CaseHit> MemorySnapshot::query_similar(const Embedding& query, std::size_t k) const {
    if (cases_.empty()) return {};
    std::vector<CaseHit> hits;
    for (const auto& ranked : top_k(query, rows_, k)) {
        const MemoryEntry& e = *cases_[ranked.row];
        hits.push_back({e.id, ranked.score, e.diagnosis, e.key_findings});
    }
    return hits;
}

std::vector<TimelineRow> MemorySnapshot::guideline_timeline(std::string_view name) const {
    std::vector<TimelineRow> rows;
    const CategoryState* cat = category(name);
    if (cat == nullptr) return rows;
    for (const auto& v : cat->versions) {
        rows.push_back({v.version, v.refinement_delta, v.created_at, v.source_case_ids.size()});
    }
    return rows;
}

namespace {

CategoryState& mutable_category(std::map<std::string, std::shared_ptr<const CategoryState>, std::less<>>& cats,
                                const std::string& name) {
    auto it = cats.find(name);
    // Sole owner: no published snapshot can observe this state yet.
    if (it != cats.end() && it->second.use_count() == 1) return const_cast<CategoryState&>(*it->second);
    auto fresh = it == cats.end() ? std::make_shared<CategoryState>() : std::make_shared<CategoryState>(*it->second);
    CategoryState& ref = *fresh;
    cats[name] = std::move(fresh);
    return ref;
}

json config_to_json(const EvolutionConfig& c) {
    return json{{"n_thresh", c.n_thresh}, {"top_k", c.top_k}, {"dim", c.dim}, {"allow_new_labels", c.allow_new_labels}};
}

EvolutionConfig config_from_json(const json& j) {
    EvolutionConfig c;
    j.at("n_thresh").get_to(c.n_thresh);
    j.at("top_k").get_to(c.top_k);
    j.at("dim").get_to(c.dim);
    c.allow_new_labels = j.value("allow_new_labels", false);
    return c;
}

json record(std::uint64_t seq, std::string_view op, json payload) {
    return json{{"seq", seq}, {"op", op}, {"payload", std::move(payload)}};
}

}  // namespace

// --- graph -----------------------------------------------------------------

struct MemoryGraph::Sync {
    std::mutex writer;
    mutable std::mutex publish;
};

struct MemoryGraph::Journal {
    std::filesystem::path dir;
    std::ofstream log;
    std::size_t since_checkpoint = 0;
    std::size_t snapshot_every = 256;

    std::filesystem::path snapshot_path() const { return dir / "snapshot.json"; }
    std::filesystem::path log_path() const { return dir / "oplog.jsonl"; }
};

MemoryGraph::MemoryGraph(EvolutionConfig config)
    : sync_(std::make_unique<Sync>()), config_(config), state_(std::make_shared<MemorySnapshot>()) {
    config_.validate();
}

MemoryGraph::MemoryGraph(MemoryGraph&&) noexcept = default;
MemoryGraph& MemoryGraph::operator=(MemoryGraph&&) noexcept = default;
MemoryGraph::~MemoryGraph() = default;

std::shared_ptr<const MemorySnapshot> MemoryGraph::snapshot() const {
    std::lock_guard lock(sync_->publish);
    return state_;
}

void MemoryGraph::publish(std::shared_ptr<const MemorySnapshot> next) {
    std::lock_guard lock(sync_->publish);
    state_ = std::move(next);
}

bool MemoryGraph::durable() const noexcept { return journal_ != nullptr; }

void MemoryGraph::insert_case(MemorySnapshot& s, MemoryEntry entry) {
    auto stored = std::make_shared<const MemoryEntry>(std::move(entry));
    s.by_id_.emplace(stored->id, s.cases_.size());
    s.rows_.push_back({&stored->embedding, squared_norm(stored->embedding.values()), stored->created_at, stored->id});
    CategoryState& cat = mutable_category(s.categories_, stored->diagnosis);
    cat.case_ids.push_back(stored->id);
    cat.pending.push_back(stored->id);
    s.labels_.insert(stored->diagnosis);
    s.cases_.push_back(std::move(stored));
}

void MemoryGraph::commit(std::shared_ptr<const MemorySnapshot> next, const std::vector<json>& records) {
    append_journal(records);
    publish(std::move(next));
    if (journal_ && journal_->since_checkpoint >= journal_->snapshot_every) checkpoint_locked();
}

void MemoryGraph::register_labels(std::span<const std::string> labels) {
    std::lock_guard lock(sync_->writer);
    auto current = snapshot();
    std::vector<std::string> added;
    for (const auto& raw : labels) {
        std::string label = normalize_label(raw);
        if (trim(label).empty()) throw Error(ErrorCode::EmptyDiagnosis, "empty label in registry");
        if (!current->labels_.contains(label) &&
            std::find(added.begin(), added.end(), label) == added.end()) {
            added.push_back(std::move(label));
        }
    }
    if (added.empty()) return;
    auto next = std::make_shared<MemorySnapshot>(*current);
    next->labels_.insert(added.begin(), added.end());
    ++next->seq_;
    std::uint64_t seq = next->seq_;
    commit(std::move(next), {record(seq, "register_labels", json{{"labels", added}})});
}

std::optional<GuidelineVersion> MemoryGraph::evolve_locked(MemorySnapshot& state, const std::string& category,
                                                           const SummarizerPort& summarizer,
                                                           bool initial_only) const {
    const CategoryState* cat = state.category(category);
    if (cat == nullptr || cat->case_ids.empty()) {
        if (initial_only) throw Error(ErrorCode::EmptyCategory, "category '" + category + "' has no cases");
        return std::nullopt;
    }
    if (initial_only && !cat->versions.empty()) {
        throw Error(ErrorCode::AlreadyInitialized, "category '" + category + "' already has guidelines");
    }
    if (!initial_only && cat->pending.size() < config_.n_thresh) return std::nullopt;

    bool first = cat->versions.empty();
    const std::vector<std::string>& sources = first ? cat->case_ids : cat->pending;
    std::vector<std::string> findings;
    findings.reserve(sources.size());
    for (const auto& id : sources) findings.push_back(state.find_case(id)->key_findings);

    std::optional<std::string> previous;
    if (!first) previous = cat->versions.back().text;

    GuidelineVersion v;
    v.category = category;
    v.version = static_cast<std::uint32_t>(cat->versions.size());
    v.text = summarizer.summarize(previous, findings);
    v.source_case_ids = sources;
    v.refinement_delta = first ? 1.0 : novel_term_ratio(*previous, v.text);
    v.created_at = ++state.seq_;

    CategoryState& writable = mutable_category(state.categories_, category);
    writable.versions.push_back(v);
    writable.pending.clear();
    return v;
}

AddResult MemoryGraph::add_case(MemoryEntry entry, const SummarizerPort& summarizer) {
    std::lock_guard lock(sync_->writer);
    if (trim(entry.id).empty()) throw Error(ErrorCode::InvalidArgument, "case id must be non-empty");
    validate_entry(entry, config_.dim);
    entry.diagnosis = normalize_label(entry.diagnosis);

    auto current = snapshot();
    if (current->by_id_.contains(entry.id)) throw Error(ErrorCode::DuplicateId, "case '" + entry.id + "' exists");
    if (!config_.allow_new_labels && !current->labels_.contains(entry.diagnosis)) {
        throw Error(ErrorCode::UnknownLabel, "label '" + entry.diagnosis + "' is not registered");
    }

    auto next = std::make_shared<MemorySnapshot>(*current);
    entry.created_at = ++next->seq_;
    std::string category = entry.diagnosis;
    std::vector<json> records{record(entry.created_at, "add_case", json(entry))};
    AddResult result{entry.id, std::nullopt};
    insert_case(*next, std::move(entry));

    result.evolved = evolve_locked(*next, category, summarizer, false);
    if (result.evolved) records.push_back(record(result.evolved->created_at, "guideline", json(*result.evolved)));

    commit(std::move(next), records);
    return result;
}

std::optional<AddResult> MemoryGraph::ingest(MemoryEntry entry, bool confirmed, const SummarizerPort& summarizer) {
    if (!confirmed) return std::nullopt;
    return add_case(std::move(entry), summarizer);
}

GuidelineVersion MemoryGraph::synthesize_initial(const std::string& category, const SummarizerPort& summarizer) {
    std::lock_guard lock(sync_->writer);
    auto next = std::make_shared<MemorySnapshot>(*snapshot());
    auto version = evolve_locked(*next, normalize_label(category), summarizer, true);
    commit(std::move(next), {record(version->created_at, "guideline", json(*version))});
    return *version;
}

std::optional<GuidelineVersion> MemoryGraph::maybe_evolve(const std::string& category,
                                                          const SummarizerPort& summarizer) {
    std::lock_guard lock(sync_->writer);
    auto next = std::make_shared<MemorySnapshot>(*snapshot());
    auto version = evolve_locked(*next, normalize_label(category), summarizer, false);
    if (!version) return std::nullopt;
    commit(std::move(next), {record(version->created_at, "guideline", json(*version))});
    return version;
}

std::vector<CaseHit> MemoryGraph::query_similar(const Embedding& query, std::size_t k) const {
    if (query.dim() != config_.dim) {
        throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.dim()) + " != store dim " +
                                                      std::to_string(config_.dim));
    }
    return snapshot()->query_similar(query, k);
}

std::vector<TimelineRow> MemoryGraph::guideline_timeline(const std::string& category) const {
    return snapshot()->guideline_timeline(normalize_label(category));
}

std::optional<GuidelineVersion> MemoryGraph::latest_guideline(const std::string& category) const {
    auto snap = snapshot();
    const CategoryState* cat = snap->category(normalize_label(category));
    if (cat == nullptr || cat->versions.empty()) return std::nullopt;
    return cat->versions.back();
}

std::vector<GuidelineVersion> MemoryGraph::guidelines(const std::string& category) const {
    auto snap = snapshot();
    const CategoryState* cat = snap->category(normalize_label(category));
    return cat == nullptr ? std::vector<GuidelineVersion>{} : cat->versions;
}

std::size_t MemoryGraph::pending_count(const std::string& category) const {
    auto snap = snapshot();
    const CategoryState* cat = snap->category(normalize_label(category));
    return cat == nullptr ? 0 : cat->pending.size();
}

std::size_t MemoryGraph::size() const { return snapshot()->size(); }

// --- persistence -----------------------------------------------------------

namespace {

json snapshot_to_json(const MemorySnapshot& s, const EvolutionConfig& config) {
    json cases = json::array();
    for (const auto& e : s.cases()) cases.push_back(*e);
    json categories = json::object();
    for (const auto& name : s.categories()) {
        const CategoryState* cat = s.category(name);
        categories[name] = json{{"case_ids", cat->case_ids}, {"pending", cat->pending}, {"versions", cat->versions}};
    }
    return json{{"schema_version", kSnapshotSchemaVersion},
                {"config", config_to_json(config)},
                {"seq", s.seq()},
                {"labels", s.labels()},
                {"cases", std::move(cases)},
                {"categories", std::move(categories)}};
}

}  // namespace

json MemoryGraph::to_json() const { return snapshot_to_json(*snapshot(), config_); }

MemoryGraph MemoryGraph::from_json(const json& payload) {
    try {
        MemoryGraph graph(config_from_json(payload.at("config")));
        auto state = std::make_shared<MemorySnapshot>();
        for (const auto& label : payload.at("labels")) state->labels_.insert(label.get<std::string>());
        for (const auto& item : payload.at("cases")) {
            MemoryEntry e = item.get<MemoryEntry>();
            validate_entry(e, graph.config_.dim);
            if (state->by_id_.contains(e.id)) throw Error(ErrorCode::CorruptSnapshot, "duplicate case " + e.id);
            insert_case(*state, std::move(e));
        }
        state->categories_.clear();
        for (const auto& [name, body] : payload.at("categories").items()) {
            auto cat = std::make_shared<CategoryState>();
            body.at("case_ids").get_to(cat->case_ids);
            body.at("pending").get_to(cat->pending);
            body.at("versions").get_to(cat->versions);
            for (const auto* ids : {&cat->case_ids, &cat->pending}) {
                for (const auto& id : *ids) {
                    const MemoryEntry* e = state->find_case(id);
                    if (e == nullptr || e->diagnosis != name) {
                        throw Error(ErrorCode::CorruptSnapshot, "category " + name + " references unknown case " + id);
                    }
                }
            }
            for (std::size_t i = 0; i < cat->versions.size(); ++i) {
                if (cat->versions[i].version != i || cat->versions[i].category != name) {
                    throw Error(ErrorCode::CorruptSnapshot, "guideline versions of " + name + " are not gap-free");
                }
            }
            state->categories_.emplace(name, std::move(cat));
        }
        payload.at("seq").get_to(state->seq_);
        graph.state_ = std::move(state);
        return graph;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::CorruptSnapshot) throw;
        throw Error(ErrorCode::CorruptSnapshot, e.what());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptSnapshot, e.what());
    }
}

void MemoryGraph::save(const std::string& path) const { write_snapshot_file(path, to_json()); }

MemoryGraph MemoryGraph::load(const std::string& path) { return from_json(read_snapshot_file(path)); }

void MemoryGraph::apply_record(MemorySnapshot& state, const json& rec) const {
    const std::string op = rec.at("op").get<std::string>();
    const json& payload = rec.at("payload");
    if (op == "add_case") {
        MemoryEntry e = payload.get<MemoryEntry>();
        validate_entry(e, config_.dim);
        if (state.by_id_.contains(e.id)) throw Error(ErrorCode::CorruptSnapshot, "log re-adds case " + e.id);
        insert_case(state, std::move(e));
    } else if (op == "guideline") {
        GuidelineVersion v = payload.get<GuidelineVersion>();
        const CategoryState* cat = state.category(v.category);
        if (cat == nullptr || cat->versions.size() != v.version) {
            throw Error(ErrorCode::CorruptSnapshot, "log guideline out of order for " + v.category);
        }
        CategoryState& writable = mutable_category(state.categories_, v.category);
        writable.versions.push_back(std::move(v));
        writable.pending.clear();
    } else if (op == "register_labels") {
        for (const auto& l : payload.at("labels")) state.labels_.insert(l.get<std::string>());
    } else {
        throw Error(ErrorCode::CorruptSnapshot, "unknown log op '" + op + "'");
    }
    state.seq_ = rec.at("seq").get<std::uint64_t>();
}

MemoryGraph MemoryGraph::open(const std::filesystem::path& dir, const EvolutionConfig& config,
                              std::size_t snapshot_every) {
    namespace fs = std::filesystem;
    config.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

    auto journal = std::make_unique<Journal>();
    journal->dir = dir;
    journal->snapshot_every = std::max<std::size_t>(1, snapshot_every);

    MemoryGraph graph(config);
    if (fs::exists(journal->snapshot_path())) {
        graph = load(journal->snapshot_path().string());
        if (graph.config_.dim != config.dim) {
            throw Error(ErrorCode::DimensionMismatch, "store at " + dir.string() + " has dim " +
                                                          std::to_string(graph.config_.dim) + ", config says " +
                                                          std::to_string(config.dim));
        }
        graph.config_ = config;
    }

    std::size_t replayed = 0;
    bool torn = false;
    if (fs::exists(journal->log_path())) {
        std::string text = read_file_text(journal->log_path().string());
        auto state = std::make_shared<MemorySnapshot>(*graph.state_);
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            if (trim(line).empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::exception&) {
                if (lines.peek() == std::char_traits<char>::eof()) {
                    torn = true;  // partially written final record
                    break;
                }
                throw Error(ErrorCode::CorruptSnapshot, "unparsable log record in " + journal->log_path().string());
            }
            try {
                if (rec.at("seq").get<std::uint64_t>() <= state->seq_) continue;
                graph.apply_record(*state, rec);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::CorruptSnapshot, std::string("bad log record: ") + e.what());
            }
            ++replayed;
        }
        graph.state_ = std::move(state);
    }

    graph.journal_ = std::move(journal);
    if (replayed > 0 || torn || !fs::exists(graph.journal_->snapshot_path())) {
        graph.checkpoint_locked();
    } else {
        graph.journal_->log.open(graph.journal_->log_path(), std::ios::app | std::ios::binary);
        if (!graph.journal_->log) throw Error(ErrorCode::IoFailure, "cannot open " + graph.journal_->log_path().string());
    }
    return graph;
}

void MemoryGraph::append_journal(const std::vector<json>& records) {
    if (!journal_) return;
    std::string batch;
    for (const auto& r : records) {
        batch += r.dump();
        batch += '\n';
    }
    journal_->log.write(batch.data(), static_cast<std::streamsize>(batch.size()));
    journal_->log.flush();
    if (!journal_->log) throw Error(ErrorCode::IoFailure, "cannot append to " + journal_->log_path().string());
    journal_->since_checkpoint += records.size();
}

void MemoryGraph::checkpoint() {
    std::lock_guard lock(sync_->writer);
    checkpoint_locked();
}

void MemoryGraph::checkpoint_locked() {
    if (!journal_) throw Error(ErrorCode::InvalidArgument, "checkpoint requires a graph opened on a directory");
    write_snapshot_file(journal_->snapshot_path().string(), snapshot_to_json(*snapshot(), config_));
    journal_->log.close();
    journal_->log.clear();
    journal_->log.open(journal_->log_path(), std::ios::trunc | std::ios::binary);
    if (!journal_->log) throw Error(ErrorCode::IoFailure, "cannot open " + journal_->log_path().string());
    journal_->since_checkpoint = 0;
}

}  // namespace evoderm
