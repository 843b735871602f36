#include "evoderm/orchestrator.hpp"

#include "evoderm/model_adapters.hpp"
#include "evoderm/serialization.hpp"
#include "evoderm/util.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace evoderm {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

void ReviewWeights::validate() const {
    for (double w : {w_conf, w_guideline, w_history}) {
        if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::ConfigError, "review weights must be finite and >= 0");
    }
    if (std::abs(w_conf + w_guideline + w_history - 1.0) > 1e-9) {
        throw Error(ErrorCode::ConfigError, "review weights must sum to 1");
    }
}

void PipelinePorts::validate() const {
    if (!extractor || !describer || !classifier || !reviewer || !summarizer) {
        throw Error(ErrorCode::ConfigError, "pipeline ports are not fully wired");
    }
}

void PipelineConfig::validate() const {
    if (label_space.empty()) throw Error(ErrorCode::ConfigError, "label space is empty");
    std::set<std::string> unique(label_space.begin(), label_space.end());
    if (unique.size() != label_space.size()) throw Error(ErrorCode::ConfigError, "label space has duplicates");
    if (history_k == 0) throw Error(ErrorCode::ConfigError, "history_k must be positive");
    if (prior_k == 0) throw Error(ErrorCode::ConfigError, "prior_k must be positive");
}

EvidenceBundle build_evidence(std::string p_vis, std::vector<CandidateDiagnosis> d_pre,
                              std::map<std::string, PriorSlot> priors) {
    if (d_pre.empty()) throw Error(ErrorCode::InvalidArgument, "no candidates");
    bool same_keys = priors.size() == d_pre.size();
    for (const auto& c : d_pre) same_keys = same_keys && priors.count(c.label) == 1;
    if (!same_keys) {
        throw Error(ErrorCode::PriorKeyMismatch, std::to_string(priors.size()) + " priors for " +
                                                     std::to_string(d_pre.size()) + " candidates");
    }
    return EvidenceBundle{std::move(p_vis), std::move(d_pre), std::move(priors)};
}

// --- deterministic reviewer ----------------------------------------------

namespace {

std::size_t first_argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

const GuidelineVersion* guideline_for(std::span<const GuidelineVersion> guidelines, const std::string& label) {
    const GuidelineVersion* best = nullptr;
    for (const auto& g : guidelines) {
        if (g.category == label && (!best || g.version > best->version)) best = &g;
    }
    return best;
}

std::vector<std::pair<std::string, double>> label_scores(const EvidenceBundle& bundle, const std::vector<double>& v) {
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(bundle.candidates[i].label, v[i]);
    return out;
}

}  // namespace

ReviewScores score_review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                          std::span<const GuidelineVersion> guidelines, const ReviewWeights& weights) {
    const std::size_t n = bundle.candidates.size();
    ReviewScores s;
    s.guideline_match.assign(n, 0.0);
    s.hist_vote.assign(n, 0.0);
    s.combined.assign(n, 0.0);
    if (n == 0) return s;

    auto findings = term_set(bundle.visual_findings);
    double total_weight = 0.0;
    for (const auto& h : history) total_weight += std::max(0.0, h.score);

    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& label = bundle.candidates[i].label;
        p[i] = bundle.candidates[i].confidence;

        std::set<std::string> standard;
        if (const auto* g = guideline_for(guidelines, label)) standard = term_set(g->text);
        auto prior = bundle.textbook_priors.find(label);
        if (prior != bundle.textbook_priors.end() && prior->second) {
            auto more = term_set(prior->second->text);
            standard.insert(more.begin(), more.end());
        }
        std::size_t overlap = 0;
        for (const auto& t : findings) overlap += standard.count(t);
        s.guideline_match[i] = static_cast<double>(overlap) / static_cast<double>(std::max<std::size_t>(1, standard.size()));

        if (total_weight > 0.0) {
            double agree = 0.0;
            for (const auto& h : history) {
                if (h.diagnosis == label) agree += std::max(0.0, h.score);
            }
            s.hist_vote[i] = agree / total_weight;
        }
        s.combined[i] = weights.w_conf * p[i] + weights.w_guideline * s.guideline_match[i] +
                        weights.w_history * s.hist_vote[i];
    }

    std::size_t by_conf = first_argmax(p);
    std::size_t by_guideline = first_argmax(s.guideline_match);
    s.conflict = by_conf != by_guideline && s.guideline_match[by_guideline] > 0.0;
    s.chosen = s.conflict ? by_guideline : first_argmax(s.combined);
    return s;
}

ReviewOutcome mock_review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                          std::span<const GuidelineVersion> guidelines, const ReviewWeights& weights) {
    if (bundle.candidates.empty()) throw Error(ErrorCode::InvalidArgument, "review needs candidates");
    ReviewScores s = score_review(bundle, history, guidelines, weights);
    const auto& cands = bundle.candidates;
    ReviewOutcome out;
    out.validated_findings = join(tokenize_terms(bundle.visual_findings), " ");
    out.final_diagnosis = cands[s.chosen].label;

    json standards = json::array();
    for (const auto& c : cands) {
        const auto* g = guideline_for(guidelines, c.label);
        const auto& prior = bundle.textbook_priors.at(c.label);
        standards.push_back({c.label, g ? g->text : "", prior ? prior->text : ""});
    }
    json hist = json::array();
    for (const auto& h : history) hist.push_back({h.case_id, h.score, h.diagnosis});
    json cand_json = cands;

    std::size_t by_conf = first_argmax([&] {
        std::vector<double> p;
        for (const auto& c : cands) p.push_back(c.confidence);
        return p;
    }());
    std::size_t by_guideline = first_argmax(s.guideline_match);

    std::string stage1 = out.validated_findings.empty()
                             ? "empty findings flagged; review proceeds on candidates and standards"
                             : "validated " + std::to_string(term_set(out.validated_findings).size()) + " findings terms";
    out.stages.push_back({1, std::string(kStageNames[0]), hex_digest(bundle.visual_findings), stage1, std::nullopt});

    std::string stage2 = s.guideline_match[by_guideline] > 0.0
                             ? "best guideline match: " + cands[by_guideline].label + " (" +
                                   format_double(s.guideline_match[by_guideline]) + ")"
                             : "no guideline or textbook evidence matches the findings";
    out.stages.push_back({2, std::string(kStageNames[1]), hex_digest(standards.dump()), stage2,
                          label_scores(bundle, s.guideline_match)});

    std::string stage3;
    if (history.empty()) {
        stage3 = "no historical cases retrieved";
    } else {
        std::size_t best = first_argmax(s.hist_vote);
        stage3 = std::to_string(history.size()) + " historical cases; strongest support: " + cands[best].label + " (" +
                 format_double(s.hist_vote[best]) + ")";
    }
    out.stages.push_back({3, std::string(kStageNames[2]), hex_digest(hist.dump()), stage3,
                          label_scores(bundle, s.hist_vote)});

    std::string stage4 = s.conflict ? "conflict: classifier favors " + cands[by_conf].label + ", guidelines favor " +
                                          cands[by_guideline].label + "; guideline priority active"
                                    : "no conflict between statistical and guideline evidence";
    json stage4_inputs = {cand_json, s.guideline_match};
    out.stages.push_back({4, std::string(kStageNames[3]), hex_digest(stage4_inputs.dump()), stage4, std::nullopt});

    std::string stage5 = "final diagnosis " + out.final_diagnosis +
                         (s.conflict ? " by guideline priority" : " by weighted score " + format_double(s.combined[s.chosen]));
    json stage5_inputs = {cand_json, s.guideline_match, s.hist_vote,
                          {weights.w_conf, weights.w_guideline, weights.w_history}};
    out.stages.push_back({5, std::string(kStageNames[4]), hex_digest(stage5_inputs.dump()), stage5,
                          label_scores(bundle, s.combined)});
    return out;
}

// --- pipeline -------------------------------------------------------------

namespace {

std::string digest_of(const json& j) { return hex_digest(j.dump()); }

std::string digest_of_bytes(std::span<const std::uint8_t> bytes) {
    return hex_digest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

template <class Fn>
auto run_step(PipelineTrace& trace, const std::string& name, std::string inputs_digest, Fn&& fn) {
    auto started = Clock::now();
    try {
        auto [value, outputs_digest] = fn();
        auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - started);
        trace.steps.push_back({name, std::move(inputs_digest), std::move(outputs_digest), elapsed});
        return std::move(value);
    } catch (const PipelineError&) {
        throw;
    } catch (const Error& e) {
        throw PipelineError(e.code(), name, e.what());
    } catch (const std::exception& e) {
        throw PipelineError(ErrorCode::BackendFailure, name, e.what());
    }
}

PriorSlot merge_priors(std::vector<KnowledgeSnippet> hits) {
    if (hits.empty()) return std::nullopt;
    KnowledgeSnippet merged = hits.front();
    for (std::size_t i = 1; i < hits.size(); ++i) {
        merged.chunk_id += "+" + hits[i].chunk_id;
        merged.text += "\n\n" + hits[i].text;
        if (hits[i].source_doc != merged.source_doc) merged.source_doc += "+" + hits[i].source_doc;
    }
    return merged;
}

}  // namespace

DiagnosisResult diagnose(const ImageInput& image, const PipelinePorts& ports, const MemoryGraph* memory,
                         const KnowledgeBase* kb, const PipelineConfig& config) {
    config.validate();
    ports.validate();

    DiagnosisResult result;
    PipelineTrace& trace = result.trace;
    const std::string image_digest = digest_of_bytes(image.bytes);
    std::shared_ptr<const MemorySnapshot> snap = memory ? memory->snapshot() : nullptr;

    Embedding z = run_step(trace, "embed", image_digest, [&] {
        Embedding e = image.embedding ? *image.embedding : ports.extractor->extract(image);
        validate_embedding(e, memory ? memory->config().dim : ports.extractor->dim());
        json j = e;
        return std::pair{std::move(e), digest_of(j)};
    });

    std::string p_vis = run_step(trace, "describe", image_digest, [&] {
        std::string text = ports.describer->describe(image, config.morphology_prompt);
        return std::pair{text, hex_digest(text)};
    });

    auto d_pre = run_step(trace, "pre_diag", image_digest, [&] {
        auto cands = classify_top5(*ports.classifier, image, config.label_space);
        json j = cands;
        return std::pair{std::move(cands), digest_of(j)};
    });

    std::map<std::string, PriorSlot> priors;
    for (const auto& c : d_pre) {
        priors[c.label] = run_step(trace, "retrieve_prior:" + c.label, hex_digest(c.label), [&] {
            PriorSlot slot = kb ? merge_priors(kb->retrieve_prior(c.label, config.prior_k)) : std::nullopt;
            json j = slot ? json(*slot) : json(nullptr);
            return std::pair{std::move(slot), digest_of(j)};
        });
    }

    json cand_json = d_pre;
    auto guidelines = run_step(trace, "guideline_union", digest_of(cand_json), [&] {
        std::vector<GuidelineVersion> out;
        if (config.use_memory && snap) {
            for (const auto& c : d_pre) {
                const CategoryState* cat = snap->category(c.label);
                if (cat && !cat->versions.empty()) out.push_back(cat->versions.back());
            }
        }
        json j = out;
        return std::pair{std::move(out), digest_of(j)};
    });

    auto hits = run_step(trace, "memory_query", digest_of(json(z)), [&] {
        std::vector<CaseHit> out;
        if (config.use_memory && snap) out = snap->query_similar(z, config.history_k);
        json j = out;
        return std::pair{std::move(out), digest_of(j)};
    });

    json evidence_inputs = {hex_digest(p_vis), cand_json, priors.size()};
    EvidenceBundle bundle = run_step(trace, "evidence_build", digest_of(evidence_inputs), [&] {
        EvidenceBundle b = build_evidence(p_vis, d_pre, priors);
        json slots = json::object();
        for (const auto& [label, slot] : b.textbook_priors) slots[label] = slot ? json(*slot) : json(nullptr);
        std::string digest = digest_of(json{b.visual_findings, json(b.candidates), slots});
        return std::pair{std::move(b), digest};
    });

    json review_inputs = {trace.steps.back().outputs_digest, json(hits), json(guidelines)};
    ReviewOutcome outcome = run_step(trace, "review", digest_of(review_inputs), [&] {
        ReviewOutcome o = ports.reviewer->review(bundle, hits, guidelines);
        bool member = std::any_of(bundle.candidates.begin(), bundle.candidates.end(),
                                  [&](const CandidateDiagnosis& c) { return c.label == o.final_diagnosis; });
        if (!member) throw Error(ErrorCode::BackendFailure, "reviewer chose '" + o.final_diagnosis + "' outside D_pre");
        if (o.stages.size() != kStageNames.size() ||
            !std::all_of(o.stages.begin(), o.stages.end(), stage_record_consistent)) {
            throw Error(ErrorCode::BackendFailure, "reviewer returned an incomplete stage trace");
        }
        json j = {o.final_diagnosis, o.validated_findings, json(o.stages)};
        return std::pair{std::move(o), digest_of(j)};
    });

    result.report = run_step(trace, "report", trace.steps.back().outputs_digest, [&] {
        DiagnosticReport r;
        r.final_diagnosis = outcome.final_diagnosis;
        r.raw_findings = p_vis;
        r.validated_findings = outcome.validated_findings;
        r.stage_trace = outcome.stages;
        r.retrieved_cases = hits;
        for (const auto& g : guidelines) r.guidelines_used.push_back({g.category, g.version});
        r.candidates = d_pre;
        json j = {r.final_diagnosis, r.validated_findings};
        return std::pair{std::move(r), digest_of(j)};
    });
    trace.stage_records = result.report.stage_trace;
    result.embedding = std::move(z);
    return result;
}

json report_to_json(const DiagnosisResult& result, bool include_timing) {
    const auto& r = result.report;
    json steps = json::array();
    for (const auto& s : result.trace.steps) {
        json j{{"step", s.step_name}, {"inputs_digest", s.inputs_digest}, {"outputs_digest", s.outputs_digest}};
        if (include_timing) j["duration_us"] = s.duration.count();
        steps.push_back(std::move(j));
    }
    return json{{"schema_version", kReportSchemaVersion},
                {"final_diagnosis", r.final_diagnosis},
                {"raw_findings", r.raw_findings},
                {"validated_findings", r.validated_findings},
                {"candidates", r.candidates},
                {"retrieved_cases", r.retrieved_cases},
                {"guidelines_used", r.guidelines_used},
                {"stage_trace", r.stage_trace},
                {"pipeline_trace", std::move(steps)}};
}

AddResult confirm_case(MemoryGraph& memory, const DiagnosisResult& result, const std::string& case_id,
                       const SummarizerPort& summarizer) {
    const auto& r = result.report;
    MemoryEntry entry;
    entry.id = case_id;
    entry.embedding = result.embedding;
    entry.key_findings = r.validated_findings.empty() ? r.raw_findings : r.validated_findings;
    entry.diagnosis = r.final_diagnosis;
    return memory.add_case(std::move(entry), summarizer);
}

}  // namespace evoderm
