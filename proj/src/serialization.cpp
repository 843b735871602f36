#include "evoderm/serialization.hpp"

namespace evoderm {

using nlohmann::json;

void to_json(json& j, const Embedding& e) {
    j = json::array();
    for (double v : e.values()) j.push_back(v);
}

void from_json(const json& j, Embedding& e) {
    e = Embedding(j.get<std::vector<double>>());
}

void to_json(json& j, const MemoryEntry& e) {
    j = json{{"id", e.id},
             {"embedding", e.embedding},
             {"key_findings", e.key_findings},
             {"diagnosis", e.diagnosis},
             {"created_at", e.created_at}};
}

void from_json(const json& j, MemoryEntry& e) {
    j.at("id").get_to(e.id);
    j.at("embedding").get_to(e.embedding);
    j.at("key_findings").get_to(e.key_findings);
    j.at("diagnosis").get_to(e.diagnosis);
    e.created_at = j.value("created_at", std::uint64_t{0});
}

void to_json(json& j, const GuidelineVersion& g) {
    j = json{{"category", g.category},
             {"version", g.version},
             {"text", g.text},
             {"source_case_ids", g.source_case_ids},
             {"refinement_delta", g.refinement_delta},
             {"created_at", g.created_at}};
}

void from_json(const json& j, GuidelineVersion& g) {
    j.at("category").get_to(g.category);
    j.at("version").get_to(g.version);
    j.at("text").get_to(g.text);
    j.at("source_case_ids").get_to(g.source_case_ids);
    j.at("refinement_delta").get_to(g.refinement_delta);
    j.at("created_at").get_to(g.created_at);
}

void to_json(json& j, const GuidelineRef& g) {
    j = json{{"category", g.category}, {"version", g.version}};
}

void to_json(json& j, const CandidateDiagnosis& c) {
    j = json{{"label", c.label}, {"confidence", c.confidence}};
}

void from_json(const json& j, CandidateDiagnosis& c) {
    j.at("label").get_to(c.label);
    j.at("confidence").get_to(c.confidence);
}

void to_json(json& j, const KnowledgeSnippet& s) {
    j = json{{"chunk_id", s.chunk_id}, {"source_doc", s.source_doc}, {"text", s.text}};
    if (s.score) j["score"] = *s.score;
}

void from_json(const json& j, KnowledgeSnippet& s) {
    j.at("chunk_id").get_to(s.chunk_id);
    j.at("source_doc").get_to(s.source_doc);
    j.at("text").get_to(s.text);
    if (j.contains("score")) s.score = j.at("score").get<double>();
}

void to_json(json& j, const StageRecord& s) {
    j = json{{"stage_index", s.stage_index},
             {"stage_name", s.stage_name},
             {"inputs_digest", s.inputs_digest},
             {"decision", s.decision}};
    if (s.per_candidate_scores) {
        json scores = json::array();
        for (const auto& [label, value] : *s.per_candidate_scores) {
            scores.push_back(json{{"label", label}, {"score", value}});
        }
        j["per_candidate_scores"] = std::move(scores);
    }
}

void to_json(json& j, const CaseHit& h) {
    j = json{{"case_id", h.case_id},
             {"score", h.score},
             {"diagnosis", h.diagnosis},
             {"key_findings", h.key_findings}};
}

}  // namespace evoderm
