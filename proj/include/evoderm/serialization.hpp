#pragma once

#include "evoderm/domain.hpp"

#include <nlohmann/json.hpp>

// JSON mappings for the domain value types (found by ADL).
namespace evoderm {

void to_json(nlohmann::json& j, const Embedding& e);
void from_json(const nlohmann::json& j, Embedding& e);

void to_json(nlohmann::json& j, const MemoryEntry& e);
void from_json(const nlohmann::json& j, MemoryEntry& e);

void to_json(nlohmann::json& j, const GuidelineVersion& g);
void from_json(const nlohmann::json& j, GuidelineVersion& g);

void to_json(nlohmann::json& j, const GuidelineRef& g);
void to_json(nlohmann::json& j, const CandidateDiagnosis& c);
void from_json(const nlohmann::json& j, CandidateDiagnosis& c);
void to_json(nlohmann::json& j, const KnowledgeSnippet& s);
void from_json(const nlohmann::json& j, KnowledgeSnippet& s);
void to_json(nlohmann::json& j, const StageRecord& s);
void to_json(nlohmann::json& j, const CaseHit& h);

}  // namespace evoderm
