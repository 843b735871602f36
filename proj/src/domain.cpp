#include "evoderm/domain.hpp"

#include "evoderm/error.hpp"
#include "evoderm/util.hpp"

#include <algorithm>
#include <cmath>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

namespace evoderm {

bool Embedding::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool Embedding::is_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

bool candidate_before(const CandidateDiagnosis& a, const CandidateDiagnosis& b) noexcept {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.label < b.label;
}

void sort_candidates(std::vector<CandidateDiagnosis>& candidates) {
    std::sort(candidates.begin(), candidates.end(), candidate_before);
}

bool stage_record_consistent(const StageRecord& record) noexcept {
    if (record.stage_index < 1 || record.stage_index > static_cast<int>(kStageNames.size())) return false;
    return record.stage_name == kStageNames[static_cast<std::size_t>(record.stage_index - 1)];
}

std::string normalize_label(std::string_view label) {
    bool ascii = std::all_of(label.begin(), label.end(),
                             [](char c) { return static_cast<unsigned char>(c) < 0x80; });
    if (ascii) return std::string(label);

    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(ErrorCode::InvalidArgument, "NFC normalizer unavailable");
    icu::UnicodeString source = icu::UnicodeString::fromUTF8(
        icu::StringPiece(label.data(), static_cast<int32_t>(label.size())));
    icu::UnicodeString normalized = nfc->normalize(source, status);
    if (U_FAILURE(status)) throw Error(ErrorCode::InvalidArgument, "label is not valid Unicode");
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

void validate_embedding(const Embedding& embedding, std::size_t expected_dim) {
    if (embedding.dim() != expected_dim) {
        throw Error(ErrorCode::DimensionMismatch, "embedding dim " + std::to_string(embedding.dim()) +
                                                      " != store dim " + std::to_string(expected_dim));
    }
    if (!embedding.all_finite()) throw Error(ErrorCode::NonFiniteEmbedding, "embedding has NaN/Inf");
    if (embedding.is_zero()) throw Error(ErrorCode::ZeroVector, "embedding is the zero vector");
}

void validate_entry(const MemoryEntry& entry, std::size_t expected_dim) {
    validate_embedding(entry.embedding, expected_dim);
    if (trim(entry.key_findings).empty()) throw Error(ErrorCode::EmptyFindings, "case " + entry.id);
    if (trim(entry.diagnosis).empty()) throw Error(ErrorCode::EmptyDiagnosis, "case " + entry.id);
}

}  // namespace evoderm
