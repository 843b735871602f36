#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evoderm {

enum class ErrorCode {
    DimensionMismatch,
    EmptyFindings,
    EmptyDiagnosis,
    NonFiniteEmbedding,
    ZeroVector,
    DuplicateId,
    UnknownLabel,
    AlreadyInitialized,
    EmptyCategory,
    VersionMismatch,
    IoFailure,
    CorruptSnapshot,
    SchemaVersionUnsupported,
    EmptyDocument,
    BackendFailure,
    Timeout,
    AuthMissing,
    DistributionInvalid,
    PriorKeyMismatch,
    EmptyInput,
    TooFewSamples,
    LengthMismatch,
    EmptyManifest,
    MalformedInput,
    InvalidArgument,
    ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. Every failure path in the
/// library throws this type so callers (CLI exit codes, HTTP status) can
/// dispatch on `code()` instead of parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace evoderm
