#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace classbench {

enum class ErrorCode {
    ParseError,
    DuplicateName,
    DanglingEquivalencePair,
    UnknownImage,
    UnknownClass,
    MissingImGT,
    EmptySubset,
    MissingPrediction,
    TooFewTrials,
    KeyMismatch,
    DegenerateInput,
    ProviderFailure,
    DimensionMismatch,
    EmptyTemplateSet,
    BadTemplate,
    ZeroVector,
    EmptyText,
    EncoderMismatch,
    EmptyBatch,
    DuplicateOption,
    BadIndex,
    UnparseableResponse,
    InsufficientClasses,
    BackendUnavailable,
    UnknownBackend,
    AuthError,
    PayloadTooLarge,
    UnknownRun,
    ConfigDrift,
    InvalidConfig,
    UnscoredRun,
    EmptySelection,
    SessionComplete,
    UnknownSession,
    OutOfOrderSubmission,
    UnknownLabel,
    IoError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the whole harness; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace classbench
