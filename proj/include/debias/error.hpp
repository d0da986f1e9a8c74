#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace debias {

enum class ErrorCode {
    kSchemaMismatch,
    kCellParseError,
    kEmptyDataset,
    kAlreadySplit,
    kTooFewRows,
    kOutOfDomain,
    kAllZeroCounts,
    kModelStale,
    kDegenerateTarget,
    kConstraintOutOfDomain,
    kInvalidConstraint,
    kCapExceeded,
    kNoMatchingRows,
    kInfeasibleJointRegion,
    kBackendFailure,
    kUnknownRow,
    kUnknownHistoryIndex,
    kLeakageViolation,
    kStaleBatch,
    kNoPendingBatch,
    kDriftNotAcknowledged,
    kInvalidArgument,
    kCorruptFile,
    kIoError,
    kUnknownSession,
    kUnauthorized,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the engine. `detail` carries structured context
/// (row, column, raw text, ...) and is forwarded verbatim in HTTP error bodies.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json detail = nlohmann::json::object())
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const nlohmann::json& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    nlohmann::json detail_;
};

}  // namespace debias
