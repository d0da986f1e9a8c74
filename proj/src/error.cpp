#include "debias/error.hpp"

namespace debias {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
        case ErrorCode::kCellParseError: return "CellParseError";
        case ErrorCode::kEmptyDataset: return "EmptyDataset";
        case ErrorCode::kAlreadySplit: return "AlreadySplit";
        case ErrorCode::kTooFewRows: return "TooFewRows";
        case ErrorCode::kOutOfDomain: return "OutOfDomain";
        case ErrorCode::kAllZeroCounts: return "AllZeroCounts";
        case ErrorCode::kModelStale: return "ModelStale";
        case ErrorCode::kDegenerateTarget: return "DegenerateTarget";
        case ErrorCode::kConstraintOutOfDomain: return "ConstraintOutOfDomain";
        case ErrorCode::kInvalidConstraint: return "InvalidConstraint";
        case ErrorCode::kCapExceeded: return "CapExceeded";
        case ErrorCode::kNoMatchingRows: return "NoMatchingRows";
        case ErrorCode::kInfeasibleJointRegion: return "InfeasibleJointRegion";
        case ErrorCode::kBackendFailure: return "BackendFailure";
        case ErrorCode::kUnknownRow: return "UnknownRow";
        case ErrorCode::kUnknownHistoryIndex: return "UnknownHistoryIndex";
        case ErrorCode::kLeakageViolation: return "LeakageViolation";
        case ErrorCode::kStaleBatch: return "StaleBatch";
        case ErrorCode::kNoPendingBatch: return "NoPendingBatch";
        case ErrorCode::kDriftNotAcknowledged: return "DriftNotAcknowledged";
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
        case ErrorCode::kCorruptFile: return "CorruptFile";
        case ErrorCode::kIoError: return "IoError";
        case ErrorCode::kUnknownSession: return "UnknownSession";
        case ErrorCode::kUnauthorized: return "Unauthorized";
    }
    return "Unknown";
}

}  // namespace debias
