#include "scenario_rag/error.hpp"

namespace scenario_rag {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingEgo: return "MissingEgo";
    case ErrorCode::kDuplicateEgo: return "DuplicateEgo";
    case ErrorCode::kInvalidState: return "InvalidState";
    case ErrorCode::kValidation: return "ValidationError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kNonCanonicalInput: return "NonCanonicalInput";
    case ErrorCode::kEmptySequence: return "EmptySequence";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kTooManyNodes: return "TooManyNodes";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kNumericalDivergence: return "NumericalDivergence";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kUsage: return "UsageError";
  }
  return "Error";
}

}  // namespace scenario_rag
