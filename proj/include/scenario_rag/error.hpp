#pragma once

#include <stdexcept>
#include <string>

namespace scenario_rag {

enum class ErrorCode {
  kMissingEgo,
  kDuplicateEgo,
  kInvalidState,
  kValidation,
  kIo,
  kParse,
  kNonCanonicalInput,
  kEmptySequence,
  kTooLarge,
  kTooManyNodes,
  kShapeMismatch,
  kBatchTooSmall,
  kLengthMismatch,
  kNumericalDivergence,
  kDimMismatch,
  kDuplicateId,
  kEmpty,
  kUnknownId,
  kCorruptFile,
  kVersionMismatch,
  kUsage,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the library. The code drives CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_io() const noexcept { return code_ == ErrorCode::kIo; }

 private:
  ErrorCode code_;
};

}  // namespace scenario_rag
