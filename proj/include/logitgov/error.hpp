#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace logitgov {

enum class ErrorCode {
  UnencodableInput,
  InvalidToken,
  EmptyLabels,
  DuplicateLabels,
  MultiTokenLabel,
  NoUsableVerbalizer,
  InvalidAlpha,
  NoValidToken,
  InvalidAdvance,
  CheckpointTooLarge,
  SizeOverflow,
  DimensionMismatch,
  CorruptCheckpoint,
  InvalidCounts,
  LengthMismatch,
  DatasetEmpty,
  InvalidConfig,
  Io,
  BackendFault,
};

std::string_view error_name(ErrorCode code);

// All domain failures surface as this exception; absence (e.g. a label with
// no single token) is returned as std::nullopt instead.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace logitgov
