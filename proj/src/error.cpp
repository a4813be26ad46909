#include "logitgov/error.hpp"

namespace logitgov {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnencodableInput: return "UnencodableInput";
    case ErrorCode::InvalidToken: return "InvalidToken";
    case ErrorCode::EmptyLabels: return "EmptyLabels";
    case ErrorCode::DuplicateLabels: return "DuplicateLabels";
    case ErrorCode::MultiTokenLabel: return "MultiTokenLabel";
    case ErrorCode::NoUsableVerbalizer: return "NoUsableVerbalizer";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::NoValidToken: return "NoValidToken";
    case ErrorCode::InvalidAdvance: return "InvalidAdvance";
    case ErrorCode::CheckpointTooLarge: return "CheckpointTooLarge";
    case ErrorCode::SizeOverflow: return "SizeOverflow";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DatasetEmpty: return "DatasetEmpty";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BackendFault: return "BackendFault";
  }
  return "Unknown";
}

}  // namespace logitgov
