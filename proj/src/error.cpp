#include "avicurate/error.hpp"

namespace avicurate {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UndecodableFile: return "UndecodableFile";
    case ErrorCode::ZeroLengthAudio: return "ZeroLengthAudio";
    case ErrorCode::AlreadyLonger: return "AlreadyLonger";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::EmptyBuffer: return "EmptyBuffer";
    case ErrorCode::BufferTooShort: return "BufferTooShort";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::QuotaExceedsSupply: return "QuotaExceedsSupply";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::MissingLabelFile: return "MissingLabelFile";
    case ErrorCode::UnknownLayout: return "UnknownLayout";
    case ErrorCode::InsufficientSupply: return "InsufficientSupply";
    case ErrorCode::NetworkFailure: return "NetworkFailure";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::MissingDependency: return "MissingDependency";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::EmptyWorkspace: return "EmptyWorkspace";
    case ErrorCode::InvalidProportion: return "InvalidProportion";
    case ErrorCode::MissingClip: return "MissingClip";
    case ErrorCode::UnknownClip: return "UnknownClip";
    case ErrorCode::DuplicateVerdict: return "DuplicateVerdict";
    case ErrorCode::InvalidVerdict: return "InvalidVerdict";
    case ErrorCode::IncompleteRound: return "IncompleteRound";
  }
  return "Unknown";
}

}  // namespace avicurate
