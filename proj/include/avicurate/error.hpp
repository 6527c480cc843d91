#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avicurate {

enum class ErrorCode {
  UndecodableFile,
  ZeroLengthAudio,
  AlreadyLonger,
  IOFailure,
  EmptyBuffer,
  BufferTooShort,
  InvalidArgument,
  TooFewFrames,
  UnknownId,
  TooShort,
  OutOfRange,
  QuotaExceedsSupply,
  EmptyInput,
  AllZero,
  MissingLabelFile,
  UnknownLayout,
  InsufficientSupply,
  NetworkFailure,
  MalformedResponse,
  MissingDependency,
  ConfigInvalid,
  EmptyWorkspace,
  InvalidProportion,
  MissingClip,
  UnknownClip,
  DuplicateVerdict,
  InvalidVerdict,
  IncompleteRound,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so
// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace avicurate
