#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gaze {

enum class ErrorCode {
  MalformedLine,
  EmptyTrack,
  NonMonotonicTime,
  InsufficientData,
  DegenerateSteps,
  TrackTooShort,
  NoValidWindows,
  MismatchedSeries,
  InvalidBox,
  EmptyUnion,
  BadGeometry,
  ShapeMismatch,
  BadClass,
  EmptyDataset,
  IoError,
  MissingFile,
  BadGrade,
  BadFormat,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-checkable code. `line()` is set for
/// MalformedLine (1-based), zero otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::size_t line = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::size_t line_;
};

}  // namespace gaze
