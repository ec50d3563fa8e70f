#include "gaze/error.hpp"

namespace gaze {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DegenerateSteps: return "DegenerateSteps";
    case ErrorCode::TrackTooShort: return "TrackTooShort";
    case ErrorCode::NoValidWindows: return "NoValidWindows";
    case ErrorCode::MismatchedSeries: return "MismatchedSeries";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::EmptyUnion: return "EmptyUnion";
    case ErrorCode::BadGeometry: return "BadGeometry";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadClass: return "BadClass";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::BadGrade: return "BadGrade";
    case ErrorCode::BadFormat: return "BadFormat";
  }
  return "Unknown";
}

}  // namespace gaze
