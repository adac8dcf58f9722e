#pragma once

#include <stdexcept>
#include <string>

namespace mmvap {

enum class ErrorCode {
  MissingFile,
  SchemaViolation,
  ChannelCountNot2,
  NonMonotonicTimes,
  MissingColumn,
  EmptyFile,
  TrackingTooSparse,
  IoError,
  WordBeyondDuration,
  OutOfRange,
  WrongLength,
  SessionTooShort,
  RateMismatch,
  BadSampleRate,
  ShapeMismatch,
  EmptyMask,
  TooFewSessions,
  DivergedLoss,
  SingleClassValidation,
  UndefinedF1,
  BadProportions,
  EmptyClass,
  ZeroVariance,
  EmptySample,
  InsufficientEvents,
  InvalidDistribution,
  WindowOutOfSession,
  CheckpointMismatch,
  ConfigError,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::ChannelCountNot2: return "ChannelCountNot2";
    case ErrorCode::NonMonotonicTimes: return "NonMonotonicTimes";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::TrackingTooSparse: return "TrackingTooSparse";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::WordBeyondDuration: return "WordBeyondDuration";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::WrongLength: return "WrongLength";
    case ErrorCode::SessionTooShort: return "SessionTooShort";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::BadSampleRate: return "BadSampleRate";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::TooFewSessions: return "TooFewSessions";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::SingleClassValidation: return "SingleClassValidation";
    case ErrorCode::UndefinedF1: return "UndefinedF1";
    case ErrorCode::BadProportions: return "BadProportions";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::InsufficientEvents: return "InsufficientEvents";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::WindowOutOfSession: return "WindowOutOfSession";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mmvap
