#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vrbridge {

enum class ErrorCode {
  // xform
  NotRigid,
  // meshvol
  Io,
  ParseError,
  EmptyMesh,
  HeaderError,
  SizeMismatch,
  EmptySurface,
  // netgraph
  DuplicateId,
  UnknownId,
  KindMismatch,
  CycleDetected,
  PortOccupied,
  UnknownPort,
  TypeMismatch,
  UnknownParam,
  MissingInput,
  NodeError,
  SchemaError,
  // hmdsim
  ConfigError,
  SourceExhausted,
  DimMismatch,
  DoubleSubmit,
  OutOfOrder,
  EyesMissing,
  WrongSourceKind,
  // stereorender
  HeightMismatch,
  // frametime
  OutOfOrderEvents,
  Empty,
  // bridgecli
  Usage,
  BindError,
};

constexpr std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotRigid: return "NotRigid";
    case ErrorCode::Io: return "Io";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::HeaderError: return "HeaderError";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::EmptySurface: return "EmptySurface";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::PortOccupied: return "PortOccupied";
    case ErrorCode::UnknownPort: return "UnknownPort";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::UnknownParam: return "UnknownParam";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::NodeError: return "NodeError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::SourceExhausted: return "SourceExhausted";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::DoubleSubmit: return "DoubleSubmit";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::EyesMissing: return "EyesMissing";
    case ErrorCode::WrongSourceKind: return "WrongSourceKind";
    case ErrorCode::HeightMismatch: return "HeightMismatch";
    case ErrorCode::OutOfOrderEvents: return "OutOfOrderEvents";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::BindError: return "BindError";
  }
  return "Unknown";
}

/// Every failure surfaced by the library. The code is stable and testable;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace vrbridge
