// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dyad {

// Error taxonomy shared by every module. The CLI maps each kind onto an
// exit code, so new kinds must also be added to exit_code().
enum class ErrorKind {
  Shape,
  Contract,
  Range,
  Format,
  EmptyInput,
  DegenerateInput,
  Numerical,
  Io,
  Config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "ShapeError";
    case ErrorKind::Contract: return "ContractError";
    case ErrorKind::Range: return "RangeError";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::Numerical: return "NumericalError";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Config: return "ConfigError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define DYAD_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

DYAD_DEFINE_ERROR(ShapeError, ErrorKind::Shape)
DYAD_DEFINE_ERROR(ContractError, ErrorKind::Contract)
DYAD_DEFINE_ERROR(RangeError, ErrorKind::Range)
DYAD_DEFINE_ERROR(FormatError, ErrorKind::Format)
DYAD_DEFINE_ERROR(EmptyInput, ErrorKind::EmptyInput)
DYAD_DEFINE_ERROR(DegenerateInput, ErrorKind::DegenerateInput)
DYAD_DEFINE_ERROR(NumericalError, ErrorKind::Numerical)
DYAD_DEFINE_ERROR(IoError, ErrorKind::Io)
DYAD_DEFINE_ERROR(ConfigError, ErrorKind::Config)

#undef DYAD_DEFINE_ERROR

// 0 ok, 2 config error, 3 data error, 4 numeric error.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Contract:
      return 2;
    case ErrorKind::Numerical:
    case ErrorKind::DegenerateInput:
      return 4;
    default:
      return 3;
  }
}

}  // namespace dyad
