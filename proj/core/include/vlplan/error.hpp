/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace vlplan {

/// Stable error codes for everything the library can reject.
///
/// Every throw site uses vlplan::Error with one of these codes so callers
/// (and the CLI's structured error output) can branch on the condition
/// without parsing message text.
enum class Errc {
  // catalog
  DuplicateName,
  WeightSumMismatch,
  MissingModality,
  // mixture / batching
  EmptyModality,
  SampleTooLong,
  // partition planning
  TooManyStages,
  // shape algebra / adaptor
  IndivisibleShape,
  ShapeMismatch,
  OddGridAxis,
  NonFiniteInput,
  // schedules
  StepOutOfRange,
  // evaluation protocols
  EmptySequence,
  ZeroBytes,
  LengthMismatch,
  // scenario / CLI
  ConfigError,
  ModuleError,
  UnsupportedFormat,
  // generic argument validation
  InvalidArgument,
};

/// Short stable identifier for an error code ("DuplicateName", ...).
const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Throws vlplan::Error. Out-of-line so headers stay light.
[[noreturn]] void fail(Errc code, const std::string& message);

inline const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::DuplicateName: return "DuplicateName";
    case Errc::WeightSumMismatch: return "WeightSumMismatch";
    case Errc::MissingModality: return "MissingModality";
    case Errc::EmptyModality: return "EmptyModality";
    case Errc::SampleTooLong: return "SampleTooLong";
    case Errc::TooManyStages: return "TooManyStages";
    case Errc::IndivisibleShape: return "IndivisibleShape";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::OddGridAxis: return "OddGridAxis";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::StepOutOfRange: return "StepOutOfRange";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::ZeroBytes: return "ZeroBytes";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ModuleError: return "ModuleError";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, std::string(errc_name(code)) + ": " + message);
}

}  // namespace vlplan
