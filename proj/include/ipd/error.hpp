#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ipd {

/// Machine-readable failure categories. The CLI surfaces `error_name(code)`
/// verbatim in its JSON reports, so renaming an enumerator is a format change.
enum class ErrorCode {
  InvalidArgument,
  FileNotFound,
  Io,
  // IPMX
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  Truncated,
  TrailingData,
  NonFinite,
  InvalidDimensions,
  // CSV
  MissingHeader,
  MalformedRow,
  NonIntegerLabel,
  NegativeLabel,
  DuplicateIndex,
  NonPositiveField,
  LabelCountMismatch,
  // PNM
  UnsupportedVariant,
  UnsupportedMaxval,
  // knn / estimators
  KOutOfRange,
  TooFewPoints,
  DegenerateCloud,
  // sharpness
  NotBinary,
  // scaling
  EmptyRecords,
  MissingDRepr,
  MismatchedRecords,
  DegenerateVariance,
  // synth
  InvalidSpec,
  AllRemoved,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidDimensions: return "InvalidDimensions";
    case ErrorCode::MissingHeader: return "MissingHeader";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonIntegerLabel: return "NonIntegerLabel";
    case ErrorCode::NegativeLabel: return "NegativeLabel";
    case ErrorCode::DuplicateIndex: return "DuplicateIndex";
    case ErrorCode::NonPositiveField: return "NonPositiveField";
    case ErrorCode::LabelCountMismatch: return "LabelCountMismatch";
    case ErrorCode::UnsupportedVariant: return "UnsupportedVariant";
    case ErrorCode::UnsupportedMaxval: return "UnsupportedMaxval";
    case ErrorCode::KOutOfRange: return "KOutOfRange";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::NotBinary: return "NotBinary";
    case ErrorCode::EmptyRecords: return "EmptyRecords";
    case ErrorCode::MissingDRepr: return "MissingDRepr";
    case ErrorCode::MismatchedRecords: return "MismatchedRecords";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::AllRemoved: return "AllRemoved";
  }
  return "Unknown";
}

/// Data-dependent failures (as opposed to bad input or usage) get their own
/// process exit code in the CLI.
constexpr bool is_degenerate(ErrorCode code) {
  return code == ErrorCode::DegenerateCloud || code == ErrorCode::DegenerateVariance;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ipd
