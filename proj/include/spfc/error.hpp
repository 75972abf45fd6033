#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spfc {

enum class ErrorKind {
  DisconnectedGraph,
  DuplicateEdge,
  SelfLoop,
  IndexOutOfRange,
  MissingWeight,
  EdgeNotInTree,
  NoEligibleEdge,
  InvalidQ,
  InvalidConfig,
  PeriodTooLarge,
  NonStationaryRho,
  UnboundHyper,
  ShapeMismatch,
  NegativeCount,
  NoConvergence,
  SingularHessian,
  OptimFailed,
  UnsupportedHyperDimension,
  MissingMarginal,
  EmptyTrace,
  LengthMismatch,
  MissingCell,
  UnknownRegion,
  NonIntegerCount,
  TraceCorrupt,
  RegionMismatch,
  Io,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::SelfLoop: return "SelfLoop";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::MissingWeight: return "MissingWeight";
    case ErrorKind::EdgeNotInTree: return "EdgeNotInTree";
    case ErrorKind::NoEligibleEdge: return "NoEligibleEdge";
    case ErrorKind::InvalidQ: return "InvalidQ";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::PeriodTooLarge: return "PeriodTooLarge";
    case ErrorKind::NonStationaryRho: return "NonStationaryRho";
    case ErrorKind::UnboundHyper: return "UnboundHyper";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NegativeCount: return "NegativeCount";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SingularHessian: return "SingularHessian";
    case ErrorKind::OptimFailed: return "OptimFailed";
    case ErrorKind::UnsupportedHyperDimension: return "UnsupportedHyperDimension";
    case ErrorKind::MissingMarginal: return "MissingMarginal";
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MissingCell: return "MissingCell";
    case ErrorKind::UnknownRegion: return "UnknownRegion";
    case ErrorKind::NonIntegerCount: return "NonIntegerCount";
    case ErrorKind::TraceCorrupt: return "TraceCorrupt";
    case ErrorKind::RegionMismatch: return "RegionMismatch";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace spfc
