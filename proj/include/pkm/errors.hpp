#pragma once

#include <stdexcept>
#include <string>

namespace pkm {

enum class ErrorKind {
  DisconnectedGraph,
  NoGroundLink,
  DuplicateId,
  UnknownId,
  UnsupportedJointKind,
  ZeroLengthLink,
  DimensionMismatch,
  NotAdmissible,
  NoConvergence,
  SingularIteration,
  OutOfWorkspace,
  NonFiniteEntry,
  ProbeProjectionFailed,
  EmptyIntersection,
  SeedNotAdmissible,
  CSpaceSingular,
  ChartInvalid,
  ChartDegenerated,
  PrestressNotInNullSpace,
  MissingInertialData,
  Underactuated,
  ConstraintDriftExceeded,
  ParseError,
  UnknownCommand,
};

const char* to_string(ErrorKind k);

// Every failure the library raises goes through this type so callers can
// branch on `kind` without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) { throw Error(k, msg); }

}  // namespace pkm
