#pragma once

#include <stdexcept>
#include <string>

namespace ssqp {

// Base for everything thrown by the library. CLI maps subclasses to exit codes.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: unknown names, malformed files, inconsistent configs. Exit code 1.
class UsageError : public SolverError {
 public:
  using SolverError::SolverError;
};

// A mathematical invariant that must hold by construction failed. Signals an
// upstream bug, never a data problem. Exit code 2.
class InvariantViolated : public SolverError {
 public:
  using SolverError::SolverError;
};

// Numerical failures at runtime (factorizations, non-finite values, stalled
// root finding). Exit code 3.
class NumericError : public SolverError {
 public:
  using SolverError::SolverError;
};

class NotSpd : public NumericError {
 public:
  explicit NotSpd(const std::string& ctx)
      : NumericError("matrix not positive definite: " + ctx) {}
};

class RankDeficient : public NumericError {
 public:
  explicit RankDeficient(const std::string& ctx)
      : NumericError("rank deficient: " + ctx) {}
};

class NonFinite : public NumericError {
 public:
  explicit NonFinite(const std::string& ctx)
      : NumericError("non-finite value in " + ctx) {}
};

class NonConvergent : public NumericError {
 public:
  explicit NonConvergent(const std::string& ctx)
      : NumericError("iteration failed to converge: " + ctx) {}
};

class DegenerateSamples : public NumericError {
 public:
  explicit DegenerateSamples(const std::string& ctx)
      : NumericError("degenerate sample set: " + ctx) {}
};

class UnknownProblem : public UsageError {
 public:
  explicit UnknownProblem(const std::string& name)
      : UsageError("unknown problem: " + name) {}
};

class MalformedLine : public UsageError {
 public:
  MalformedLine(std::size_t line_no, const std::string& why)
      : UsageError("line " + std::to_string(line_no) + ": " + why),
        line(line_no) {}
  std::size_t line;
};

class NonBinaryLabel : public UsageError {
 public:
  NonBinaryLabel(std::size_t line_no, const std::string& label)
      : UsageError("line " + std::to_string(line_no) +
                   ": label not in {0,1,+1,-1}: " + label),
        line(line_no) {}
  std::size_t line;
};

class BatchTooLarge : public UsageError {
 public:
  BatchTooLarge(int requested, int available)
      : UsageError("batch size " + std::to_string(requested) +
                   " exceeds population " + std::to_string(available)) {}
};

class EmptyRun : public UsageError {
 public:
  explicit EmptyRun(const std::string& ctx) : UsageError("empty run: " + ctx) {}
};

class SchemaMismatch : public UsageError {
 public:
  explicit SchemaMismatch(const std::string& ctx)
      : UsageError("csv schema mismatch: " + ctx) {}
};

}  // namespace ssqp
