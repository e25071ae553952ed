#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsderk {

/// Raised when an argument violates an operation's precondition.
class InvalidParameter : public std::invalid_argument {
 public:
  explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

/// A loss or solver quantity became non-finite.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t sample = -1)
      : std::runtime_error(what), sample_(sample) {}

  /// Offending sample index within the batch, -1 when not attributable.
  std::ptrdiff_t sample() const { return sample_; }

 private:
  std::ptrdiff_t sample_;
};

/// Training of the stage (n, q) diverged.
class TrainingDivergence : public NumericalError {
 public:
  TrainingDivergence(const std::string& what, int step, int stage)
      : NumericalError(what + " (step n=" + std::to_string(step) +
                       ", stage q=" + std::to_string(stage) + ")"),
        step_(step),
        stage_(stage) {}

  int step() const { return step_; }
  int stage() const { return stage_; }

 private:
  int step_;
  int stage_;
};

/// Deterministic iteration (fixed point, grid bounds) failed.
class ConvergenceFailure : public std::runtime_error {
 public:
  explicit ConvergenceFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " at line " + std::to_string(line)), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bsderk
