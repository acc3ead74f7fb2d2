#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ricci {

enum class ErrorKind {
  InvalidInput,      // bad configuration or violated precondition
  NumericalFailure,  // integrator could not continue
  NotEinstein,
  InconsistentState,
  Inapplicable,      // check requested outside its hypotheses
  DegenerateMetric,
  DegenerateCovector,
  NoConvergence,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::NotEinstein: return "not-einstein";
    case ErrorKind::InconsistentState: return "inconsistent-state";
    case ErrorKind::Inapplicable: return "inapplicable";
    case ErrorKind::DegenerateMetric: return "degenerate-metric";
    case ErrorKind::DegenerateCovector: return "degenerate-covector";
    case ErrorKind::NoConvergence: return "no-convergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Integration failure that keeps the last state that was accepted.
template <typename State>
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, State last_good, double t_last)
      : Error(ErrorKind::NumericalFailure, what), last_good_(std::move(last_good)), t_last_(t_last) {}

  const State& last_good() const noexcept { return last_good_; }
  double t_last() const noexcept { return t_last_; }

 private:
  State last_good_;
  double t_last_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::InvalidInput, what);
}

}  // namespace ricci
