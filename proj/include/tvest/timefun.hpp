#pragma once

#include <span>
#include <string>
#include <vector>

#include "tvest/expr.hpp"

namespace tvest {

// Scalar function classes attached to convergence weights and gain clocks.
//   Kplus  finite at every sampled time
//   Kstar  non-decreasing, at least 1 at t = 0, and slope/value^2 decays
//          below tolerance toward the end of the horizon
//   Kinf   zero at zero, strictly increasing, still climbing at the horizon
// Class membership is established by sampling, so a report is evidence over
// the supplied grid, not a proof.
enum class FnClass { Plain, Kplus, Kstar, Kinf };

std::string fn_class_name(FnClass c);

// A scalar function of time given as an expression in t alone. The derivative
// is formed symbolically on construction when the body allows it.
class ScalarTimeFunction {
 public:
  ScalarTimeFunction() = default;
  ScalarTimeFunction(Expr body, FnClass claimed);
  static ScalarTimeFunction from_text(const std::string& text, FnClass claimed);

  double value(double t) const;
  double slope(double t) const;  // throws DiffError when no derivative exists
  bool differentiable() const { return static_cast<bool>(dbody_); }
  const Expr& body() const { return body_; }
  const Expr& derivative_body() const;  // throws DiffError when unavailable
  FnClass claimed() const { return claimed_; }

 private:
  Expr body_;
  Expr dbody_;
  FnClass claimed_ = FnClass::Plain;
};

struct PropertyCheck {
  std::string property;
  bool pass = true;
  std::string detail;  // offending time and values when the property fails
};

struct ClassReport {
  bool pass = true;
  std::vector<PropertyCheck> checks;
  std::string summary() const;  // one line per failed property
};

// Samples every property of the claimed class over the grid, which must be
// strictly increasing and finite. The decay check looks at the last tenth of
// the horizon: slope/value^2 must sit below tol there and not increase.
// Unboundedness (Kinf) is approximated by "grew by more than tol across the
// last tenth". Domain errors in the body are rethrown with the offending t.
ClassReport check_class(const ScalarTimeFunction& f, std::span<const double> grid, double tol);

// Builds the gain clock q(t) = |phi'(t)|/phi(t) + phi(t)^2 + 1, simplified.
// The trailing +1 keeps the dominance inequality strict and makes q(0) >= 1
// automatic. Throws DiffError when phi has no expression derivative; callers
// should then request an explicit clock from the user.
ScalarTimeFunction derive_q(const ScalarTimeFunction& phi);

struct ClockCheck {
  bool satisfied = true;   // q >= |phi'|/phi + phi^2 at every sampled t
  double max_deficit = 0;  // largest (bound - q) over the grid
  double worst_t = 0;
  std::string warning;  // empty when satisfied
};

// Validates a user-supplied clock against the weight it must dominate. The
// difference is simplified symbolically first so exact cancellations are not
// lost to roundoff.
ClockCheck check_gain_clock(const ScalarTimeFunction& phi, const ScalarTimeFunction& q,
                            std::span<const double> grid);

}  // namespace tvest
