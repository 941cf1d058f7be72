#pragma once

#include <span>
#include <string>
#include <vector>

#include "tvest/estimator.hpp"
#include "tvest/gaindesign.hpp"
#include "tvest/sim.hpp"

namespace tvest {

// Least-squares exponential fit C exp(-lambda (t - t0)) on log of the
// samples sitting above the noise floor. Throws when fewer than 10 survive.
struct DecayFit {
  double C = 0.0;
  double lambda = 0.0;
  double residual = 0.0;  // rms misfit in log space
  int used = 0;
};

DecayFit fit_decay(std::span<const double> series, std::span<const double> times,
                   double floor = 1e-12);

// Outcome of a one-sided envelope check. max_violation is the worst
// series - envelope seen (scaled where the check says so); the fit fields
// describe the series itself over [window_lo, window_hi] and stay zero when
// the series never rises above the floor long enough to fit.
struct EnvelopeReport {
  std::string series;
  bool pass = false;
  double max_violation = 0.0;
  double worst_t = 0.0;
  double fit_C = 0.0;
  double fit_lambda = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  double floor_used = 0.0;
  std::string note;
};

// phi(t) |xhat(t) - x(t)| per node. The trajectory must carry
// reconstructions.
std::vector<double> weighted_error(const Trajectory& traj, const ScalarTimeFunction& phi);

// |x(t)| against rfc_mu(t) * rfc_a(|x(t0)|) at every node.
EnvelopeReport check_rfc(const Trajectory& traj, const BoundData& bounds, double tol = 1e-9);

// Largest |Psi(t,y,z) - Psi(t,y,Dy)| / |z - Dy|^{1/3} over random draws with
// the z slots distinct; pass iff the ratio stays at or below 2. Every eighth
// draw mirrors z to -z, which is where the cube root is tightest.
EnvelopeReport check_holder(const std::vector<Expr>& Psi, int samples, double box,
                            unsigned seed = 0x5e11u);

// Sampled continuity-modulus check for a reconstruction map:
//   |Psi(t,p) - Psi(t,p')| <= a1(beta(t) |p - p'|) + a2(|p'|) |p - p'|
// over random argument pairs p = (y, z...) in the box. Verifies a supplied
// candidate; it does not construct one.
bool check_modulus(const std::vector<Expr>& Psi, const Expr& a1, const Expr& a2,
                   const ScalarTimeFunction& beta, int samples, double box = 2.0,
                   unsigned seed = 0x0dd5u);

// Integrates the comparison equation y' = -a(t) y + b(t) and reports the
// supremum. The hypotheses (a eventually positive with divergent integral,
// b/a with a bounded tail) are sampled first; failure is reported in the
// message, never thrown.
struct Lemma211Report {
  bool hypothesis_ok = true;
  std::string message;
  double sup = 0.0;
  double sup_t = 0.0;
  bool bounded = false;
};

Lemma211Report lemma211_oracle(const ScalarTimeFunction& a, const ScalarTimeFunction& b,
                               double y0, double T_horizon);

// One forced run of the closed injection loop on an integrator chain.
struct IssRun {
  double t0 = 0.0;
  std::vector<double> x0;
  DisturbanceSignal u;  // scalar drive on the last row; empty means zero
  double theta = 0.0;
  double T = 2.0;
};

// Checks phi(t)|x(t)| <= rho(t0) exp(-gamma (t-t0)) |x0| + M sup |u|/phi
// for every run, with (rho, gamma, M) taken from the certified design.
// Constant clocks integrate by exact matrix exponentials in the scaled
// coordinates; a varying clock falls back to adaptive stepping. Violations
// are scaled by max(1, envelope).
EnvelopeReport check_iss_chain(const GainDesign& design, const Expr& a_mult,
                               std::span<const IssRun> runs, double tol = 1e-6);

}  // namespace tvest
