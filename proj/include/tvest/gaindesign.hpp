#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "tvest/linalg.hpp"
#include "tvest/timefun.hpp"

namespace tvest {

// Gains k such that the shift chain closed with output injection in the first
// coordinate, A + k e1', has the requested spectrum. A is the upper shift
// (ones above the diagonal) and e1' picks the first state, so A + k e1' has k
// as its first column. Roots must be conjugate-closed with negative real
// parts.
std::vector<double> place_gain(int n, std::span<const std::complex<double>> roots);

Mat loop_matrix(std::span<const double> k);

// First-order distance between the spectrum of f and the requested roots:
// max_i |det(r_i I - f)| / prod_{j != i} |r_i - r_j|. Roots must be distinct.
double spectrum_residual(const Mat& f, std::span<const std::complex<double>> roots);

struct Certificate {
  Mat P;
  double mu = 0.0, K1 = 0.0, K2 = 0.0;
};

// Solves P (A + k e1') + (A + k e1')' P = -I, then mu = 1/K2 where K1, K2 are
// the extreme eigenvalues of P. Re-checks that the damped residual
// P F + F'P + mu P has no eigenvalue above 1e-8.
Certificate lyapunov_certificate(std::span<const double> k);

// max{1, 8 sqrt(n) K2 / (mu K1 l)}; all inputs must be positive.
double compute_R(int n, double mu, double K1, double K2, double l);

// Everything needed to run and certify a gain-injected chain. The transient
// envelope constants are stored in logs because the grid maximum of
// q^a exp(-gamma int q) overflows double for realistic K2/K1 ratios.
struct GainDesign {
  int n = 0;
  std::vector<double> k;
  Mat P;
  double mu = 0.0, K1 = 0.0, K2 = 0.0;
  double l = 1.0;  // lower bound of the chain factor a(t, theta)
  double R = 1.0;
  bool certified = true;  // R at or above its formula value

  ScalarTimeFunction phi;
  ScalarTimeFunction q;

  double gamma = 0.0;
  double a_exp = 0.0;  // (n - 1)(1 + K2/K1)
  double log_M1 = 0.0;
  double log_K = 0.0;
  double G = 0.0;
  double M = 0.0;
  bool constants_valid = false;  // envelope constants computed and finite

  std::vector<std::string> warnings;

  double q_integral(double t) const;  // int_0^t q by adaptive quadrature
  // log of the envelope weight: log(M1 K phi(t)) + gamma int_0^t q.
  // Requires constants_valid.
  double rho_log_at(double t) const;
};

// v_i = a_val R^i q(t)^i k_i; the caller multiplies by the innovation scalar.
// a_val below the design's l is rejected.
std::vector<double> injection_vector(const GainDesign& d, double t, double a_val);

struct DesignOptions {
  double l = 1.0;
  double R_multiplier = 1.0;  // >= 1, scales the formula value
  double R_override = 0.0;    // > 0 replaces R; below the formula value drops certification
  const ScalarTimeFunction* q_override = nullptr;  // validated against phi when given
};

// Fills gamma, a_exp, log_M1, log_K, G and M for a finished design. The grid
// maxima behind log_K and G are widened automatically until they settle;
// failure to settle, or an overflowing transient bound (which happens when R
// was forced below its certified value), leaves constants_valid false with a
// warning instead of throwing.
void estimate_constants(GainDesign& d, const ScalarTimeFunction& phi);

// place_gain + lyapunov_certificate + compute_R + clock + envelope constants.
GainDesign design_gains(int n, std::span<const std::complex<double>> roots,
                        const ScalarTimeFunction& phi, const DesignOptions& opt = {});

}  // namespace tvest
