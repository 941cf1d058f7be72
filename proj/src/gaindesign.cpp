#include "tvest/gaindesign.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tvest {

namespace {

double adaptive_simpson(const ScalarTimeFunction& f, double a, double m, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f.value(lm), frm = f.value(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double err = left + right - whole;
  if (depth <= 0 || std::abs(err) <= 15.0 * tol) return left + right + err / 15.0;
  return adaptive_simpson(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const ScalarTimeFunction& f, double a, double b) {
  if (a == b) return 0.0;
  double m = 0.5 * (a + b);
  double fa = f.value(a), fm = f.value(m), fb = f.value(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  double tol = 1e-12 * std::max(1.0, std::abs(whole));
  return adaptive_simpson(f, a, m, b, fa, fm, fb, whole, tol, 40);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::vector<double> place_gain(int n, std::span<const std::complex<double>> roots) {
  if (n < 1 || n > 8) throw std::invalid_argument("chain dimension must be between 1 and 8");
  if (static_cast<int>(roots.size()) != n)
    throw std::invalid_argument("expected " + std::to_string(n) + " roots, got " +
                                std::to_string(roots.size()));
  for (const auto& r : roots)
    if (!(r.real() < 0.0))
      throw std::invalid_argument("every root needs a negative real part, got " + fmt(r.real()) +
                                  (r.imag() >= 0 ? "+" : "") + fmt(r.imag()) + "i");
  std::vector<double> c = poly_from_roots(roots);
  std::vector<double> k(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) k[i] = -c[i];
  return k;
}

Mat loop_matrix(std::span<const double> k) {
  int n = static_cast<int>(k.size());
  Mat f(n);
  for (int i = 0; i + 1 < n; ++i) f(i, i + 1) = 1.0;
  for (int i = 0; i < n; ++i) f(i, 0) = k[static_cast<std::size_t>(i)];
  return f;
}

double spectrum_residual(const Mat& f, std::span<const std::complex<double>> roots) {
  double worst = 0.0;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    double denom = 1.0;
    for (std::size_t j = 0; j < roots.size(); ++j) {
      if (j == i) continue;
      double gap = std::abs(roots[i] - roots[j]);
      if (gap < 1e-9) throw std::invalid_argument("spectrum residual needs distinct roots");
      denom *= gap;
    }
    worst = std::max(worst, std::abs(char_poly_at(f, roots[i])) / denom);
  }
  return worst;
}

Certificate lyapunov_certificate(std::span<const double> k) {
  Mat f = loop_matrix(k);
  SymMatrix p = lyapunov_solve(f);
  std::vector<double> ev = sym_eigs(p);

  Certificate cert;
  cert.P = p.mat();
  cert.K1 = ev.front();
  cert.K2 = ev.back();
  if (!(cert.K1 > 0.0))
    throw std::runtime_error("Lyapunov certificate is not positive definite");
  cert.mu = 1.0 / cert.K2;

  // damped residual P F + F'P + mu P must stay nonpositive
  Mat s = cert.P * f + f.transposed() * cert.P;
  for (int i = 0; i < s.size(); ++i)
    for (int j = 0; j < s.size(); ++j) s(i, j) += cert.mu * cert.P(i, j);
  if (sym_eigs(SymMatrix(s)).back() > 1e-8)
    throw std::runtime_error("certificate residual check failed");
  return cert;
}

double compute_R(int n, double mu, double K1, double K2, double l) {
  if (n < 1) throw std::invalid_argument("compute_R: dimension must be positive");
  if (!(mu > 0.0) || !(K1 > 0.0) || !(K2 > 0.0) || !(l > 0.0))
    throw std::invalid_argument("compute_R: all inputs must be positive");
  return std::max(1.0, 8.0 * std::sqrt(static_cast<double>(n)) * K2 / (mu * K1 * l));
}

double GainDesign::q_integral(double t) const { return integrate(q, 0.0, t); }

double GainDesign::rho_log_at(double t) const {
  if (!constants_valid)
    throw std::runtime_error("envelope constants unavailable for this design");
  return log_M1 + log_K + std::log(phi.value(t)) + gamma * q_integral(t);
}

std::vector<double> injection_vector(const GainDesign& d, double t, double a_val) {
  if (a_val < d.l - 1e-12 * std::max(1.0, d.l))
    throw std::invalid_argument("chain factor " + fmt(a_val) + " fell below its bound " +
                                fmt(d.l));
  double qv = d.q.value(t);
  std::vector<double> v(d.k.size());
  double scale = 1.0;
  for (std::size_t i = 0; i < d.k.size(); ++i) {
    scale *= d.R * qv;
    v[i] = a_val * scale * d.k[i];
  }
  return v;
}

namespace {

// grid maximum of log y(t) = a log q(t) - gamma int_0^t q, refined locally;
// the horizon doubles until the maximum moves off the right edge
bool envelope_log_max(const GainDesign& d, double& out) {
  const int n_pts = 2000;
  double horizon = 10.0;
  for (int attempt = 0; attempt < 12; ++attempt, horizon *= 2.0) {
    double qint = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    double prev_t = 0.0;
    int best_i = 0;
    std::vector<double> ts(n_pts + 1), logy(n_pts + 1);
    for (int i = 0; i <= n_pts; ++i) {
      double t = horizon * i / n_pts;
      qint += integrate(d.q, prev_t, t);
      prev_t = t;
      ts[static_cast<std::size_t>(i)] = t;
      double ly = d.a_exp * std::log(d.q.value(t)) - d.gamma * qint;
      logy[static_cast<std::size_t>(i)] = ly;
      if (ly > best) {
        best = ly;
        best_i = i;
      }
    }
    if (best_i == n_pts) continue;  // still climbing: widen

    // ternary refinement between the grid neighbours of the maximum
    double lo = ts[static_cast<std::size_t>(std::max(0, best_i - 1))];
    double hi = ts[static_cast<std::size_t>(best_i + 1)];
    double base_t = lo;
    double base_q = integrate(d.q, 0.0, lo);
    auto value = [&](double t) {
      return d.a_exp * std::log(d.q.value(t)) - d.gamma * (base_q + integrate(d.q, base_t, t));
    };
    for (int it = 0; it < 80 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
      double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (value(m1) < value(m2))
        lo = m1;
      else
        hi = m2;
    }
    out = std::max(best, value(0.5 * (lo + hi)));
    return true;
  }
  return false;
}

// marches the transient-bound equation
//   g' = -q(t) (c - a2 qdot/q^2) g + qdot/q, g(0) = 0
// with an exponential midpoint rule (exact for frozen coefficients, stable at
// any step even though q c can be huge) and returns the running maximum.
bool transient_bound(const GainDesign& d, double& out, std::string& why) {
  const double c = d.mu * d.R * d.l / 4.0;
  const double a2 = 2.0 * d.a_exp;
  auto rate = [&](double t) {
    double qv = d.q.value(t);
    return d.q.slope(t) / (qv * qv);
  };

  // settle the horizon first: the source must be dead at the far end
  double horizon = 5.0;
  const double source_floor = 1e-9 * std::max(1.0, c);
  for (int attempt = 0;; ++attempt, horizon *= 2.0) {
    if (std::abs(rate(horizon)) <= source_floor) break;
    if (attempt >= 12) {
      why = "transient source still active at t = " + fmt(horizon);
      return false;
    }
  }

  const int steps = 200000;
  const double h = horizon / steps;
  double g = 0.0, gmax = 0.0;
  for (int i = 0; i < steps; ++i) {
    double tm = (i + 0.5) * h;
    double r = rate(tm);
    double lambda = d.q.value(tm) * (c - a2 * r);
    double z = -lambda * h;
    double grow = std::exp(z);
    double phi1 = (std::abs(z) > 1e-8) ? (grow - 1.0) / z : 1.0 + 0.5 * z;
    g = g * grow + r * h * phi1;
    if (!std::isfinite(g) || g > 1e250) {
      why = "transient bound overflows (R sits below its certified value)";
      return false;
    }
    gmax = std::max(gmax, g);
  }
  out = gmax;
  return true;
}

}  // namespace

void estimate_constants(GainDesign& d, const ScalarTimeFunction& phi) {
  d.phi = phi;
  d.gamma = d.mu * d.R * d.l / 16.0;
  d.a_exp = (d.n - 1) * (1.0 + d.K2 / d.K1);
  d.log_M1 = 0.5 * (std::log(d.K2) - std::log(d.K1)) + (d.n - 1) * std::log(d.R);
  d.constants_valid = false;

  double log_k = 0.0;
  if (!envelope_log_max(d, log_k)) {
    d.warnings.push_back("envelope maximum did not settle; constants unavailable");
    return;
  }
  std::string why;
  double g_bound = 0.0;
  if (!transient_bound(d, g_bound, why)) {
    d.warnings.push_back("envelope constants unavailable: " + why);
    return;
  }
  d.log_K = log_k;
  d.G = g_bound;
  double m2sq = 16.0 * d.K2 * d.K2 / (d.mu * d.mu * d.K1 * d.K1 * d.R * d.R * d.l * d.l) *
                (1.0 + 2.0 * d.a_exp * d.G);
  d.M = std::sqrt(m2sq);
  d.constants_valid = std::isfinite(d.M) && std::isfinite(d.log_K);
  if (!d.constants_valid) d.warnings.push_back("envelope constants overflowed");
}

GainDesign design_gains(int n, std::span<const std::complex<double>> roots,
                        const ScalarTimeFunction& phi, const DesignOptions& opt) {
  if (!(opt.l > 0.0)) throw std::invalid_argument("chain factor bound l must be positive");

  GainDesign d;
  d.n = n;
  d.k = place_gain(n, roots);
  Certificate cert = lyapunov_certificate(d.k);
  d.P = cert.P;
  d.mu = cert.mu;
  d.K1 = cert.K1;
  d.K2 = cert.K2;
  d.l = opt.l;

  double formula = compute_R(n, d.mu, d.K1, d.K2, d.l);
  if (opt.R_override > 0.0) {
    d.R = opt.R_override;
    d.certified = d.R >= formula * (1.0 - 1e-12);
    if (!d.certified)
      d.warnings.push_back("R forced to " + fmt(d.R) + ", below its certified value " +
                           fmt(formula) + "; convergence guarantees do not apply");
  } else {
    if (opt.R_multiplier < 1.0)
      throw std::invalid_argument("R multiplier must be at least 1");
    d.R = formula * opt.R_multiplier;
    d.certified = true;
  }

  if (opt.q_override) {
    d.q = *opt.q_override;
    std::vector<double> grid(201);
    for (int i = 0; i <= 200; ++i) grid[static_cast<std::size_t>(i)] = 20.0 * i / 200.0;
    ClockCheck chk = check_gain_clock(phi, d.q, grid);
    if (!chk.satisfied) d.warnings.push_back(chk.warning);
  } else {
    d.q = derive_q(phi);
  }

  estimate_constants(d, phi);
  return d;
}

}  // namespace tvest
