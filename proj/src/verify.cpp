#include "tvest/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tvest/linalg.hpp"

namespace tvest {

DecayFit fit_decay(std::span<const double> series, std::span<const double> times,
                   double floor) {
  if (series.size() != times.size()) {
    throw std::invalid_argument("series and time grid differ in length");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  double t0 = times.empty() ? 0.0 : times.front();
  for (std::size_t i = 0; i < series.size(); ++i) {
    double v = std::fabs(series[i]);
    if (v <= floor) continue;
    double x = times[i] - t0;
    double y = std::log(v);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++used;
  }
  if (used < 10) {
    throw std::invalid_argument("fewer than 10 samples above the noise floor");
  }
  double denom = used * sxx - sx * sx;
  double slope = denom != 0.0 ? (used * sxy - sx * sy) / denom : 0.0;
  double icept = (sy - slope * sx) / used;
  DecayFit fit;
  fit.C = std::exp(icept);
  fit.lambda = -slope;
  fit.used = used;
  double acc = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    double v = std::fabs(series[i]);
    if (v <= floor) continue;
    double r = std::log(v) - (icept + slope * (times[i] - t0));
    acc += r * r;
  }
  fit.residual = std::sqrt(acc / used);
  return fit;
}

namespace {

void fill_fit(EnvelopeReport& rep, std::span<const double> series,
              std::span<const double> times, double floor) {
  rep.floor_used = floor;
  try {
    auto fit = fit_decay(series, times, floor);
    rep.fit_C = fit.C;
    rep.fit_lambda = fit.lambda;
  } catch (const std::invalid_argument&) {
    // series hugged the floor; fit fields stay zero
  }
}

double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

std::vector<double> weighted_error(const Trajectory& traj, const ScalarTimeFunction& phi) {
  if (traj.xhat.size() != traj.times.size()) {
    throw std::invalid_argument("trajectory carries no reconstructions");
  }
  std::vector<double> out(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < traj.x[i].size(); ++j) {
      double e = traj.xhat[i][j] - traj.x[i][j];
      acc += e * e;
    }
    out[i] = phi.value(traj.times[i]) * std::sqrt(acc);
  }
  return out;
}

EnvelopeReport check_rfc(const Trajectory& traj, const BoundData& bounds, double tol) {
  EnvelopeReport rep;
  rep.series = "state magnitude vs growth bound";
  if (traj.x.empty()) {
    rep.note = "empty trajectory";
    return rep;
  }
  EvalContext ctx;
  ctx.s = norm2(traj.x.front());
  double kappa = eval(bounds.rfc_a, ctx);
  rep.max_violation = -std::numeric_limits<double>::infinity();
  std::vector<double> mags(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    mags[i] = norm2(traj.x[i]);
    double v = mags[i] - bounds.rfc_mu.value(traj.times[i]) * kappa;
    if (v > rep.max_violation) {
      rep.max_violation = v;
      rep.worst_t = traj.times[i];
    }
  }
  rep.pass = rep.max_violation <= tol;
  rep.window_lo = traj.times.front();
  rep.window_hi = traj.times.back();
  fill_fit(rep, mags, traj.times, 1e-12);
  return rep;
}

EnvelopeReport check_holder(const std::vector<Expr>& Psi, int samples, double box,
                            unsigned seed) {
  if (samples < 1 || !(box > 0.0)) throw std::invalid_argument("bad sampling request");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ub(-box, box);
  std::uniform_real_distribution<double> ut(0.0, 3.0);
  EnvelopeReport rep;
  rep.series = "reconstruction increment ratio";
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    double t = ut(rng), y = ub(rng), z = ub(rng);
    double dy = (i % 8 == 7) ? -z : ub(rng);
    if (std::fabs(z - dy) < 1e-9) continue;
    EvalContext ca, cb;
    ca.t = cb.t = t;
    double ys[] = {y};
    ca.y = cb.y = ys;
    double za[] = {z}, zb[] = {dy};
    ca.z = za;
    cb.z = zb;
    double acc = 0.0;
    for (const auto& p : Psi) {
      double d = eval(p, ca) - eval(p, cb);
      acc += d * d;
    }
    double ratio = std::sqrt(acc) / std::cbrt(std::fabs(z - dy));
    if (ratio > worst) {
      worst = ratio;
      rep.worst_t = t;
    }
  }
  rep.max_violation = worst - 2.0;
  rep.pass = worst <= 2.0 + 1e-12;
  rep.window_lo = -box;
  rep.window_hi = box;
  return rep;
}

bool check_modulus(const std::vector<Expr>& Psi, const Expr& a1, const Expr& a2,
                   const ScalarTimeFunction& beta, int samples, double box,
                   unsigned seed) {
  if (samples < 1 || !(box > 0.0)) throw std::invalid_argument("bad sampling request");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ub(-box, box);
  std::uniform_real_distribution<double> ut(0.0, 3.0);
  for (int i = 0; i < samples; ++i) {
    double t = ut(rng);
    double y1v = ub(rng), z1v = ub(rng);
    double y2v, z2v;
    if (i % 8 == 7) {
      // mirrored z at shared y stresses the cube root hardest
      y2v = y1v;
      z2v = -z1v;
    } else {
      y2v = ub(rng);
      z2v = ub(rng);
    }
    double dyv = y1v - y2v, dzv = z1v - z2v;
    double dist = std::sqrt(dyv * dyv + dzv * dzv);
    if (dist < 1e-9) continue;
    EvalContext ca, cb;
    ca.t = cb.t = t;
    double ya[] = {y1v}, yb[] = {y2v};
    double za[] = {z1v}, zb[] = {z2v};
    ca.y = ya;
    ca.z = za;
    cb.y = yb;
    cb.z = zb;
    double acc = 0.0;
    for (const auto& p : Psi) {
      double d = eval(p, ca) - eval(p, cb);
      acc += d * d;
    }
    double lhs = std::sqrt(acc);
    EvalContext c1;
    c1.s = beta.value(t) * dist;
    double rhs = eval(a1, c1);
    EvalContext c2;
    c2.s = std::sqrt(y2v * y2v + z2v * z2v);
    rhs += eval(a2, c2) * dist;
    if (lhs > rhs + 1e-9) return false;
  }
  return true;
}

Lemma211Report lemma211_oracle(const ScalarTimeFunction& a, const ScalarTimeFunction& b,
                               double y0, double T_horizon) {
  if (!(T_horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  Lemma211Report rep;
  const int N = 2000;
  std::vector<double> ts(N + 1), av(N + 1), bv(N + 1);
  for (int i = 0; i <= N; ++i) {
    ts[static_cast<std::size_t>(i)] = T_horizon * i / N;
    av[static_cast<std::size_t>(i)] = a.value(ts[static_cast<std::size_t>(i)]);
    bv[static_cast<std::size_t>(i)] = b.value(ts[static_cast<std::size_t>(i)]);
  }

  // a must turn positive well before the horizon and stay there
  int last_nonpos = -1;
  for (int i = 0; i <= N; ++i) {
    if (av[static_cast<std::size_t>(i)] <= 0.0) last_nonpos = i;
  }
  if (last_nonpos > (6 * N) / 10) {
    rep.hypothesis_ok = false;
    rep.message = "a(t) still nonpositive in the last 40% of the horizon";
  }

  // divergent integral: trapezoid total must be solidly positive and growing
  double total = 0.0, at08 = 0.0;
  for (int i = 1; i <= N; ++i) {
    total += 0.5 * (av[static_cast<std::size_t>(i)] + av[static_cast<std::size_t>(i - 1)]) *
             (ts[static_cast<std::size_t>(i)] - ts[static_cast<std::size_t>(i - 1)]);
    if (i == (8 * N) / 10) at08 = total;
  }
  if (rep.hypothesis_ok && (total < 3.0 || total - at08 < 0.1)) {
    rep.hypothesis_ok = false;
    rep.message = "integral of a grows too slowly to pass the divergence check";
  }

  // b/a needs a bounded tail where a is positive
  if (rep.hypothesis_ok) {
    double mid = 0.0, tail = 0.0;
    for (int i = (4 * N) / 10; i <= N / 2; ++i) {
      if (av[static_cast<std::size_t>(i)] > 0.0) {
        mid = std::max(mid, std::fabs(bv[static_cast<std::size_t>(i)]) /
                                av[static_cast<std::size_t>(i)]);
      }
    }
    for (int i = (9 * N) / 10; i <= N; ++i) {
      if (av[static_cast<std::size_t>(i)] > 0.0) {
        tail = std::max(tail, std::fabs(bv[static_cast<std::size_t>(i)]) /
                                  av[static_cast<std::size_t>(i)]);
      }
    }
    if (tail > 2.0 * mid + 1e-9) {
      rep.hypothesis_ok = false;
      rep.message = "b/a keeps growing toward the horizon (tail " +
                    std::to_string(tail) + " vs mid " + std::to_string(mid) + ")";
    }
  }

  Rhs rhs = [&](double t, std::span<const double> s, std::span<double> ds) {
    ds[0] = -a.value(t) * s[0] + b.value(t);
  };
  SimConfig cfg;
  cfg.T = T_horizon;
  double s0[] = {y0};
  auto traj = integrate(rhs, s0, cfg);
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    if (traj.x[i][0] > rep.sup) {
      rep.sup = traj.x[i][0];
      rep.sup_t = traj.times[i];
    }
  }
  std::size_t last = traj.times.size() - 1;
  double end_slope = 0.0;
  if (last > 0) {
    end_slope = (traj.x[last][0] - traj.x[last - 1][0]) /
                (traj.times[last] - traj.times[last - 1]);
  }
  bool plateau = end_slope <= 1e-4 * std::max(1.0, rep.sup);
  rep.bounded = rep.hypothesis_ok && (rep.sup_t < 0.9 * T_horizon || plateau) &&
                !traj.blow_up && !traj.stiff;
  return rep;
}

namespace {

double eval_multiplier(const Expr& a_mult, double t, double theta) {
  EvalContext ctx;
  ctx.t = t;
  double dv[] = {theta, 0.0};
  ctx.d = dv;
  return eval(a_mult, ctx);
}

}  // namespace

EnvelopeReport check_iss_chain(const GainDesign& design, const Expr& a_mult,
                               std::span<const IssRun> runs, double tol) {
  if (!design.certified || !design.constants_valid) {
    throw std::invalid_argument("decay envelope needs a certified design");
  }
  const int n = design.n;
  EnvelopeReport rep;
  rep.series = "weighted state vs decay envelope";
  rep.pass = true;
  rep.max_violation = -std::numeric_limits<double>::infinity();

  // constant clock: integrate exactly in the scaled coordinates where the
  // loop matrix is q R F with F = A + k e1'
  double q0 = design.q.value(0.0);
  bool const_clock = true;
  for (double t = 0.0; t <= 4.0; t += 0.37) {
    if (std::fabs(design.q.value(t) - q0) > 1e-12 * std::fabs(q0)) const_clock = false;
  }

  Mat F = loop_matrix(design.k);
  double G = design.R * q0;

  bool first_series = true;
  for (const auto& run : runs) {
    if (static_cast<int>(run.x0.size()) != n) {
      throw std::invalid_argument("run state dimension mismatch");
    }
    if (!(run.T > run.t0)) throw std::invalid_argument("run horizon must extend past t0");

    std::vector<double> times;
    std::vector<std::vector<double>> xs;
    if (const_clock) {
      // xi = T^{-1} x with T = diag(1, RQ, ..., (RQ)^{n-1});
      // xi' = a G F xi + (RQ)^{1-n} u e_n
      std::vector<double> xi(static_cast<std::size_t>(n));
      double scale = 1.0;
      for (int i = 0; i < n; ++i) {
        xi[static_cast<std::size_t>(i)] = run.x0[static_cast<std::size_t>(i)] / scale;
        scale *= G;
      }
      double u_scale = 1.0;
      for (int i = 0; i < n - 1; ++i) u_scale /= G;

      double t = run.t0;
      times.push_back(t);
      xs.push_back(run.x0);
      std::vector<double> ends;
      for (double bp : run.u.breakpoints) {
        if (bp > run.t0 && bp < run.T) ends.push_back(bp);
      }
      ends.push_back(run.T);
      for (double seg_end : ends) {
        double uv = run.u.values.empty() ? 0.0 : run.u.value_at(t)[0];
        int steps = std::max(32, static_cast<int>(std::ceil((seg_end - t) / 1e-3)));
        double h = (seg_end - t) / steps;
        for (int sidx = 0; sidx < steps; ++sidx) {
          double abar = eval_multiplier(a_mult, t + 0.5 * h, run.theta);
          Mat W = expm((abar * h * G) * F);
          std::vector<double> next = W.apply(xi);
          if (uv != 0.0) {
            // forced increment (aGF)^{-1} (W - I) e_n u_scale uv
            std::vector<double> e(static_cast<std::size_t>(n), 0.0);
            e[static_cast<std::size_t>(n - 1)] = u_scale * uv;
            std::vector<double> we = W.apply(e);
            for (int i = 0; i < n; ++i) we[static_cast<std::size_t>(i)] -= e[static_cast<std::size_t>(i)];
            auto inc = solve_linear((abar * G) * F, we);
            for (int i = 0; i < n; ++i) next[static_cast<std::size_t>(i)] += inc[static_cast<std::size_t>(i)];
          }
          xi = std::move(next);
          t += h;
          times.push_back(t);
          std::vector<double> x(static_cast<std::size_t>(n));
          double sc = 1.0;
          for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i)] = xi[static_cast<std::size_t>(i)] * sc;
            sc *= G;
          }
          xs.push_back(std::move(x));
        }
        t = seg_end;
      }
    } else {
      Rhs rhs = [&](double t, std::span<const double> s, std::span<double> ds) {
        double av = eval_multiplier(a_mult, t, run.theta);
        auto v = injection_vector(design, t, av);
        for (int i = 0; i < n; ++i) {
          double drift = (i + 1 < n) ? av * s[static_cast<std::size_t>(i + 1)] : 0.0;
          ds[static_cast<std::size_t>(i)] = drift + v[static_cast<std::size_t>(i)] * s[0];
        }
        if (!run.u.values.empty()) ds[static_cast<std::size_t>(n - 1)] += run.u.value_at(t)[0];
      };
      SimConfig cfg;
      cfg.t0 = run.t0;
      cfg.T = run.T;
      cfg.rtol = 1e-8;
      auto traj = integrate(rhs, run.x0, cfg);
      if (traj.blow_up || traj.stiff) {
        rep.pass = false;
        rep.note = "adaptive fallback truncated: " + traj.diagnostic;
        return rep;
      }
      times = std::move(traj.times);
      xs = std::move(traj.x);
    }

    double x0n = norm2(run.x0);
    double log_rho = design.rho_log_at(run.t0);
    double usup = 0.0;
    std::vector<double> lhs_series(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      double t = times[i];
      double phiv = design.phi.value(t);
      if (!run.u.values.empty()) {
        usup = std::max(usup, std::fabs(run.u.value_at(t)[0]) / phiv);
      }
      double lhs = phiv * norm2(xs[i]);
      lhs_series[i] = lhs;
      double decay = x0n > 0.0
                         ? std::exp(log_rho + std::log(x0n) - design.gamma * (t - run.t0))
                         : 0.0;
      double env = decay + design.M * usup;
      double v = (lhs - env) / std::max(1.0, env);
      if (v > rep.max_violation) {
        rep.max_violation = v;
        rep.worst_t = t;
      }
    }
    if (first_series) {
      rep.window_lo = run.t0;
      rep.window_hi = run.T;
      fill_fit(rep, lhs_series, times, 1e-12);
      first_series = false;
    }
  }
  rep.pass = rep.max_violation <= tol;
  return rep;
}

}  // namespace tvest
