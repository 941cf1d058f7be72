#include "tvest/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tvest {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string fmt_t(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", t);
  return buf;
}

// Dormand-Prince 4(5) coefficients
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247,
                 A64 = 49.0 / 176, A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920,
                 E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40;

struct Stepper {
  const Rhs& rhs;
  const SimConfig& cfg;
  std::size_t n;
  std::vector<double> k1, k2, k3, k4, k5, k6, k7, tmp, ynew;

  explicit Stepper(const Rhs& r, const SimConfig& c, std::size_t dim)
      : rhs(r), cfg(c), n(dim) {
    for (auto* v : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &tmp, &ynew}) v->resize(n);
  }

  void stage(double t, const std::vector<double>& y, double h,
             std::initializer_list<std::pair<const std::vector<double>*, double>> terms,
             std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = y[i];
      for (const auto& [k, c] : terms) acc += h * c * (*k)[i];
      tmp[i] = acc;
    }
    rhs(t, tmp, out);
  }

  // one attempted step from (t, y) with size h; returns the scaled error
  // norm, or infinity when something went non-finite
  double attempt(double t, const std::vector<double>& y, double h, bool fresh_k1) {
    if (fresh_k1) rhs(t, y, k1);
    stage(t + A21 * h, y, h, {{&k1, A21}}, k2);
    stage(t + 0.3 * h, y, h, {{&k1, A31}, {&k2, A32}}, k3);
    stage(t + 0.8 * h, y, h, {{&k1, A41}, {&k2, A42}, {&k3, A43}}, k4);
    stage(t + 8.0 / 9 * h, y, h, {{&k1, A51}, {&k2, A52}, {&k3, A53}, {&k4, A54}}, k5);
    stage(t + h, y, h, {{&k1, A61}, {&k2, A62}, {&k3, A63}, {&k4, A64}, {&k5, A65}}, k6);
    for (std::size_t i = 0; i < n; ++i) {
      ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    rhs(t + h, ynew, k7);
    if (!all_finite(ynew) || !all_finite(k7)) return std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double err = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] +
                        E7 * k7[i]);
      double scale = cfg.atol + cfg.rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
      acc += (err / scale) * (err / scale);
    }
    double norm = std::sqrt(acc / static_cast<double>(n));
    return std::isfinite(norm) ? norm : std::numeric_limits<double>::infinity();
  }
};

void run_rk45(const Rhs& rhs, std::vector<double>& y, double t0, double tend,
              const SimConfig& cfg, Trajectory& traj,
              const std::function<void(double, const std::vector<double>&)>& emit) {
  Stepper st(rhs, cfg, y.size());
  double t = t0;

  // starting size from the first slope, clamped to a tenth of the span
  rhs(t, y, st.k1);
  if (!all_finite(st.k1)) {
    traj.blow_up = true;
    traj.diagnostic = "right-hand side not finite at t = " + fmt_t(t);
    return;
  }
  double d0 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double scale = cfg.atol + cfg.rtol * std::fabs(y[i]);
    d0 = std::max(d0, std::fabs(y[i]) / scale);
    d1 = std::max(d1, std::fabs(st.k1[i]) / scale);
  }
  double h = (d1 > 0.0) ? 0.01 * d0 / d1 : 1e-6;
  h = std::clamp(h, 1e-8, (tend - t0) / 10.0);

  bool have_k1 = true;
  double err_prev = 1.0;
  long attempts = 0;
  while (t < tend) {
    if (attempts++ >= cfg.max_steps) {
      traj.stiff = true;
      traj.diagnostic = "step budget exhausted at t = " + fmt_t(t);
      return;
    }
    bool last = t + h >= tend;
    double h_try = last ? tend - t : h;
    if (h_try < cfg.min_step && !last) {
      traj.stiff = true;
      traj.diagnostic = "step size underflow at t = " + fmt_t(t);
      return;
    }
    double err = st.attempt(t, y, h_try, !have_k1);
    if (!std::isfinite(err)) {
      // halve and retry until underflow; persistent non-finite values mean
      // the solution escaped
      h = 0.5 * h_try;
      have_k1 = true;  // k1 at (t, y) is still valid
      if (h < cfg.min_step) {
        traj.blow_up = true;
        traj.diagnostic = "state left the double range at t = " + fmt_t(t);
        return;
      }
      continue;
    }
    if (err <= 1.0) {
      t += h_try;
      y = st.ynew;
      st.k1 = st.k7;  // first-same-as-last
      have_k1 = false;
      emit(t, y);
      traj.steps.push_back(h_try);
      double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.17) *
                   std::pow(std::max(err_prev, 1e-10), 0.08);
      h = h_try * std::clamp(fac, 0.2, 5.0);
      err_prev = err;
    } else {
      h = h_try * std::max(0.2, 0.9 * std::pow(err, -0.2));
      have_k1 = true;
    }
  }
}

void run_rk4(const Rhs& rhs, std::vector<double>& y, double t0, double tend,
             const SimConfig& cfg, Trajectory& traj,
             const std::function<void(double, const std::vector<double>&)>& emit) {
  long nsteps = std::max(1L, std::lround(std::ceil((tend - t0) / cfg.fixed_step)));
  double h = (tend - t0) / static_cast<double>(nsteps);
  std::size_t n = y.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (long s = 0; s < nsteps; ++s) {
    double t = t0 + static_cast<double>(s) * h;
    rhs(t, y, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    rhs(t + 0.5 * h, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    rhs(t + 0.5 * h, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    rhs(t + h, tmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if (!all_finite(y)) {
      traj.blow_up = true;
      traj.diagnostic = "state left the double range at t = " + fmt_t(t + h);
      return;
    }
    emit(t0 + static_cast<double>(s + 1) * h, y);
    traj.steps.push_back(h);
  }
}

void validate(const SimConfig& cfg) {
  if (!(cfg.T > cfg.t0)) throw std::invalid_argument("horizon must extend past t0");
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) {
    throw std::invalid_argument("tolerances must be positive");
  }
}

}  // namespace

std::span<const double> DisturbanceSignal::value_at(double t) const {
  if (values.empty()) return {};
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
  std::size_t idx = static_cast<std::size_t>(it - breakpoints.begin());
  return values[idx];
}

DisturbanceSignal random_disturbance(std::mt19937_64& rng,
                                     const std::vector<std::pair<double, double>>& D,
                                     double horizon, int n_pieces) {
  if (n_pieces < 1) throw std::invalid_argument("need at least one disturbance piece");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  DisturbanceSignal sig;
  std::uniform_real_distribution<double> ut(0.0, horizon);
  for (int i = 0; i + 1 < n_pieces; ++i) sig.breakpoints.push_back(ut(rng));
  std::sort(sig.breakpoints.begin(), sig.breakpoints.end());
  for (int i = 0; i < n_pieces; ++i) {
    std::vector<double> v;
    v.reserve(D.size());
    for (const auto& [lo, hi] : D) {
      std::uniform_real_distribution<double> uv(lo, hi);
      v.push_back(uv(rng));
    }
    sig.values.push_back(std::move(v));
  }
  return sig;
}

Trajectory integrate(const Rhs& rhs, std::span<const double> s0, const SimConfig& cfg) {
  validate(cfg);
  Trajectory traj;
  std::vector<double> y(s0.begin(), s0.end());
  traj.times.push_back(cfg.t0);
  traj.x.emplace_back(y);
  auto emit = [&](double t, const std::vector<double>& s) {
    traj.times.push_back(t);
    traj.x.emplace_back(s);
  };
  if (cfg.method == Method::RK4) {
    run_rk4(rhs, y, cfg.t0, cfg.T, cfg, traj, emit);
  } else {
    run_rk45(rhs, y, cfg.t0, cfg.T, cfg, traj, emit);
  }
  return traj;
}

namespace {

std::vector<double> segment_ends(const DisturbanceSignal& d, double t0, double T) {
  std::vector<double> ends;
  for (double bp : d.breakpoints) {
    if (bp > t0 && bp < T) ends.push_back(bp);
  }
  ends.push_back(T);
  return ends;
}

// shared slot image for every expression in a joint run
struct JointLayout {
  SlotLayout layout;
  int total = 0;

  JointLayout(const SystemModel& sys, int nz, bool with_w) {
    layout.t_slot = 0;
    layout.x0 = 1;
    layout.nx = sys.n;
    layout.d0 = 1 + sys.n;
    layout.nd = sys.l_dist;
    layout.y0 = layout.d0 + sys.l_dist;
    layout.ny = 1;
    layout.z0 = layout.y0 + 1;
    layout.nz = nz;
    total = layout.z0 + nz;
    if (with_w) {
      layout.w_slot = total;
      ++total;
    }
  }
};

}  // namespace

Trajectory simulate_plant(const SystemModel& sys, const DisturbanceSignal& d,
                          std::span<const double> x0, const SimConfig& cfg) {
  validate(cfg);
  if (static_cast<int>(x0.size()) != sys.n) {
    throw std::invalid_argument("initial state dimension mismatch");
  }
  JointLayout jl(sys, 0, false);
  std::vector<Tape> f_tapes(static_cast<std::size_t>(sys.n));
  for (int i = 0; i < sys.n; ++i) {
    f_tapes[static_cast<std::size_t>(i)].compile(sys.f[static_cast<std::size_t>(i)], jl.layout);
  }

  Trajectory traj;
  std::vector<double> y(x0.begin(), x0.end());
  traj.times.push_back(cfg.t0);
  traj.x.emplace_back(y);
  auto emit = [&](double t, const std::vector<double>& s) {
    traj.times.push_back(t);
    traj.x.emplace_back(s);
  };

  std::vector<double> buf(static_cast<std::size_t>(jl.total), 0.0);
  double seg_start = cfg.t0;
  for (double seg_end : segment_ends(d, cfg.t0, cfg.T)) {
    std::span<const double> dv = d.value_at(seg_start);
    for (std::size_t j = 0; j < dv.size(); ++j) buf[static_cast<std::size_t>(jl.layout.d0) + j] = dv[j];
    Rhs rhs = [&](double t, std::span<const double> s, std::span<double> ds) {
      buf[0] = t;
      std::copy(s.begin(), s.end(), buf.begin() + jl.layout.x0);
      for (int i = 0; i < sys.n; ++i) {
        ds[static_cast<std::size_t>(i)] = f_tapes[static_cast<std::size_t>(i)].eval(buf);
      }
    };
    SimConfig seg_cfg = cfg;
    seg_cfg.t0 = seg_start;
    seg_cfg.T = seg_end;
    if (cfg.method == Method::RK4) {
      run_rk4(rhs, y, seg_start, seg_end, seg_cfg, traj, emit);
    } else {
      run_rk45(rhs, y, seg_start, seg_end, seg_cfg, traj, emit);
    }
    if (traj.blow_up || traj.stiff) break;
    seg_start = seg_end;
  }
  return traj;
}

Trajectory cosimulate(const SystemModel& sys, const EstimatorSpec& spec,
                      const DisturbanceSignal& d, std::span<const double> x0,
                      std::span<const double> z0, double w0, const SimConfig& cfg) {
  validate(cfg);
  int nz = spec.m + 1;
  if (static_cast<int>(x0.size()) != sys.n || static_cast<int>(z0.size()) != nz) {
    throw std::invalid_argument("initial state dimension mismatch");
  }
  JointLayout jl(sys, nz, spec.has_w);
  std::vector<Tape> f_tapes(static_cast<std::size_t>(sys.n));
  for (int i = 0; i < sys.n; ++i) {
    f_tapes[static_cast<std::size_t>(i)].compile(sys.f[static_cast<std::size_t>(i)], jl.layout);
  }
  Tape h_tape;
  h_tape.compile(sys.h.front(), jl.layout);
  std::vector<Tape> z_tapes(static_cast<std::size_t>(nz));
  for (int i = 0; i < nz; ++i) {
    z_tapes[static_cast<std::size_t>(i)].compile(spec.rhs[static_cast<std::size_t>(i)], jl.layout);
  }
  Tape w_tape;
  if (spec.has_w) w_tape.compile(spec.w_rhs, jl.layout);

  std::size_t dim = static_cast<std::size_t>(sys.n + nz) + (spec.has_w ? 1u : 0u);
  std::vector<double> s(dim);
  std::copy(x0.begin(), x0.end(), s.begin());
  std::copy(z0.begin(), z0.end(), s.begin() + sys.n);
  if (spec.has_w) s.back() = w0;

  Trajectory traj;
  std::vector<double> buf(static_cast<std::size_t>(jl.total), 0.0);
  auto emit = [&](double t, const std::vector<double>& state) {
    traj.times.push_back(t);
    traj.x.emplace_back(state.begin(), state.begin() + sys.n);
    traj.z.emplace_back(state.begin() + sys.n, state.begin() + sys.n + nz);
    if (spec.has_w) traj.w.push_back(state.back());
    buf[0] = t;
    std::copy(state.begin(), state.begin() + sys.n, buf.begin() + jl.layout.x0);
    double yv = h_tape.eval(buf);
    traj.y.push_back(yv);
    traj.xhat.push_back(reconstruct(spec, t, yv, traj.z.back()));
  };
  emit(cfg.t0, s);

  double seg_start = cfg.t0;
  for (double seg_end : segment_ends(d, cfg.t0, cfg.T)) {
    std::span<const double> dv = d.value_at(seg_start);
    for (std::size_t j = 0; j < dv.size(); ++j) buf[static_cast<std::size_t>(jl.layout.d0) + j] = dv[j];
    Rhs rhs = [&](double t, std::span<const double> st, std::span<double> ds) {
      buf[0] = t;
      std::copy(st.begin(), st.begin() + sys.n, buf.begin() + jl.layout.x0);
      std::copy(st.begin() + sys.n, st.begin() + sys.n + nz, buf.begin() + jl.layout.z0);
      if (spec.has_w) buf[static_cast<std::size_t>(jl.layout.w_slot)] = st.back();
      buf[static_cast<std::size_t>(jl.layout.y0)] = h_tape.eval(buf);
      for (int i = 0; i < sys.n; ++i) {
        ds[static_cast<std::size_t>(i)] = f_tapes[static_cast<std::size_t>(i)].eval(buf);
      }
      for (int i = 0; i < nz; ++i) {
        ds[static_cast<std::size_t>(sys.n + i)] = z_tapes[static_cast<std::size_t>(i)].eval(buf);
      }
      if (spec.has_w) ds[dim - 1] = w_tape.eval(buf);
    };
    SimConfig seg_cfg = cfg;
    seg_cfg.t0 = seg_start;
    seg_cfg.T = seg_end;
    if (cfg.method == Method::RK4) {
      run_rk4(rhs, s, seg_start, seg_end, seg_cfg, traj, emit);
    } else {
      run_rk45(rhs, s, seg_start, seg_end, seg_cfg, traj, emit);
    }
    if (traj.blow_up || traj.stiff) break;
    seg_start = seg_end;
  }
  return traj;
}

double max_sat_argument(const EstimatorSpec& spec, const SystemModel& sys,
                        const DisturbanceSignal& d, const Trajectory& traj) {
  if (spec.kind != EstimatorKind::Observer) return 0.0;
  (void)sys;
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    EvalContext ctx;
    ctx.t = traj.times[i];
    ctx.y = std::span<const double>(&traj.y[i], 1);
    ctx.z = traj.z[i];
    if (spec.has_w) ctx.w = traj.w[i];
    ctx.d = d.value_at(traj.times[i]);
    worst = std::max(worst, std::fabs(eval(spec.sat_arg, ctx)));
  }
  return worst;
}

void write_csv(const Trajectory& traj, const ScalarTimeFunction* phi, std::ostream& out) {
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  std::size_t n = traj.x.empty() ? 0 : traj.x.front().size();
  out << "t";
  for (std::size_t i = 1; i <= n; ++i) out << ",x_" << i;
  bool joint = !traj.z.empty();
  if (joint) {
    for (std::size_t i = 0; i < traj.z.front().size(); ++i) out << ",z_" << i;
    if (!traj.w.empty()) out << ",w";
    for (std::size_t i = 1; i <= n; ++i) out << ",xhat_" << i;
    out << ",abs_err,weighted_err";
  }
  out << "\n";
  for (std::size_t r = 0; r < traj.times.size(); ++r) {
    put(traj.times[r]);
    for (double v : traj.x[r]) {
      out << ",";
      put(v);
    }
    if (joint) {
      for (double v : traj.z[r]) {
        out << ",";
        put(v);
      }
      if (!traj.w.empty()) {
        out << ",";
        put(traj.w[r]);
      }
      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double e = traj.xhat[r][i] - traj.x[r][i];
        err += e * e;
      }
      err = std::sqrt(err);
      for (double v : traj.xhat[r]) {
        out << ",";
        put(v);
      }
      out << ",";
      put(err);
      out << ",";
      put(phi ? phi->value(traj.times[r]) * err : err);
    }
    out << "\n";
  }
}

}  // namespace tvest
