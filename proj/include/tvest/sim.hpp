#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tvest/estimator.hpp"
#include "tvest/obsmap.hpp"

namespace tvest {

// Right-continuous piecewise-constant disturbance: values[i] applies on
// [breakpoints[i-1], breakpoints[i]), with values.front() before the first
// breakpoint and values.back() after the last. values.size() is always
// breakpoints.size() + 1.
struct DisturbanceSignal {
  std::vector<double> breakpoints;
  std::vector<std::vector<double>> values;

  std::span<const double> value_at(double t) const;
};

// Uniform values in the box D, n_pieces - 1 uniformly ordered interior
// breakpoints on (0, horizon). Reproducible from the generator state.
DisturbanceSignal random_disturbance(std::mt19937_64& rng,
                                     const std::vector<std::pair<double, double>>& D,
                                     double horizon, int n_pieces);

enum class Method { RK45, RK4 };

struct SimConfig {
  double t0 = 0.0;
  double T = 1.0;
  Method method = Method::RK45;
  double rtol = 1e-10;
  double atol = 1e-12;
  long max_steps = 2000000;
  double min_step = 1e-14;
  double fixed_step = 1e-3;  // RK4 only
};

// Time grid plus state history. Joint runs also carry the measured output,
// the reconstruction, and the w column. Truncated runs keep every finite row
// produced so far and raise a flag instead of throwing.
struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> z;
  std::vector<double> w;
  std::vector<double> y;
  std::vector<std::vector<double>> xhat;
  std::vector<double> steps;
  bool blow_up = false;
  bool stiff = false;
  std::string diagnostic;
};

using Rhs = std::function<void(double, std::span<const double>, std::span<double>)>;

// Integrates s' = rhs(t, s) over [t0, T]. Dormand-Prince 4(5) with step
// control against atol + rtol |s|, or classic RK4 on a fixed grid. Output
// rows at the accepted nodes.
Trajectory integrate(const Rhs& rhs, std::span<const double> s0, const SimConfig& cfg);

// Plant alone under the disturbance signal; the integrator restarts at each
// breakpoint so d enters exactly piecewise constant.
Trajectory simulate_plant(const SystemModel& sys, const DisturbanceSignal& d,
                          std::span<const double> x0, const SimConfig& cfg);

// Plant and estimator as one state vector, y = h(t, x) fed continuously.
// w0 is ignored unless the spec carries the w equation.
Trajectory cosimulate(const SystemModel& sys, const EstimatorSpec& spec,
                      const DisturbanceSignal& d, std::span<const double> x0,
                      std::span<const double> z0, double w0, const SimConfig& cfg);

// Largest |sat argument| over the trajectory nodes; meaningful for observer
// runs, where staying at or below 1 means the drift estimate never clipped.
double max_sat_argument(const EstimatorSpec& spec, const SystemModel& sys,
                        const DisturbanceSignal& d, const Trajectory& traj);

// One row per node: t, x_1..x_n, z_0..z_m[, w], xhat_1..xhat_n, abs_err,
// weighted_err, all to 17 significant digits. Plain plant runs emit just t
// and the states.
void write_csv(const Trajectory& traj, const ScalarTimeFunction* phi, std::ostream& out);

}  // namespace tvest
