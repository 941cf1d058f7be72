#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tvest/expr.hpp"

namespace tvest {

// Plant description: x' = f(t, x, d), y = h(t, x), with d confined to the
// box D. When known_disturbance is set, d is a measured input that chain
// data and derivative closures may reference; otherwise every chain map must
// come out independent of it.
struct SystemModel {
  int n = 0;
  int k_out = 1;
  int l_dist = 0;
  std::vector<std::pair<double, double>> D;
  std::vector<Expr> f;
  std::vector<Expr> h;
  bool origin_is_equilibrium = true;
  bool known_disturbance = false;
  std::string name;
};

// Sampling policy shared by the model and chain checks. Points are drawn
// uniformly from [0, t_max] x [-x_box, x_box]^n, disturbances from D.
struct SampleOptions {
  int points = 512;
  int d_samples = 64;
  double tol = 1e-9;
  double t_max = 3.0;
  double x_box = 2.0;
  std::uint64_t seed = 0x73a9d1c5u;
};

struct ModelReport {
  bool origin_ok = true;
  double origin_defect = 0.0;
  double lipschitz_bound = 0.0;
};

// Sampled sanity checks: the origin is an equilibrium with zero output (when
// claimed), and the vector field has finite difference quotients in x on the
// sample box. Reports rather than throws; callers decide what is fatal.
ModelReport validate_model(const SystemModel& sys, const SampleOptions& opt = {});

// The derived-output chain. y_exprs holds y_0..y_m as functions of (t, x);
// g, a and the injections are functions of (t, y). Psi maps (t, y, z_1..z_m)
// back to the state; y_next is the m+1-st derived output in (t, x, d) and
// y_next_tilde its data-driven form in (t, y, z_1..z_m, d).
struct ObservabilityChain {
  int m = 0;
  Expr g;
  Expr a;
  std::vector<Expr> injections;
  std::vector<Expr> y_exprs;
  std::vector<Expr> Psi;
  Expr y_next;
  Expr y_next_tilde;
  bool has_psi = false;
  bool closed = false;
  double closure_lipschitz = 0.0;
};

// Builds y_0 = g(t, h) and y_i = (1/a)(dy_{i-1}/dt + dy_{i-1}/dx . f + inj_i)
// by symbolic recursion, then certifies by sampling that every y_i is
// independent of the disturbance. Throws when a is not positive on the
// sample cloud, when a kink survives differentiation, or when some y_i
// varies with d.
ObservabilityChain build_chain(const SystemModel& sys, const Expr& g, const Expr& a,
                               const std::vector<Expr>& injections, int m,
                               const SampleOptions& opt = {});

// Attaches the reconstruction map and verifies the sampled identity
// Psi(t, h(t,x), Dy(t,x)) = x over the cloud.
void attach_psi(ObservabilityChain& chain, const SystemModel& sys, std::vector<Expr> Psi,
                const SampleOptions& opt = {});

// Completes the chain with the m+1-st derivative y_next (no division, no
// injection) and its supplied closed form. Checks, in order: d-independence
// of y_next (skipped for known disturbances), the sampled identity
// y_next_tilde(t, h, Dy) = y_next, and local Lipschitz continuity of
// y_next_tilde(t, h(t,x), z) in (x, z) by difference quotients at two
// scales. An empty Psi keeps a previously attached map.
void build_closure(ObservabilityChain& chain, const SystemModel& sys, std::vector<Expr> Psi,
                   const Expr& y_next_tilde, const SampleOptions& opt = {});

// Componentwise evaluation of y_1..y_m at (t, x).
std::vector<double> eval_Dy(const ObservabilityChain& chain, double t,
                            std::span<const double> x);

}  // namespace tvest
