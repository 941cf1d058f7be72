#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tvest/gaindesign.hpp"
#include "tvest/obsmap.hpp"
#include "tvest/timefun.hpp"

namespace tvest {

enum class EstimatorKind { Estimator, Observer };

// Growth data for a plant: beta_tilde(t) * kappa_a(|x0|) dominates the chain
// magnitudes |y| + |Dy| + |dy_m/dt| along trajectories, and the pair
// (rfc_mu, rfc_a) dominates |x(t)| itself. kappa_a and rfc_a are expressions
// in the scalar s.
struct BoundData {
  ScalarTimeFunction beta_tilde;
  Expr kappa_a;
  ScalarTimeFunction rfc_mu;
  Expr rfc_a;
};

// Assembled z-dynamics. The state is z_0..z_m; inside the stored expressions
// slot z_j of the state appears as the variable z{j+1}, so rhs[j] gives
// dz_j/dt as a function of (t, y, z1..z{m+1}) plus w and d where present.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Estimator;
  ObservabilityChain chain;
  GainDesign design;
  ScalarTimeFunction phi;
  std::optional<ScalarTimeFunction> beta_tilde;
  int m = 0;
  std::vector<Expr> rhs;
  Expr w_rhs;     // observers only: dw/dt = -w
  Expr beta;      // observers only: beta_tilde(t) (1 + exp(t)|w|)
  Expr sat_arg;   // observers only: closed-form dy_m/dt estimate over beta
  bool has_w = false;
};

// Innovation feedback on the first component: row j of z gets
// a(t,y) R^{j+1} q(t)^{j+1} k_{j+1} (z_0 - g(t,y)), and row j < m also
// carries the chain drift a z_{j+1} - inj_{j+1}(t,y). Requires the
// reconstruction map attached and a design of dimension m+1.
EstimatorSpec build_estimator(const ObservabilityChain& chain, const GainDesign& design,
                              const ScalarTimeFunction& phi);

// Same feedback, but the last row carries the saturated drift estimate
// beta(t,w) sat(ytilde_{m+1}/beta(t,w)) and the spec gains the w equation.
// Requires the chain closure.
EstimatorSpec build_observer(const ObservabilityChain& chain, const GainDesign& design,
                             const ScalarTimeFunction& phi, const BoundData& bounds);

// Initialization that keeps the observer exact: z matches the derived
// outputs at (t0, x0) and w dominates the chain magnitude with a safety
// margin on top.
struct InitState {
  std::vector<double> z0;
  double w0 = 0.0;
};
InitState consistent_init(const ObservabilityChain& chain, const BoundData& bounds, double t0,
                          std::span<const double> x0, double margin = 0.1);

// Evaluate the reconstruction map at (t, y, z). Accepts either the bare
// derived-output vector (length m) or the full estimator state (length m+1,
// leading z_0 ignored).
std::vector<double> reconstruct(const EstimatorSpec& spec, double t, double y,
                                std::span<const double> z);

}  // namespace tvest
