#include "tvest/estimator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tvest {

namespace {

// a(t,y) R^i q(t)^i k_i (z_0 - g(t,y)) with z_0 spelled z1
Expr feedback_row(const ObservabilityChain& chain, const GainDesign& design, int i) {
  Expr gain = constant(std::pow(design.R, i) * design.k[static_cast<std::size_t>(i - 1)]);
  Expr clock = pow_rat(design.q.body(), Rational{i, 1});
  return simplify(chain.a * gain * clock * (z_var(1) - chain.g));
}

void check_dims(const ObservabilityChain& chain, const GainDesign& design) {
  if (design.n != chain.m + 1) {
    throw std::invalid_argument("design dimension " + std::to_string(design.n) +
                                " does not match chain length " + std::to_string(chain.m) +
                                " + 1");
  }
}

}  // namespace

EstimatorSpec build_estimator(const ObservabilityChain& chain, const GainDesign& design,
                              const ScalarTimeFunction& phi) {
  check_dims(chain, design);
  if (!chain.has_psi) {
    throw std::invalid_argument("estimator needs the reconstruction map attached");
  }
  EstimatorSpec spec{EstimatorKind::Estimator, chain, design, phi, std::nullopt, chain.m};
  for (int j = 0; j < chain.m; ++j) {
    Expr drift = chain.a * z_var(j + 2) - chain.injections[static_cast<std::size_t>(j)];
    spec.rhs.push_back(simplify(drift + feedback_row(chain, design, j + 1)));
  }
  spec.rhs.push_back(feedback_row(chain, design, chain.m + 1));
  return spec;
}

EstimatorSpec build_observer(const ObservabilityChain& chain, const GainDesign& design,
                             const ScalarTimeFunction& phi, const BoundData& bounds) {
  check_dims(chain, design);
  if (!chain.closed) {
    throw std::invalid_argument("observer needs the derivative closure of the chain");
  }
  EstimatorSpec spec{EstimatorKind::Observer, chain, design, phi, bounds.beta_tilde, chain.m};
  for (int j = 0; j < chain.m; ++j) {
    Expr drift = chain.a * z_var(j + 2) - chain.injections[static_cast<std::size_t>(j)];
    spec.rhs.push_back(simplify(drift + feedback_row(chain, design, j + 1)));
  }

  spec.beta = simplify(bounds.beta_tilde.body() * (constant(1.0) + exp_e(t_var()) * abs_e(w_var())));

  // the closure is written over the derived outputs z_1..z_m; in the
  // estimator state those sit one slot later
  std::vector<std::pair<VarRef, Expr>> shift;
  for (int k = chain.m; k >= 1; --k) {
    shift.push_back({z_ref(k), z_var(k + 1)});
  }
  Expr closure = substitute(chain.y_next_tilde, shift);
  spec.sat_arg = simplify(closure / spec.beta);
  spec.rhs.push_back(
      simplify(spec.beta * sat_e(spec.sat_arg) + feedback_row(chain, design, chain.m + 1)));
  spec.w_rhs = -w_var();
  spec.has_w = true;
  return spec;
}

InitState consistent_init(const ObservabilityChain& chain, const BoundData& bounds, double t0,
                          std::span<const double> x0, double margin) {
  InitState init;
  EvalContext ctx;
  ctx.t = t0;
  ctx.x = x0;
  for (const Expr& yi : chain.y_exprs) {
    init.z0.push_back(eval(yi, ctx));
  }
  double norm = 0.0;
  for (double v : x0) norm += v * v;
  norm = std::sqrt(norm);
  EvalContext sctx;
  sctx.s = norm;
  init.w0 = eval(bounds.kappa_a, sctx) * std::exp(-t0) * (1.0 + margin);
  return init;
}

std::vector<double> reconstruct(const EstimatorSpec& spec, double t, double y,
                                std::span<const double> z) {
  std::span<const double> dy = z;
  if (static_cast<int>(z.size()) == spec.m + 1) {
    dy = z.subspan(1);
  } else if (static_cast<int>(z.size()) != spec.m) {
    throw std::invalid_argument("reconstruction expects the derived outputs or the full state");
  }
  EvalContext ctx;
  ctx.t = t;
  ctx.y = std::span<const double>(&y, 1);
  ctx.z = dy;
  std::vector<double> out;
  out.reserve(spec.chain.Psi.size());
  for (const Expr& c : spec.chain.Psi) {
    out.push_back(eval(c, ctx));
  }
  return out;
}

}  // namespace tvest
