#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tvest/expr.hpp"

namespace testsup {

using tvest::Expr;

inline double eval_at(const Expr& e, double t, const std::vector<double>& x) {
  tvest::EvalContext ctx;
  ctx.t = t;
  ctx.x = std::span<const double>(x.data(), x.size());
  return tvest::eval(e, ctx);
}

// Random smooth expressions in t, x1..x3 with tame magnitudes. Used for the
// derivative-vs-finite-difference property and for tape cross-checks.
class SmoothGen {
 public:
  explicit SmoothGen(std::uint64_t seed) : rng_(seed) {}

  Expr gen(int depth) {
    if (depth <= 0) return leaf();
    switch (pick(7)) {
      case 0: return tvest::add(gen(depth - 1), gen(depth - 1));
      case 1: return tvest::sub(gen(depth - 1), gen(depth - 1));
      case 2: return tvest::mul(gen(depth - 1), gen(depth - 1));
      case 3: return tvest::pow_rat(gen(depth - 1), tvest::rat(2 + static_cast<long long>(pick(2))));
      case 4: return tvest::exp_e(tvest::mul(tvest::constant(0.25), gen(depth - 1)));
      case 5: return tvest::sin_e(gen(depth - 1));
      default: return tvest::cos_e(gen(depth - 1));
    }
  }

  Expr leaf() {
    switch (pick(5)) {
      case 0: return tvest::constant(uniform(-1.5, 1.5));
      case 1: return tvest::t_var();
      case 2: return tvest::x_var(1);
      case 3: return tvest::x_var(2);
      default: return tvest::x_var(3);
    }
  }

  std::vector<double> point() {
    return {uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0)};
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  std::uint64_t pick(std::uint64_t n) { return rng_() % n; }

  std::mt19937_64 rng_;
};

}  // namespace testsup
