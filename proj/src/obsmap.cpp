#include "tvest/obsmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tvest {

namespace {

double eval_at(const Expr& e, double t, std::span<const double> x, std::span<const double> d,
               std::span<const double> y, std::span<const double> z) {
  EvalContext ctx;
  ctx.t = t;
  ctx.x = x;
  ctx.d = d;
  ctx.y = y;
  ctx.z = z;
  return eval(e, ctx);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct Cloud {
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> d;  // d_samples draws, shared across points
};

Cloud draw_cloud(const SystemModel& sys, const SampleOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> ut(0.0, opt.t_max);
  std::uniform_real_distribution<double> ux(-opt.x_box, opt.x_box);
  Cloud c;
  c.t.resize(static_cast<std::size_t>(opt.points));
  c.x.resize(static_cast<std::size_t>(opt.points));
  for (int p = 0; p < opt.points; ++p) {
    c.t[static_cast<std::size_t>(p)] = ut(rng);
    auto& xp = c.x[static_cast<std::size_t>(p)];
    xp.resize(static_cast<std::size_t>(sys.n));
    for (double& v : xp) v = ux(rng);
  }
  int nd = std::max(1, opt.d_samples);
  c.d.resize(static_cast<std::size_t>(nd));
  for (auto& dv : c.d) {
    dv.resize(static_cast<std::size_t>(sys.l_dist));
    for (int j = 0; j < sys.l_dist; ++j) {
      std::uniform_real_distribution<double> ud(sys.D[static_cast<std::size_t>(j)].first,
                                                sys.D[static_cast<std::size_t>(j)].second);
      dv[static_cast<std::size_t>(j)] = ud(rng);
    }
  }
  return c;
}

const Expr* find_singular(const Expr& e) {
  if (e->op == Op::DSign || e->op == Op::DZero || e->op == Op::DSat) return &e;
  if (e->a) {
    if (const Expr* s = find_singular(e->a)) return s;
  }
  if (e->b) {
    if (const Expr* s = find_singular(e->b)) return s;
  }
  return nullptr;
}

// Time derivative of w(t, x) along the field: dw/dt + dw/dx . f.
Expr lie_derivative(const Expr& w, const std::vector<Expr>& f) {
  Expr out = differentiate(w, t_ref());
  for (std::size_t j = 0; j < f.size(); ++j) {
    out = out + differentiate(w, x_ref(static_cast<int>(j) + 1)) * f[j];
  }
  return out;
}

void check_chain_vars(const Expr& e, const SystemModel& sys, const char* what) {
  for (const VarRef& v : free_vars(e)) {
    bool ok = v.kind == VarKind::T || (v.kind == VarKind::Y && v.index == 1) ||
              (v.kind == VarKind::D && sys.known_disturbance && v.index <= sys.l_dist);
    if (!ok) {
      throw std::invalid_argument(std::string(what) +
                                  " may only involve t and the output: " + to_string(e));
    }
  }
}

void check_d_independent(const Expr& y_i, int idx, const SystemModel& sys, const Cloud& cloud,
                         const SampleOptions& opt) {
  bool touches_d = false;
  for (const VarRef& v : free_vars(y_i)) {
    if (v.kind == VarKind::D) touches_d = true;
  }
  if (!touches_d) return;
  for (std::size_t p = 0; p < cloud.t.size(); ++p) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& dv : cloud.d) {
      double v = eval_at(y_i, cloud.t[p], cloud.x[p], dv, {}, {});
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (hi - lo > opt.tol) {
      throw std::runtime_error(
          "not robustly observable under supplied injections: y_" + std::to_string(idx) +
          " varies with d by " + fmt(hi - lo) + " at t = " + fmt(cloud.t[p]));
    }
  }
}

}  // namespace

ModelReport validate_model(const SystemModel& sys, const SampleOptions& opt) {
  if (sys.n < 1 || static_cast<int>(sys.f.size()) != sys.n ||
      static_cast<int>(sys.h.size()) != sys.k_out ||
      static_cast<int>(sys.D.size()) != sys.l_dist) {
    throw std::invalid_argument("system model dimensions are inconsistent");
  }
  Cloud cloud = draw_cloud(sys, opt);
  ModelReport rep;
  std::vector<double> zero(static_cast<std::size_t>(sys.n), 0.0);
  if (sys.origin_is_equilibrium) {
    int nt = std::min<int>(64, opt.points);
    for (int p = 0; p < nt; ++p) {
      double t = cloud.t[static_cast<std::size_t>(p)];
      for (const auto& dv : cloud.d) {
        for (const Expr& fj : sys.f) {
          rep.origin_defect = std::max(rep.origin_defect,
                                       std::fabs(eval_at(fj, t, zero, dv, {}, {})));
        }
      }
      for (const Expr& hj : sys.h) {
        rep.origin_defect =
            std::max(rep.origin_defect, std::fabs(eval_at(hj, t, zero, {}, {}, {})));
      }
    }
    rep.origin_ok = rep.origin_defect <= 1e-12;
  }

  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15u);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  int bases = std::min<int>(128, opt.points);
  double scale = 1e-4 * opt.x_box;
  std::vector<double> bumped(static_cast<std::size_t>(sys.n));
  for (int p = 0; p < bases; ++p) {
    const auto& xp = cloud.x[static_cast<std::size_t>(p)];
    double t = cloud.t[static_cast<std::size_t>(p)];
    const auto& dv = cloud.d[static_cast<std::size_t>(p) % cloud.d.size()];
    double norm = 0.0;
    for (int j = 0; j < sys.n; ++j) {
      double e = unit(rng);
      bumped[static_cast<std::size_t>(j)] = xp[static_cast<std::size_t>(j)] + scale * e;
      norm += scale * e * scale * e;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    double diff = 0.0;
    for (const Expr& fj : sys.f) {
      double a = eval_at(fj, t, xp, dv, {}, {});
      double b = eval_at(fj, t, bumped, dv, {}, {});
      diff = std::max(diff, std::fabs(b - a));
    }
    rep.lipschitz_bound = std::max(rep.lipschitz_bound, diff / norm);
  }
  return rep;
}

ObservabilityChain build_chain(const SystemModel& sys, const Expr& g, const Expr& a,
                               const std::vector<Expr>& injections, int m,
                               const SampleOptions& opt) {
  if (sys.k_out != 1) {
    throw std::invalid_argument("chains are built for single-output systems");
  }
  if (m < 0) throw std::invalid_argument("chain length must be nonnegative");
  if (static_cast<int>(injections.size()) != m) {
    throw std::invalid_argument("expected " + std::to_string(m) + " injections, got " +
                                std::to_string(injections.size()));
  }
  check_chain_vars(g, sys, "g");
  check_chain_vars(a, sys, "a");
  for (const Expr& inj : injections) check_chain_vars(inj, sys, "an injection");

  Cloud cloud = draw_cloud(sys, opt);
  const Expr& h = sys.h.front();

  // positivity of the multiplier over the sampled outputs
  {
    double inf_a = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < cloud.t.size(); ++p) {
      double yv = eval_at(h, cloud.t[p], cloud.x[p], {}, {}, {});
      std::span<const double> ys(&yv, 1);
      const auto& dv = cloud.d[p % cloud.d.size()];
      inf_a = std::min(inf_a, eval_at(a, cloud.t[p], cloud.x[p], dv, ys, {}));
    }
    if (!(inf_a > 0.0)) {
      throw std::runtime_error("chain multiplier a is not positive on the sample cloud (inf = " +
                               fmt(inf_a) + ")");
    }
  }

  // g and the injections must vanish with the output
  {
    double zero_y = 0.0;
    std::span<const double> ys(&zero_y, 1);
    std::vector<double> mid(static_cast<std::size_t>(sys.l_dist));
    for (int j = 0; j < sys.l_dist; ++j) {
      mid[static_cast<std::size_t>(j)] =
          0.5 * (sys.D[static_cast<std::size_t>(j)].first + sys.D[static_cast<std::size_t>(j)].second);
    }
    for (int p = 0; p < std::min<int>(64, opt.points); ++p) {
      double t = cloud.t[static_cast<std::size_t>(p)];
      if (std::fabs(eval_at(g, t, {}, mid, ys, {})) > 1e-12) {
        throw std::invalid_argument("g(t, 0) must vanish");
      }
      for (std::size_t i = 0; i < injections.size(); ++i) {
        if (std::fabs(eval_at(injections[i], t, {}, mid, ys, {})) > 1e-12) {
          throw std::invalid_argument("injection " + std::to_string(i + 1) +
                                      " does not vanish at y = 0");
        }
      }
    }
  }

  ObservabilityChain chain;
  chain.m = m;
  chain.g = g;
  chain.a = a;
  chain.injections = injections;

  std::vector<std::pair<VarRef, Expr>> y_to_h = {{y_ref(1), h}};
  Expr a_x = simplify(substitute(a, y_to_h));
  chain.y_exprs.push_back(simplify(substitute(g, y_to_h)));
  for (int i = 1; i <= m; ++i) {
    Expr inj_x = substitute(injections[static_cast<std::size_t>(i - 1)], y_to_h);
    Expr raw;
    try {
      raw = lie_derivative(chain.y_exprs.back(), sys.f) + inj_x;
    } catch (const DiffError& err) {
      throw std::runtime_error("chain step " + std::to_string(i) +
                               " cannot be differentiated: " + err.what());
    }
    Expr y_i = simplify(raw / a_x);
    if (const Expr* s = find_singular(y_i)) {
      throw std::runtime_error("chain map y_" + std::to_string(i) +
                               " keeps a sgn/abs kink that the injections do not cancel: " +
                               to_string(*s));
    }
    check_d_independent(y_i, i, sys, cloud, opt);
    chain.y_exprs.push_back(std::move(y_i));
  }
  return chain;
}

void attach_psi(ObservabilityChain& chain, const SystemModel& sys, std::vector<Expr> Psi,
                const SampleOptions& opt) {
  if (static_cast<int>(Psi.size()) != sys.n) {
    throw std::invalid_argument("Psi needs one component per state");
  }
  Cloud cloud = draw_cloud(sys, opt);
  const Expr& h = sys.h.front();

  // Psi(t, 0, 0) = 0
  {
    double zy = 0.0;
    std::span<const double> ys(&zy, 1);
    std::vector<double> zz(static_cast<std::size_t>(chain.m), 0.0);
    for (int p = 0; p < std::min<int>(64, opt.points); ++p) {
      for (const Expr& c : Psi) {
        if (std::fabs(eval_at(c, cloud.t[static_cast<std::size_t>(p)], {}, {}, ys, zz)) > 1e-12) {
          throw std::invalid_argument("Psi(t, 0, 0) must vanish");
        }
      }
    }
  }

  std::vector<double> z(static_cast<std::size_t>(chain.m));
  for (std::size_t p = 0; p < cloud.t.size(); ++p) {
    double t = cloud.t[p];
    double yv = eval_at(h, t, cloud.x[p], {}, {}, {});
    std::span<const double> ys(&yv, 1);
    for (int i = 1; i <= chain.m; ++i) {
      z[static_cast<std::size_t>(i - 1)] =
          eval_at(chain.y_exprs[static_cast<std::size_t>(i)], t, cloud.x[p], {}, {}, {});
    }
    for (int j = 0; j < sys.n; ++j) {
      double rec = eval_at(Psi[static_cast<std::size_t>(j)], t, {}, {}, ys, z);
      double defect = std::fabs(rec - cloud.x[p][static_cast<std::size_t>(j)]);
      if (defect > opt.tol) {
        throw std::runtime_error("state reconstruction identity fails for x_" +
                                 std::to_string(j + 1) + " by " + fmt(defect) + " at t = " +
                                 fmt(t));
      }
    }
  }
  chain.Psi = std::move(Psi);
  chain.has_psi = true;
}

void build_closure(ObservabilityChain& chain, const SystemModel& sys, std::vector<Expr> Psi,
                   const Expr& y_next_tilde, const SampleOptions& opt) {
  if (!Psi.empty()) {
    attach_psi(chain, sys, std::move(Psi), opt);
  }
  if (!chain.has_psi) {
    throw std::invalid_argument("closure needs the reconstruction map attached first");
  }

  Cloud cloud = draw_cloud(sys, opt);
  const Expr& h = sys.h.front();

  Expr y_next;
  try {
    y_next = simplify(lie_derivative(chain.y_exprs.back(), sys.f));
  } catch (const DiffError& err) {
    throw std::runtime_error(std::string("derivative closure cannot be formed: ") + err.what());
  }
  if (const Expr* s = find_singular(y_next)) {
    throw std::runtime_error(
        "derivative closure keeps a sgn/abs kink that does not cancel: " + to_string(*s));
  }
  if (!sys.known_disturbance) {
    check_d_independent(y_next, chain.m + 1, sys, cloud, opt);
  }

  // supplied closed form must reproduce y_next through the chain data
  std::vector<double> z(static_cast<std::size_t>(chain.m));
  for (std::size_t p = 0; p < cloud.t.size(); ++p) {
    double t = cloud.t[p];
    double yv = eval_at(h, t, cloud.x[p], {}, {}, {});
    std::span<const double> ys(&yv, 1);
    for (int i = 1; i <= chain.m; ++i) {
      z[static_cast<std::size_t>(i - 1)] =
          eval_at(chain.y_exprs[static_cast<std::size_t>(i)], t, cloud.x[p], {}, {}, {});
    }
    const auto& dv = cloud.d[p % cloud.d.size()];
    double direct = eval_at(y_next, t, cloud.x[p], dv, {}, {});
    double closed = eval_at(y_next_tilde, t, {}, dv, ys, z);
    double defect = std::fabs(closed - direct);
    if (defect > opt.tol * std::max(1.0, std::fabs(direct))) {
      throw std::runtime_error("derivative closure identity fails by " + fmt(defect) +
                               " at t = " + fmt(t));
    }
  }

  // difference quotients of y_next_tilde(t, h(t,x), z) in (x, z) at two
  // scales; a diverging ratio means the closed form is not locally Lipschitz
  std::mt19937_64 rng(opt.seed ^ 0xc2b2ae3d27d4eb4fu);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double z_box = 4.0 * opt.x_box;
  auto bar_eval = [&](double t, std::span<const double> x, std::span<const double> zs,
                      std::span<const double> dv) {
    double yv = eval_at(h, t, x, {}, {}, {});
    std::span<const double> ys(&yv, 1);
    return eval_at(y_next_tilde, t, {}, dv, ys, zs);
  };
  double coarse = 0.0, fine = 0.0;
  std::vector<double> xb(static_cast<std::size_t>(sys.n));
  std::vector<double> zb(static_cast<std::size_t>(chain.m));
  std::vector<double> xq(static_cast<std::size_t>(sys.n));
  std::vector<double> zq(static_cast<std::size_t>(chain.m));
  for (int base = 0; base < 128; ++base) {
    double t = cloud.t[static_cast<std::size_t>(base % opt.points)];
    const auto& dv = cloud.d[static_cast<std::size_t>(base) % cloud.d.size()];
    bool at_zero = base % 8 == 0;  // force bases on the z axes where kinks live
    for (double& v : xb) v = at_zero ? 0.0 : unit(rng) * opt.x_box;
    for (double& v : zb) v = at_zero ? 0.0 : unit(rng) * z_box;
    double f0 = bar_eval(t, xb, zb, dv);
    for (double scale : {1e-2, 1e-5}) {
      double norm = 0.0;
      for (std::size_t j = 0; j < xq.size(); ++j) {
        double e = unit(rng) * scale;
        xq[j] = xb[j] + e;
        norm += e * e;
      }
      for (std::size_t j = 0; j < zq.size(); ++j) {
        double e = unit(rng) * scale;
        zq[j] = zb[j] + e;
        norm += e * e;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      double q = std::fabs(bar_eval(t, xq, zq, dv) - f0) / norm;
      (scale == 1e-2 ? coarse : fine) = std::max(scale == 1e-2 ? coarse : fine, q);
    }
  }
  if (fine > 50.0 * coarse + 10.0) {
    throw std::runtime_error(
        "derivative closure is not locally Lipschitz near the sampled points "
        "(difference quotient grows from " +
        fmt(coarse) + " to " + fmt(fine) + " as the step shrinks)");
  }
  chain.closure_lipschitz = coarse;
  chain.y_next = std::move(y_next);
  chain.y_next_tilde = y_next_tilde;
  chain.closed = true;
}

std::vector<double> eval_Dy(const ObservabilityChain& chain, double t,
                            std::span<const double> x) {
  std::vector<double> out(static_cast<std::size_t>(chain.m));
  for (int i = 1; i <= chain.m; ++i) {
    out[static_cast<std::size_t>(i - 1)] =
        eval_at(chain.y_exprs[static_cast<std::size_t>(i)], t, x, {}, {}, {});
  }
  return out;
}

}  // namespace tvest
