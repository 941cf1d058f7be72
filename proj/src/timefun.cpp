#include "tvest/timefun.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tvest {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double eval_at(const Expr& e, double t) {
  EvalContext ctx;
  ctx.t = t;
  return eval(e, ctx);
}

double eval_or_rethrow(const Expr& e, double t) {
  try {
    return eval_at(e, t);
  } catch (const EvalError& err) {
    throw EvalError(std::string(err.what()) + " at t = " + fmt(t));
  }
}

}  // namespace

std::string fn_class_name(FnClass c) {
  switch (c) {
    case FnClass::Plain: return "plain";
    case FnClass::Kplus: return "Kplus";
    case FnClass::Kstar: return "Kstar";
    case FnClass::Kinf: return "Kinf";
  }
  return "?";
}

ScalarTimeFunction::ScalarTimeFunction(Expr body, FnClass claimed)
    : body_(std::move(body)), claimed_(claimed) {
  if (!body_) throw std::invalid_argument("time function: empty body");
  for (const VarRef& v : free_vars(body_))
    if (v.kind != VarKind::T)
      throw std::invalid_argument("time function: body may only reference t, found " + v.name());
  try {
    dbody_ = simplify(differentiate(body_, t_ref()));
  } catch (const DiffError&) {
    dbody_ = nullptr;
  }
}

ScalarTimeFunction ScalarTimeFunction::from_text(const std::string& text, FnClass claimed) {
  return ScalarTimeFunction(parse(text), claimed);
}

double ScalarTimeFunction::value(double t) const { return eval_at(body_, t); }

double ScalarTimeFunction::slope(double t) const { return eval_at(derivative_body(), t); }

const Expr& ScalarTimeFunction::derivative_body() const {
  if (!dbody_)
    throw DiffError("time function has no expression derivative; supply the clock explicitly");
  return dbody_;
}

std::string ClassReport::summary() const {
  std::string out;
  for (const PropertyCheck& c : checks) {
    if (c.pass) continue;
    if (!out.empty()) out += "; ";
    out += c.property;
    if (!c.detail.empty()) out += ": " + c.detail;
  }
  return out.empty() ? "all properties hold on the sampled grid" : out;
}

ClassReport check_class(const ScalarTimeFunction& f, std::span<const double> grid, double tol) {
  if (grid.size() < 2) throw std::invalid_argument("check_class: grid needs at least two points");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]))
      throw std::invalid_argument("check_class: grid must be finite");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw std::invalid_argument("check_class: grid must be strictly increasing");
  }

  ClassReport rep;
  auto record = [&rep](const std::string& property, bool pass, const std::string& detail) {
    rep.pass = rep.pass && pass;
    rep.checks.push_back({property, pass, pass ? "" : detail});
  };

  std::vector<double> v(grid.size());
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      v[i] = eval_or_rethrow(f.body(), grid[i]);
      if (!std::isfinite(v[i])) {
        ok = false;
        detail = "value " + fmt(v[i]) + " at t = " + fmt(grid[i]);
        break;
      }
    }
    record("finite samples", ok, detail);
    if (!ok) return rep;
  }

  const FnClass cls = f.claimed();
  if (cls == FnClass::Plain || cls == FnClass::Kplus) return rep;

  const double span = grid.back() - grid.front();
  const double tail_start = grid.front() + 0.9 * span;

  if (cls == FnClass::Kstar) {
    {
      double v0 = eval_or_rethrow(f.body(), 0.0);
      record("at least 1 at t = 0", v0 >= 1.0 - 1e-12, "value " + fmt(v0));
    }
    {
      bool ok = true;
      std::string detail;
      for (std::size_t i = 1; i < grid.size(); ++i) {
        double slack = 1e-12 * std::max(1.0, std::abs(v[i - 1]));
        if (v[i] < v[i - 1] - slack) {
          ok = false;
          detail = "drops from " + fmt(v[i - 1]) + " to " + fmt(v[i]) + " at t = " + fmt(grid[i]);
          break;
        }
      }
      record("non-decreasing", ok, detail);
    }
    if (!f.differentiable()) {
      record("slope/value^2 decays", false, "no expression derivative");
      return rep;
    }
    bool ok = true;
    std::string detail;
    double prev = 0.0;
    bool have_prev = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] < tail_start) continue;
      double r = eval_or_rethrow(f.derivative_body(), grid[i]) / (v[i] * v[i]);
      if (!(r <= tol)) {
        ok = false;
        detail = "slope/value^2 = " + fmt(r) + " at t = " + fmt(grid[i]) + ", tolerance " + fmt(tol);
        break;
      }
      if (have_prev && r > prev + 1e-12) {
        ok = false;
        detail = "tail rises from " + fmt(prev) + " to " + fmt(r) + " at t = " + fmt(grid[i]);
        break;
      }
      prev = r;
      have_prev = true;
    }
    record("slope/value^2 decays", ok, detail);
    return rep;
  }

  // Kinf
  {
    double v0 = eval_or_rethrow(f.body(), 0.0);
    record("zero at zero", std::abs(v0) <= 1e-12, "value " + fmt(v0));
  }
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (!(v[i] > v[i - 1])) {
        ok = false;
        detail = "not strictly increasing at t = " + fmt(grid[i]);
        break;
      }
    }
    record("strictly increasing", ok, detail);
  }
  {
    double at_tail_start = v.back();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] >= tail_start) {
        at_tail_start = v[i];
        break;
      }
    }
    double growth = v.back() - at_tail_start;
    record("still growing at the horizon", growth > tol,
           "grew by " + fmt(growth) + " across the last tenth, tolerance " + fmt(tol));
  }
  return rep;
}

ScalarTimeFunction derive_q(const ScalarTimeFunction& phi) {
  const Expr& dphi = phi.derivative_body();
  Expr q = add(add(div(abs_e(dphi), phi.body()), pow_rat(phi.body(), rat(2))), constant(1));
  return ScalarTimeFunction(simplify(q), FnClass::Kstar);
}

ClockCheck check_gain_clock(const ScalarTimeFunction& phi, const ScalarTimeFunction& q,
                            std::span<const double> grid) {
  Expr bound = add(div(abs_e(phi.derivative_body()), phi.body()), pow_rat(phi.body(), rat(2)));
  Expr deficit = simplify(sub(bound, q.body()));

  ClockCheck out;
  bool first = true;
  for (double t : grid) {
    double d = eval_or_rethrow(deficit, t);
    double scale = 1.0 + std::abs(eval_or_rethrow(q.body(), t));
    if (d > 1e-9 * scale) out.satisfied = false;
    if (first || d > out.max_deficit) {
      out.max_deficit = d;
      out.worst_t = t;
      first = false;
    }
  }
  if (!out.satisfied)
    out.warning = "gain clock falls short of |phi'|/phi + phi^2 by up to " + fmt(out.max_deficit) +
                  " (worst at t = " + fmt(out.worst_t) + ")";
  return out;
}

}  // namespace tvest
