#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "tvest/expr.hpp"

// Normalizing simplifier. Sums and products are flattened, constants folded in
// a deterministic (sorted) order, like terms and like factors collected, and
// operands re-emitted in a fixed total order. Powers of abs/sgn compositions
// are tracked with a small class algebra:
//   plain   u^p        (p non-integer only after collection)
//   abs     |u|^p
//   signed  sgn(u)|u|^p
// Integer powers of a bare factor are reclassified as abs (even) or signed
// (odd), which makes cancellations like x*|x|^2/x^3 -> 1 and x*dsign(x) -> |x|
// fall out of the exponent arithmetic.

namespace tvest {

namespace {

struct ExprLess {
  bool operator()(const Expr& a, const Expr& b) const { return compare(a, b) < 0; }
};

enum class FClass { Plain, Abs, Signed };

struct Factor {
  Expr base;
  FClass cls;
  Rational exp;
};

double sorted_product(std::vector<double> vals) {
  std::sort(vals.begin(), vals.end());
  double r = 1.0;
  for (double v : vals) r *= v;
  return r;
}

double sorted_sum(std::vector<double> vals) {
  std::sort(vals.begin(), vals.end());
  double r = 0.0;
  for (double v : vals) r += v;
  return r;
}

double powi_fold(double base, long long e) {
  if (e < 0) return 1.0 / powi_fold(base, -e);
  double r = 1.0, b = base;
  while (e > 0) {
    if (e & 1) r *= b;
    b *= b;
    e >>= 1;
  }
  return r;
}

int cls_rank(FClass c) { return c == FClass::Plain ? 0 : (c == FClass::Abs ? 1 : 2); }

bool factor_less(const Factor& a, const Factor& b) {
  int c = compare(a.base, b.base);
  if (c != 0) return c < 0;
  if (a.cls != b.cls) return cls_rank(a.cls) < cls_rank(b.cls);
  return a.exp < b.exp;
}

// Product accumulator: numeric coefficient, exp() arguments, dsign marks and
// classified power factors.
struct MulAcc {
  std::vector<double> consts;
  std::vector<double> inv_consts;  // denominators
  std::vector<Expr> exp_args;      // with sign applied
  std::vector<Expr> dsigns;
  std::vector<Factor> factors;
  bool zero = false;
  bool bad = false;  // constant zero denominator: leave expression untouched

  void add_factor(Expr base, FClass cls, Rational e) {
    factors.push_back(Factor{std::move(base), cls, e});
  }
};

void collect_mul(const Expr& e, bool inverted, MulAcc& acc);

void classify_leaf(const Expr& e, bool inverted, MulAcc& acc) {
  Rational sign = inverted ? rat(-1) : rat(1);
  switch (e->op) {
    case Op::Const:
      if (inverted) {
        if (e->value == 0.0) { acc.bad = true; return; }
        acc.inv_consts.push_back(e->value);
      } else {
        if (e->value == 0.0) { acc.zero = true; return; }
        acc.consts.push_back(e->value);
      }
      return;
    case Op::Exp:
      acc.exp_args.push_back(inverted ? neg(e->a) : e->a);
      return;
    case Op::DSign:
      acc.dsigns.push_back(e->a);
      return;
    case Op::Pow: {
      Rational p = e->exponent * sign;
      if (p.is_integer())
        acc.add_factor(e->a, (p.num % 2 == 0) ? FClass::Abs : FClass::Signed, p);
      else
        acc.add_factor(e->a, FClass::Plain, p);
      return;
    }
    case Op::Abs:
      acc.add_factor(e->a, FClass::Abs, sign);
      return;
    case Op::AbsPow:
      acc.add_factor(e->a, FClass::Abs, e->exponent * sign);
      return;
    case Op::SignedPow:
      acc.add_factor(e->a, FClass::Signed, e->exponent * sign);
      return;
    default:
      acc.add_factor(e, FClass::Signed, sign);  // bare u == sgn(u)|u|^1
      return;
  }
}

void collect_mul(const Expr& e, bool inverted, MulAcc& acc) {
  if (e->op == Op::Mul) {
    collect_mul(e->a, inverted, acc);
    collect_mul(e->b, inverted, acc);
    return;
  }
  if (e->op == Op::Div) {
    collect_mul(e->a, inverted, acc);
    collect_mul(e->b, !inverted, acc);
    return;
  }
  classify_leaf(e, inverted, acc);
}

FClass merge_cls(FClass a, FClass b) {
  if (a == FClass::Plain || b == FClass::Plain) return FClass::Plain;
  if (a == b) return FClass::Abs;  // abs*abs and signed*signed (sgn^2 == 1)
  return FClass::Signed;           // signed*abs
}

Expr rebuild_factor(const Factor& f) {
  const Rational& r = f.exp;
  switch (f.cls) {
    case FClass::Plain:
      if (r == rat(1)) return f.base;
      return pow_rat(f.base, r);
    case FClass::Abs:
      if (r == rat(1)) return abs_e(f.base);
      if (r.is_integer() && r.num % 2 == 0) return pow_rat(f.base, r);
      return abs_pow(f.base, r);
    case FClass::Signed:
      if (r == rat(1)) return f.base;
      if (r.is_integer() && ((r.num % 2) + 2) % 2 == 1) return pow_rat(f.base, r);
      return signed_pow(f.base, r);
  }
  return f.base;
}

// Merge factors sharing a base; absorb dsign marks; drop exponent-zero factors.
// Returns the full rebuilt product.
Expr rebuild_mul(double coeff, MulAcc&& acc) {
  std::sort(acc.factors.begin(), acc.factors.end(), factor_less);
  std::vector<Factor> merged;
  for (const Factor& f : acc.factors) {
    if (!merged.empty() && equal(merged.back().base, f.base)) {
      merged.back().exp = merged.back().exp + f.exp;
      merged.back().cls = merge_cls(merged.back().cls, f.cls);
    } else {
      merged.push_back(f);
    }
  }
  // dsign absorption: sgn(u) * sgn(u)|u|^p = |u|^p, sgn(u) * |u|^p = sgn(u)|u|^p
  std::vector<Expr> loose_dsigns;
  for (const Expr& u : acc.dsigns) {
    bool absorbed = false;
    for (Factor& f : merged) {
      if (f.cls != FClass::Plain && equal(f.base, u)) {
        f.cls = f.cls == FClass::Signed ? FClass::Abs : FClass::Signed;
        absorbed = true;
        break;
      }
    }
    if (!absorbed) loose_dsigns.push_back(u);
  }
  // paired dsigns cancel (equal to 1 off the singular set)
  std::sort(loose_dsigns.begin(), loose_dsigns.end(),
            [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });
  std::vector<Expr> dsign_out;
  for (std::size_t i = 0; i < loose_dsigns.size(); ++i) {
    if (i + 1 < loose_dsigns.size() && equal(loose_dsigns[i], loose_dsigns[i + 1])) {
      ++i;
      continue;
    }
    dsign_out.push_back(loose_dsigns[i]);
  }

  std::vector<Expr> parts;
  for (const Factor& f : merged) {
    if (f.exp.is_zero()) {
      if (f.cls == FClass::Signed) parts.push_back(sgn_e(f.base));  // sgn(u)|u|^0
      continue;
    }
    parts.push_back(rebuild_factor(f));
  }
  if (!acc.exp_args.empty()) {
    std::sort(acc.exp_args.begin(), acc.exp_args.end(),
              [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });
    Expr arg = acc.exp_args[0];
    for (std::size_t i = 1; i < acc.exp_args.size(); ++i) arg = add(arg, acc.exp_args[i]);
    parts.push_back(exp_e(arg));
  }
  for (const Expr& u : dsign_out) parts.push_back(dsign(u));
  std::sort(parts.begin(), parts.end(),
            [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });

  if (parts.empty()) return constant(coeff);
  Expr out;
  std::size_t i = 0;
  if (coeff == 1.0) {
    out = parts[0];
    i = 1;
  } else {
    out = constant(coeff);
  }
  for (; i < parts.size(); ++i) out = mul(out, parts[i]);
  return out;
}

// Entry for products: returns simplified product or nullptr when the node must
// be left untouched (constant zero denominator).
Expr simplify_mul(const Expr& e) {
  MulAcc acc;
  collect_mul(e, false, acc);
  if (acc.bad) return nullptr;
  if (acc.zero) return constant(0.0);
  double coeff = sorted_product(std::move(acc.consts));
  if (!acc.inv_consts.empty()) coeff /= sorted_product(std::move(acc.inv_consts));
  if (coeff == 0.0) return constant(0.0);
  return rebuild_mul(coeff, std::move(acc));
}

// --- sums --------------------------------------------------------------------

struct TermAcc {
  std::map<Expr, std::vector<double>, ExprLess> terms;  // core -> coefficients
  std::vector<double> consts;
  bool bad = false;
};

void collect_add(const Expr& e, bool negated, TermAcc& acc) {
  if (e->op == Op::Add) {
    collect_add(e->a, negated, acc);
    collect_add(e->b, negated, acc);
    return;
  }
  if (e->op == Op::Sub) {
    collect_add(e->a, negated, acc);
    collect_add(e->b, !negated, acc);
    return;
  }
  if (e->op == Op::Const) {
    acc.consts.push_back(negated ? -e->value : e->value);
    return;
  }
  // split a term into coefficient and core
  MulAcc m;
  collect_mul(e, false, m);
  if (m.bad) {
    acc.bad = true;
    return;
  }
  double coeff = 1.0;
  if (m.zero) {
    return;  // term is exactly zero
  }
  coeff = sorted_product(std::move(m.consts));
  if (!m.inv_consts.empty()) coeff /= sorted_product(std::move(m.inv_consts));
  if (coeff == 0.0) return;
  if (negated) coeff = -coeff;
  m.consts.clear();
  m.inv_consts.clear();
  Expr core = rebuild_mul(1.0, std::move(m));
  if (core->op == Op::Const) {
    acc.consts.push_back(coeff * core->value);
    return;
  }
  acc.terms[core].push_back(coeff);
}

Expr simplify_add(const Expr& e) {
  TermAcc acc;
  collect_add(e, false, acc);
  if (acc.bad) return nullptr;
  std::vector<std::pair<Expr, double>> out;
  for (auto& [core, coeffs] : acc.terms) {
    double c = sorted_sum(std::move(coeffs));
    if (c != 0.0) out.emplace_back(core, c);
  }
  double cst = sorted_sum(std::move(acc.consts));
  if (out.empty()) return constant(cst);
  Expr sum;
  for (auto& [core, c] : out) {
    Expr term = c == 1.0 ? core : mul(constant(c), core);
    sum = sum ? add(sum, term) : term;
  }
  if (cst != 0.0) sum = add(sum, constant(cst));
  return sum;
}

// --- pointwise rewrites -------------------------------------------------------

Expr fold_unary(const Expr& e) {
  // children are already simplified
  const Expr& u = e->a;
  bool ucst = u->op == Op::Const;
  switch (e->op) {
    case Op::Exp:
      if (ucst) return constant(std::exp(u->value));
      break;
    case Op::Sin:
      if (ucst) return constant(std::sin(u->value));
      break;
    case Op::Cos:
      if (ucst) return constant(std::cos(u->value));
      break;
    case Op::Sat:
      if (ucst) return constant(sat_value(u->value));
      break;
    case Op::Abs:
      if (ucst) return constant(std::fabs(u->value));
      if (u->op == Op::Exp || u->op == Op::Abs || u->op == Op::AbsPow) return u;
      if (u->op == Op::SignedPow) return abs_pow(u->a, u->exponent);
      if (u->op == Op::Sgn) break;
      if (u->op == Op::Pow && u->exponent.is_integer()) {
        if (u->exponent.num % 2 == 0) return u;
        return abs_pow(u->a, u->exponent);
      }
      if (u->op == Op::Mul || u->op == Op::Div) {
        // |ab| = |a||b|
        return mul(abs_e(u->a), u->op == Op::Mul ? abs_e(u->b) : pow_rat(abs_e(u->b), rat(-1)));
      }
      break;
    case Op::Sgn: {
      if (ucst) return constant(static_cast<double>((u->value > 0) - (u->value < 0)));
      if (u->op == Op::Exp) return constant(1.0);
      if (u->op == Op::Mul) return mul(sgn_e(u->a), sgn_e(u->b));
      if (u->op == Op::SignedPow && u->exponent.num > 0) return sgn_e(u->a);
      break;
    }
    default:
      break;
  }
  return e;
}

Expr fold_pow(const Expr& e) {
  const Expr& u = e->a;
  const Rational r = e->exponent;
  if (r.is_zero()) return constant(1.0);
  if (r == rat(1)) return u;
  if (u->op == Op::Const) {
    try {
      return constant(eval_pow_rational(u->value, r));
    } catch (const EvalError&) {
      return e;  // e.g. (-2)^(1/2): leave for eval-time error
    }
  }
  if (u->op == Op::Exp) {
    return exp_e(mul(constant(r.value()), u->a));
  }
  if (u->op == Op::Abs) return abs_pow(u->a, r);
  if (u->op == Op::AbsPow) return abs_pow(u->a, u->exponent * r);
  if (u->op == Op::SignedPow && r.is_integer()) {
    Rational q = u->exponent * r;
    return (r.num % 2 == 0) ? abs_pow(u->a, q) : signed_pow(u->a, q);
  }
  if (u->op == Op::Pow && r.is_integer()) return pow_rat(u->a, u->exponent * r);
  if ((u->op == Op::Mul || u->op == Op::Div) && r.is_integer()) {
    // distribute integer powers over products
    MulAcc acc;
    collect_mul(u, false, acc);
    if (!acc.bad && !acc.zero) {
      double coeff = sorted_product(std::move(acc.consts));
      if (!acc.inv_consts.empty()) coeff /= sorted_product(std::move(acc.inv_consts));
      acc.consts.clear();
      acc.inv_consts.clear();
      coeff = powi_fold(coeff, r.num);
      for (Factor& f : acc.factors) {
        Rational scaled = f.exp * r;
        if (f.cls != FClass::Plain && r.num % 2 == 0) {
          f.cls = FClass::Abs;
        } else if (f.cls == FClass::Signed || f.cls == FClass::Abs) {
          // odd power preserves class
        }
        f.exp = scaled;
      }
      for (Expr& arg : acc.exp_args) arg = mul(constant(r.value()), arg);
      if (r.num % 2 == 0) acc.dsigns.clear();  // dsign^even == 1 off the singular set
      else if (r.num < 0) {
        // dsign^odd-negative == dsign
      }
      return rebuild_mul(coeff, std::move(acc));
    }
  }
  return e;
}

Expr fold_signed_pow(const Expr& e) {
  const Expr& u = e->a;
  const Rational p = e->exponent;
  if (p == rat(1)) return u;
  if (p.is_zero()) return sgn_e(u);
  if (u->op == Op::Const) {
    try {
      return constant(eval_signed_pow(u->value, p));
    } catch (const EvalError&) {
      return e;
    }
  }
  if (u->op == Op::Exp) return exp_e(mul(constant(p.value()), u->a));
  if (u->op == Op::Abs) return abs_pow(u->a, p);
  if (u->op == Op::AbsPow && p.num > 0 && u->exponent.num > 0)
    return abs_pow(u->a, u->exponent * p);
  if (u->op == Op::SignedPow) return signed_pow(u->a, u->exponent * p);
  if (u->op == Op::Pow && u->exponent.is_integer()) {
    Rational q = u->exponent * p;
    return (u->exponent.num % 2 == 0) ? abs_pow(u->a, q) : signed_pow(u->a, q);
  }
  if (u->op == Op::Mul) return mul(signed_pow(u->a, p), signed_pow(u->b, p));
  return e;
}

Expr fold_abs_pow(const Expr& e) {
  const Expr& u = e->a;
  const Rational p = e->exponent;
  if (p.is_zero()) return constant(1.0);
  if (p == rat(1)) return abs_e(u);
  if (p.is_integer() && p.num % 2 == 0) return pow_rat(u, p);
  if (u->op == Op::Const) {
    try {
      return constant(eval_abs_pow(u->value, p));
    } catch (const EvalError&) {
      return e;
    }
  }
  if (u->op == Op::Exp) return exp_e(mul(constant(p.value()), u->a));
  if (u->op == Op::Abs) return abs_pow(u->a, p);
  if (u->op == Op::AbsPow) return abs_pow(u->a, u->exponent * p);
  if (u->op == Op::SignedPow && p.num > 0 && u->exponent.num > 0)
    return abs_pow(u->a, u->exponent * p);
  if (u->op == Op::Pow && u->exponent.is_integer()) return abs_pow(u->a, u->exponent * p);
  if (u->op == Op::Mul) return mul(abs_pow(u->a, p), abs_pow(u->b, p));
  return e;
}

Expr pass(const Expr& e) {
  // simplify children first
  Expr node = e;
  if (e->a || e->b) {
    Expr a = e->a ? pass(e->a) : nullptr;
    Expr b = e->b ? pass(e->b) : nullptr;
    if ((e->a && !equal(a, e->a)) || (e->b && !equal(b, e->b))) {
      auto n = std::make_shared<ExprNode>(*e);
      n->a = a;
      n->b = b;
      node = n;
    }
  }
  switch (node->op) {
    case Op::Const:
    case Op::Var:
      return node;
    case Op::Add:
    case Op::Sub: {
      Expr r = simplify_add(node);
      return r ? r : node;
    }
    case Op::Mul:
    case Op::Div: {
      Expr r = simplify_mul(node);
      return r ? r : node;
    }
    case Op::Pow:
      return fold_pow(node);
    case Op::SignedPow:
      return fold_signed_pow(node);
    case Op::AbsPow:
      return fold_abs_pow(node);
    default:
      return fold_unary(node);
  }
}

}  // namespace

Expr simplify(const Expr& e) {
  Expr cur = e;
  for (int i = 0; i < 12; ++i) {
    Expr next = pass(cur);
    if (equal(next, cur)) return cur;
    cur = next;
  }
  return cur;
}

}  // namespace tvest
