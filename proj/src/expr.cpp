#include "tvest/expr.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>

namespace tvest {

// --- construction -----------------------------------------------------------


Expr constant(double v) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

Expr variable(VarKind kind, int index) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Var;
  n->var = VarRef{kind, index};
  return n;
}

Expr t_var() { return variable(VarKind::T); }
Expr x_var(int i) { return variable(VarKind::X, i); }
Expr d_var(int i) { return variable(VarKind::D, i); }
Expr y_var(int i) { return variable(VarKind::Y, i); }
Expr z_var(int i) { return variable(VarKind::Z, i); }
Expr w_var() { return variable(VarKind::W); }
Expr s_var() { return variable(VarKind::S); }

static Expr binary(Op op, Expr a, Expr b) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

static Expr unary(Op op, Expr a) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  return n;
}

Expr add(Expr a, Expr b) { return binary(Op::Add, std::move(a), std::move(b)); }
Expr sub(Expr a, Expr b) { return binary(Op::Sub, std::move(a), std::move(b)); }
Expr mul(Expr a, Expr b) { return binary(Op::Mul, std::move(a), std::move(b)); }
Expr div(Expr a, Expr b) { return binary(Op::Div, std::move(a), std::move(b)); }

Expr neg(Expr a) {
  if (a->op == Op::Const) return constant(-a->value);
  return mul(constant(-1.0), std::move(a));
}

static Expr with_exponent(Op op, Expr a, Rational e) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  n->exponent = e;
  return n;
}

Expr pow_rat(Expr base, Rational e) { return with_exponent(Op::Pow, std::move(base), e); }
Expr signed_pow(Expr a, Rational p) { return with_exponent(Op::SignedPow, std::move(a), p); }
Expr abs_pow(Expr a, Rational p) { return with_exponent(Op::AbsPow, std::move(a), p); }

Expr exp_e(Expr a) { return unary(Op::Exp, std::move(a)); }
Expr sin_e(Expr a) { return unary(Op::Sin, std::move(a)); }
Expr cos_e(Expr a) { return unary(Op::Cos, std::move(a)); }
Expr abs_e(Expr a) { return unary(Op::Abs, std::move(a)); }
Expr sgn_e(Expr a) { return unary(Op::Sgn, std::move(a)); }
Expr sat_e(Expr a) { return unary(Op::Sat, std::move(a)); }
Expr dsign(Expr a) { return unary(Op::DSign, std::move(a)); }
Expr dzero(Expr a) { return unary(Op::DZero, std::move(a)); }
Expr dsat(Expr a) { return unary(Op::DSat, std::move(a)); }

std::string VarRef::name() const {
  switch (kind) {
    case VarKind::T: return "t";
    case VarKind::W: return "w";
    case VarKind::S: return "s";
    case VarKind::X: return "x" + std::to_string(index);
    case VarKind::D: return "d" + std::to_string(index);
    case VarKind::Z: return "z" + std::to_string(index);
    case VarKind::Y: return index == 1 ? "y" : "y" + std::to_string(index);
  }
  return "?";
}

// --- evaluation -------------------------------------------------------------

double EvalContext::get(VarRef v) const {
  switch (v.kind) {
    case VarKind::T: return t;
    case VarKind::W: return w;
    case VarKind::S: return s;
    case VarKind::X:
      if (v.index < 1 || v.index > static_cast<int>(x.size()))
        throw EvalError("unbound variable " + v.name());
      return x[v.index - 1];
    case VarKind::D:
      if (v.index < 1 || v.index > static_cast<int>(d.size()))
        throw EvalError("unbound variable " + v.name());
      return d[v.index - 1];
    case VarKind::Y:
      if (v.index < 1 || v.index > static_cast<int>(y.size()))
        throw EvalError("unbound variable " + v.name());
      return y[v.index - 1];
    case VarKind::Z:
      if (v.index < 1 || v.index > static_cast<int>(z.size()))
        throw EvalError("unbound variable " + v.name());
      return z[v.index - 1];
  }
  throw EvalError("unbound variable");
}

double sat_value(double u) {
  if (u > 1.0) return 1.0;
  if (u < -1.0) return -1.0;
  return u;
}

static double powi(double base, long long e) {
  if (e < 0) {
    if (base == 0.0) throw EvalError("0 raised to a negative power");
    return 1.0 / powi(base, -e);
  }
  double r = 1.0, b = base;
  while (e > 0) {
    if (e & 1) r *= b;
    b *= b;
    e >>= 1;
  }
  return r;
}

double eval_pow_rational(double base, const Rational& r) {
  if (r.is_integer()) return powi(base, r.num);
  if (base < 0.0)
    throw EvalError("negative base " + std::to_string(base) + " with non-integer exponent " +
                    r.str() + " (use signed_pow for odd roots)");
  if (base == 0.0 && r.num < 0) throw EvalError("0 raised to a negative power");
  return std::pow(base, r.value());
}

double eval_abs_pow(double u, const Rational& p) {
  double a = std::fabs(u);
  if (a == 0.0) {
    if (p.num > 0) return 0.0;
    if (p.num == 0) return 1.0;
    throw EvalError("abs_pow(0, " + p.str() + ") with negative exponent");
  }
  if (p.is_integer()) return powi(a, p.num);
  return std::pow(a, p.value());
}

double eval_signed_pow(double u, const Rational& p) {
  double s = (u > 0.0) - (u < 0.0);
  if (u == 0.0) {
    if (p.num > 0) return 0.0;
    if (p.num == 0) return 0.0;  // sgn(0) * |0|^0
    throw EvalError("signed_pow(0, " + p.str() + ") with negative exponent");
  }
  return s * eval_abs_pow(u, p);
}

double eval(const Expr& e, const EvalContext& ctx) {
  switch (e->op) {
    case Op::Const: return e->value;
    case Op::Var: return ctx.get(e->var);
    case Op::Add: return eval(e->a, ctx) + eval(e->b, ctx);
    case Op::Sub: return eval(e->a, ctx) - eval(e->b, ctx);
    case Op::Mul: return eval(e->a, ctx) * eval(e->b, ctx);
    case Op::Div: {
      double den = eval(e->b, ctx);
      if (den == 0.0) throw EvalError("division by zero in " + to_string(e->b));
      return eval(e->a, ctx) / den;
    }
    case Op::Pow: return eval_pow_rational(eval(e->a, ctx), e->exponent);
    case Op::Exp: return std::exp(eval(e->a, ctx));
    case Op::Sin: return std::sin(eval(e->a, ctx));
    case Op::Cos: return std::cos(eval(e->a, ctx));
    case Op::Abs: return std::fabs(eval(e->a, ctx));
    case Op::Sgn: {
      double u = eval(e->a, ctx);
      return static_cast<double>((u > 0.0) - (u < 0.0));
    }
    case Op::Sat: return sat_value(eval(e->a, ctx));
    case Op::SignedPow: return eval_signed_pow(eval(e->a, ctx), e->exponent);
    case Op::AbsPow: return eval_abs_pow(eval(e->a, ctx), e->exponent);
    case Op::DSign: {
      double u = eval(e->a, ctx);
      if (u == 0.0) throw EvalError("derivative of abs evaluated at its singular point 0");
      return u > 0.0 ? 1.0 : -1.0;
    }
    case Op::DZero: {
      double u = eval(e->a, ctx);
      if (u == 0.0) throw EvalError("derivative of sgn evaluated at its singular point 0");
      return 0.0;
    }
    case Op::DSat: {
      double u = eval(e->a, ctx);
      if (u == 1.0 || u == -1.0)
        throw EvalError("derivative of sat evaluated at its singular point +/-1");
      return std::fabs(u) < 1.0 ? 1.0 : 0.0;
    }
  }
  throw EvalError("corrupt expression node");
}

// --- differentiation --------------------------------------------------------

Expr differentiate(const Expr& e, VarRef v) {
  switch (e->op) {
    case Op::Const: return constant(0.0);
    case Op::Var: return constant(e->var == v ? 1.0 : 0.0);
    case Op::Add: return add(differentiate(e->a, v), differentiate(e->b, v));
    case Op::Sub: return sub(differentiate(e->a, v), differentiate(e->b, v));
    case Op::Mul:
      return add(mul(differentiate(e->a, v), e->b), mul(e->a, differentiate(e->b, v)));
    case Op::Div:
      return div(sub(mul(differentiate(e->a, v), e->b), mul(e->a, differentiate(e->b, v))),
                 pow_rat(e->b, rat(2)));
    case Op::Pow: {
      if (e->exponent.is_zero()) return constant(0.0);
      Rational down = e->exponent - rat(1);
      return mul(mul(constant(e->exponent.value()), pow_rat(e->a, down)),
                 differentiate(e->a, v));
    }
    case Op::Exp: return mul(exp_e(e->a), differentiate(e->a, v));
    case Op::Sin: return mul(cos_e(e->a), differentiate(e->a, v));
    case Op::Cos: return mul(neg(sin_e(e->a)), differentiate(e->a, v));
    case Op::Abs: return mul(dsign(e->a), differentiate(e->a, v));
    case Op::Sgn: return mul(dzero(e->a), differentiate(e->a, v));
    case Op::Sat: return mul(dsat(e->a), differentiate(e->a, v));
    case Op::SignedPow: {
      // d/du sgn(u)|u|^p = p |u|^(p-1)
      Rational down = e->exponent - rat(1);
      return mul(mul(constant(e->exponent.value()), abs_pow(e->a, down)),
                 differentiate(e->a, v));
    }
    case Op::AbsPow: {
      // d/du |u|^p = p sgn(u)|u|^(p-1)
      Rational down = e->exponent - rat(1);
      return mul(mul(constant(e->exponent.value()), signed_pow(e->a, down)),
                 differentiate(e->a, v));
    }
    case Op::DSign: return mul(dzero(e->a), differentiate(e->a, v));
    case Op::DZero: return mul(dzero(e->a), differentiate(e->a, v));
    case Op::DSat:
      throw DiffError("cannot differentiate the derivative of sat");
  }
  throw DiffError("corrupt expression node");
}

// --- structural helpers -----------------------------------------------------

bool equal(const Expr& a, const Expr& b) { return compare(a, b) == 0; }

int compare(const Expr& a, const Expr& b) {
  if (a.get() == b.get()) return 0;
  if (a->op != b->op) return a->op < b->op ? -1 : 1;
  switch (a->op) {
    case Op::Const:
      if (a->value < b->value) return -1;
      if (a->value > b->value) return 1;
      return 0;
    case Op::Var:
      if (a->var == b->var) return 0;
      return a->var < b->var ? -1 : 1;
    default: break;
  }
  if (a->op == Op::Pow || a->op == Op::SignedPow || a->op == Op::AbsPow) {
    if (a->exponent != b->exponent) return a->exponent < b->exponent ? -1 : 1;
  }
  if (a->a && b->a) {
    int c = compare(a->a, b->a);
    if (c != 0) return c;
  }
  if (a->b && b->b) return compare(a->b, b->b);
  if (a->b) return 1;
  if (b->b) return -1;
  return 0;
}

Expr substitute(const Expr& e, const std::vector<std::pair<VarRef, Expr>>& map) {
  switch (e->op) {
    case Op::Const: return e;
    case Op::Var:
      for (const auto& [v, repl] : map)
        if (v == e->var) return repl;
      return e;
    default: break;
  }
  auto n = std::make_shared<ExprNode>(*e);
  if (e->a) n->a = substitute(e->a, map);
  if (e->b) n->b = substitute(e->b, map);
  return n;
}

static void collect_vars(const Expr& e, std::set<VarRef>& out) {
  if (e->op == Op::Var) {
    out.insert(e->var);
    return;
  }
  if (e->a) collect_vars(e->a, out);
  if (e->b) collect_vars(e->b, out);
}

std::set<VarRef> free_vars(const Expr& e) {
  std::set<VarRef> out;
  collect_vars(e, out);
  return out;
}

bool contains_singular_nodes(const Expr& e) {
  if (e->op == Op::DSign || e->op == Op::DZero || e->op == Op::DSat) return true;
  if (e->a && contains_singular_nodes(e->a)) return true;
  if (e->b && contains_singular_nodes(e->b)) return true;
  return false;
}

// --- printing ---------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// precedence: Add/Sub 1, Mul/Div 2, unary minus 2, Pow 3, atom 4
int precedence(const Expr& e) {
  switch (e->op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Pow: return 3;
    case Op::Const: return e->value < 0 ? 2 : 4;
    default: return 4;
  }
}

std::string print_expr(const Expr& e, int parent_prec);

std::string fn_call(const char* name, const Expr& arg) {
  return std::string(name) + "(" + print_expr(arg, 0) + ")";
}

std::string fn_call(const char* name, const Expr& arg, const Rational& r) {
  return std::string(name) + "(" + print_expr(arg, 0) + ", " + r.str() + ")";
}

std::string print_expr(const Expr& e, int parent_prec) {
  std::string out;
  switch (e->op) {
    case Op::Const: out = fmt_double(e->value); break;
    case Op::Var: out = e->var.name(); break;
    case Op::Add: out = print_expr(e->a, 1) + " + " + print_expr(e->b, 2); break;
    case Op::Sub: out = print_expr(e->a, 1) + " - " + print_expr(e->b, 2); break;
    case Op::Mul: {
      // -1 * u prints as -u; operand tighter than * so -(a*b) keeps its shape
      if (e->a->op == Op::Const && e->a->value == -1.0) {
        out = "-" + print_expr(e->b, 3);
      } else {
        out = print_expr(e->a, 2) + "*" + print_expr(e->b, 3);
      }
      break;
    }
    case Op::Div: out = print_expr(e->a, 2) + "/" + print_expr(e->b, 3); break;
    case Op::Pow: {
      std::string ex = e->exponent.str();
      if (!e->exponent.is_integer() || e->exponent.num < 0) ex = "(" + ex + ")";
      out = print_expr(e->a, 4) + "^" + ex;
      break;
    }
    case Op::Exp: out = fn_call("exp", e->a); break;
    case Op::Sin: out = fn_call("sin", e->a); break;
    case Op::Cos: out = fn_call("cos", e->a); break;
    case Op::Abs: out = fn_call("abs", e->a); break;
    case Op::Sgn: out = fn_call("sgn", e->a); break;
    case Op::Sat: out = fn_call("sat", e->a); break;
    case Op::SignedPow: out = fn_call("signed_pow", e->a, e->exponent); break;
    case Op::AbsPow: out = fn_call("abs_pow", e->a, e->exponent); break;
    case Op::DSign: out = fn_call("dsign", e->a); break;
    case Op::DZero: out = fn_call("dzero", e->a); break;
    case Op::DSat: out = fn_call("dsat", e->a); break;
  }
  if (precedence(e) < parent_prec) return "(" + out + ")";
  return out;
}

}  // namespace

std::string to_string(const Expr& e) { return print_expr(e, 0); }

// --- parsing ----------------------------------------------------------------

namespace {

struct Token {
  enum Kind { Num, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End } kind;
  double num = 0;
  std::string text;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }
  const Token& peek() const { return tok_; }
  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
                                  src_[pos_] == '\r')) {
      if (src_[pos_] == '\n') { ++line_; col_ = -1; }
      ++pos_;
      ++col_;
    }
    tok_.line = line_;
    tok_.col = col_ + 1;
    if (pos_ >= src_.size()) {
      tok_.kind = Token::End;
      return;
    }
    char c = src_[pos_];
    auto single = [&](Token::Kind k) {
      tok_.kind = k;
      ++pos_;
      ++col_;
    };
    switch (c) {
      case '+': single(Token::Plus); return;
      case '-': single(Token::Minus); return;
      case '*': single(Token::Star); return;
      case '/': single(Token::Slash); return;
      case '^': single(Token::Caret); return;
      case '(': single(Token::LParen); return;
      case ')': single(Token::RParen); return;
      case ',': single(Token::Comma); return;
      default: break;
    }
    if ((c >= '0' && c <= '9') || c == '.') {
      const char* begin = src_.data() + pos_;
      const char* end = src_.data() + src_.size();
      double v = 0;
      auto res = std::from_chars(begin, end, v);
      if (res.ec != std::errc{})
        throw ParseError("malformed number", line_, col_ + 1);
      tok_.kind = Token::Num;
      tok_.num = v;
      tok_.text.assign(begin, res.ptr);
      std::size_t len = static_cast<std::size_t>(res.ptr - begin);
      pos_ += len;
      col_ += static_cast<int>(len);
      return;
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             ((src_[pos_] >= 'a' && src_[pos_] <= 'z') || (src_[pos_] >= 'A' && src_[pos_] <= 'Z') ||
              (src_[pos_] >= '0' && src_[pos_] <= '9') || src_[pos_] == '_')) {
        ++pos_;
        ++col_;
      }
      tok_.kind = Token::Ident;
      tok_.text = src_.substr(start, pos_ - start);
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_ + 1);
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 0;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(const std::string& src) : lex_(src) {}

  Expr parse_full() {
    Expr e = parse_sum();
    const Token& t = lex_.peek();
    if (t.kind != Token::End)
      throw ParseError("unexpected trailing input", t.line, t.col);
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, const Token& t) {
    throw ParseError(msg, t.line, t.col);
  }

  Expr parse_sum() {
    Expr e = parse_term();
    for (;;) {
      const Token& t = lex_.peek();
      if (t.kind == Token::Plus) {
        lex_.next();
        e = add(e, parse_term());
      } else if (t.kind == Token::Minus) {
        lex_.next();
        e = sub(e, parse_term());
      } else {
        return e;
      }
    }
  }

  Expr parse_term() {
    Expr e = parse_unary();
    for (;;) {
      const Token& t = lex_.peek();
      if (t.kind == Token::Star) {
        lex_.next();
        e = mul(e, parse_unary());
      } else if (t.kind == Token::Slash) {
        lex_.next();
        e = div(e, parse_unary());
      } else {
        return e;
      }
    }
  }

  Expr parse_unary() {
    const Token& t = lex_.peek();
    if (t.kind == Token::Minus) {
      lex_.next();
      return neg(parse_unary());
    }
    if (t.kind == Token::Plus) {
      lex_.next();
      return parse_unary();
    }
    return parse_postfix();
  }

  Expr parse_postfix() {
    Expr e = parse_atom();
    if (lex_.peek().kind == Token::Caret) {
      lex_.next();
      Rational r = parse_rational_exponent();
      e = pow_rat(e, r);
    }
    return e;
  }

  // integer, integer/integer, optionally negated, optionally parenthesized
  Rational parse_rational_exponent(bool bare_slash_ok = false) {
    bool paren = false;
    if (lex_.peek().kind == Token::LParen) {
      paren = true;
      lex_.next();
    }
    bool negate = false;
    if (lex_.peek().kind == Token::Minus) {
      negate = true;
      lex_.next();
    }
    Token numt = lex_.next();
    if (numt.kind != Token::Num) fail("expected rational exponent", numt);
    long long num = parse_integer(numt);
    long long den = 1;
    // after ^ a slash only belongs to the exponent inside parens: x^3/x is
    // (x^3)/x, while in argument position 1/3 is unambiguous
    if ((paren || bare_slash_ok) && lex_.peek().kind == Token::Slash) {
      lex_.next();
      Token dent = lex_.next();
      if (dent.kind != Token::Num) fail("expected denominator", dent);
      den = parse_integer(dent);
    }
    if (paren) {
      Token close = lex_.next();
      if (close.kind != Token::RParen) fail("expected ')' after exponent", close);
    }
    return rat(negate ? -num : num, den);
  }

  long long parse_integer(const Token& t) {
    for (char c : t.text)
      if (c == '.' || c == 'e' || c == 'E')
        fail("exponent must be an exact rational (integer or integer/integer)", t);
    return static_cast<long long>(t.num);
  }

  Expr parse_atom() {
    Token t = lex_.next();
    if (t.kind == Token::Num) return constant(t.num);
    if (t.kind == Token::LParen) {
      Expr e = parse_sum();
      Token close = lex_.next();
      if (close.kind != Token::RParen) fail("expected ')'", close);
      return e;
    }
    if (t.kind != Token::Ident) fail("expected expression", t);

    if (lex_.peek().kind == Token::LParen) return parse_call(t);
    return parse_variable(t);
  }

  Expr parse_call(const Token& name) {
    lex_.next();  // consume '('
    auto close_after_one = [&](Expr e) {
      Token close = lex_.next();
      if (close.kind != Token::RParen) fail("expected ')'", close);
      return e;
    };
    auto one_arg_with_rational = [&]() {
      Expr arg = parse_sum();
      Token comma = lex_.next();
      if (comma.kind != Token::Comma) fail("expected ',' and rational exponent", comma);
      Rational r = parse_rational_exponent(true);
      Token close = lex_.next();
      if (close.kind != Token::RParen) fail("expected ')'", close);
      return std::make_pair(arg, r);
    };
    const std::string& fn = name.text;
    if (fn == "exp") return exp_e(close_after_one(parse_sum()));
    if (fn == "sin") return sin_e(close_after_one(parse_sum()));
    if (fn == "cos") return cos_e(close_after_one(parse_sum()));
    if (fn == "abs") return abs_e(close_after_one(parse_sum()));
    if (fn == "sgn") return sgn_e(close_after_one(parse_sum()));
    if (fn == "sat") return sat_e(close_after_one(parse_sum()));
    if (fn == "dsign") return dsign(close_after_one(parse_sum()));
    if (fn == "dzero") return dzero(close_after_one(parse_sum()));
    if (fn == "dsat") return dsat(close_after_one(parse_sum()));
    if (fn == "signed_pow") {
      auto [arg, r] = one_arg_with_rational();
      return signed_pow(arg, r);
    }
    if (fn == "abs_pow") {
      auto [arg, r] = one_arg_with_rational();
      return abs_pow(arg, r);
    }
    if (fn == "pow") {
      auto [arg, r] = one_arg_with_rational();
      return pow_rat(arg, r);
    }
    fail("unknown function '" + fn + "'", name);
  }

  Expr parse_variable(const Token& t) {
    const std::string& s = t.text;
    if (s == "t") return t_var();
    if (s == "w") return w_var();
    if (s == "s") return s_var();
    if (s == "y") return y_var(1);
    if (s.size() >= 2) {
      char head = s[0];
      bool digits = true;
      for (std::size_t i = 1; i < s.size(); ++i)
        if (s[i] < '0' || s[i] > '9') digits = false;
      if (digits) {
        int idx = std::stoi(s.substr(1));
        if (idx < 1) fail("variable index must be >= 1", t);
        switch (head) {
          case 'x': return x_var(idx);
          case 'd': return d_var(idx);
          case 'y': return y_var(idx);
          case 'z': return z_var(idx);
          default: break;
        }
      }
    }
    fail("unknown identifier '" + s + "'", t);
  }

  Lexer lex_;
};

}  // namespace

Expr parse(const std::string& src) { return Parser(src).parse_full(); }

// --- tape compilation ---------------------------------------------------------

int SlotLayout::slot(VarRef v) const {
  switch (v.kind) {
    case VarKind::T: return t_slot;
    case VarKind::W: return w_slot;
    case VarKind::S: return s_slot;
    case VarKind::X: return (v.index >= 1 && v.index <= nx) ? x0 + v.index - 1 : -1;
    case VarKind::D: return (v.index >= 1 && v.index <= nd) ? d0 + v.index - 1 : -1;
    case VarKind::Y: return (v.index >= 1 && v.index <= ny) ? y0 + v.index - 1 : -1;
    case VarKind::Z: return (v.index >= 1 && v.index <= nz) ? z0 + v.index - 1 : -1;
  }
  return -1;
}

void Tape::compile(const Expr& e, const SlotLayout& layout) {
  Tape tape;
  int depth = 0, max_depth = 0;
  // postorder emit
  auto emit = [&](auto&& self, const Expr& n) -> void {
    switch (n->op) {
      case Op::Const: {
        tape.code_.push_back({Op::Const, static_cast<std::int32_t>(tape.consts_.size())});
        tape.consts_.push_back(n->value);
        ++depth;
        break;
      }
      case Op::Var: {
        int s = layout.slot(n->var);
        if (s < 0) throw EvalError("variable " + n->var.name() + " not mapped to a slot");
        tape.code_.push_back({Op::Var, s});
        ++depth;
        break;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
        self(self, n->a);
        self(self, n->b);
        tape.code_.push_back({n->op, 0});
        --depth;
        break;
      case Op::Pow:
      case Op::SignedPow:
      case Op::AbsPow:
        self(self, n->a);
        tape.code_.push_back({n->op, static_cast<std::int32_t>(tape.rats_.size())});
        tape.rats_.push_back(n->exponent);
        break;
      default:
        self(self, n->a);
        tape.code_.push_back({n->op, 0});
        break;
    }
    if (depth > max_depth) max_depth = depth;
  };
  emit(emit, e);
  tape.stack_.resize(static_cast<std::size_t>(max_depth) + 2);
  *this = std::move(tape);
}

double Tape::eval(std::span<const double> slots) const {
  double* sp = stack_.data();
  for (const Instr& ins : code_) {
    switch (ins.op) {
      case Op::Const: *sp++ = consts_[static_cast<std::size_t>(ins.arg)]; break;
      case Op::Var: *sp++ = slots[static_cast<std::size_t>(ins.arg)]; break;
      case Op::Add: sp[-2] = sp[-2] + sp[-1]; --sp; break;
      case Op::Sub: sp[-2] = sp[-2] - sp[-1]; --sp; break;
      case Op::Mul: sp[-2] = sp[-2] * sp[-1]; --sp; break;
      case Op::Div: {
        if (sp[-1] == 0.0) throw EvalError("division by zero");
        sp[-2] = sp[-2] / sp[-1];
        --sp;
        break;
      }
      case Op::Pow: sp[-1] = eval_pow_rational(sp[-1], rats_[static_cast<std::size_t>(ins.arg)]); break;
      case Op::Exp: sp[-1] = std::exp(sp[-1]); break;
      case Op::Sin: sp[-1] = std::sin(sp[-1]); break;
      case Op::Cos: sp[-1] = std::cos(sp[-1]); break;
      case Op::Abs: sp[-1] = std::fabs(sp[-1]); break;
      case Op::Sgn: sp[-1] = static_cast<double>((sp[-1] > 0.0) - (sp[-1] < 0.0)); break;
      case Op::Sat: sp[-1] = sat_value(sp[-1]); break;
      case Op::SignedPow:
        sp[-1] = eval_signed_pow(sp[-1], rats_[static_cast<std::size_t>(ins.arg)]);
        break;
      case Op::AbsPow:
        sp[-1] = eval_abs_pow(sp[-1], rats_[static_cast<std::size_t>(ins.arg)]);
        break;
      case Op::DSign:
        if (sp[-1] == 0.0) throw EvalError("derivative of abs evaluated at its singular point 0");
        sp[-1] = sp[-1] > 0.0 ? 1.0 : -1.0;
        break;
      case Op::DZero:
        if (sp[-1] == 0.0) throw EvalError("derivative of sgn evaluated at its singular point 0");
        sp[-1] = 0.0;
        break;
      case Op::DSat:
        if (sp[-1] == 1.0 || sp[-1] == -1.0)
          throw EvalError("derivative of sat evaluated at its singular point +/-1");
        sp[-1] = std::fabs(sp[-1]) < 1.0 ? 1.0 : 0.0;
        break;
    }
  }
  return sp[-1];
}

}  // namespace tvest
