#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvest/rational.hpp"

namespace tvest {

// Immutable scalar expression trees over a fixed variable vocabulary:
//   t            time
//   x1..xn       plant state
//   d1..dl       disturbance / exogenous signal components
//   y, y1..yk    measured outputs (y is an alias for y1)
//   z1..zm       estimator state components
//   w            scalar bound-tracking state
//   s            generic scalar argument (used by gain-function bodies)
enum class VarKind : std::uint8_t { T, X, D, Y, Z, W, S };

struct VarRef {
  VarKind kind = VarKind::T;
  int index = 0;  // 1-based for X/D/Y/Z, 0 for T/W/S
  friend bool operator==(VarRef a, VarRef b) { return a.kind == b.kind && a.index == b.index; }
  friend bool operator<(VarRef a, VarRef b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.index < b.index;
  }
  std::string name() const;
};

enum class Op : std::uint8_t {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Pow,        // base ^ rational exponent (exact)
  Exp,
  Sin,
  Cos,
  Abs,
  Sgn,
  Sat,        // clamp to [-1, 1]
  SignedPow,  // sgn(u)|u|^p
  AbsPow,     // |u|^p
  DSign,      // sgn(u) with a declared singularity at u = 0 (d/du |u|)
  DZero,      // 0 away from 0, singular at u = 0        (d/du sgn(u))
  DSat        // 1 inside (-1,1), 0 outside, singular at |u| = 1 (d/du sat(u))
};

class ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

class ExprNode {
 public:
  Op op;
  double value = 0.0;    // Const
  VarRef var{};          // Var
  Rational exponent{};   // Pow / SignedPow / AbsPow
  Expr a, b;             // children (a for unary, a+b for binary)
};

// --- construction -----------------------------------------------------------

Expr constant(double v);
Expr variable(VarKind kind, int index = 0);
Expr t_var();
Expr x_var(int i);
Expr d_var(int i);
Expr y_var(int i = 1);
Expr z_var(int i);
Expr w_var();
Expr s_var();

inline VarRef t_ref() { return {VarKind::T, 0}; }
inline VarRef x_ref(int i) { return {VarKind::X, i}; }
inline VarRef d_ref(int i) { return {VarKind::D, i}; }
inline VarRef y_ref(int i = 1) { return {VarKind::Y, i}; }
inline VarRef z_ref(int i) { return {VarKind::Z, i}; }
inline VarRef w_ref() { return {VarKind::W, 0}; }
inline VarRef s_ref() { return {VarKind::S, 0}; }

Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr div(Expr a, Expr b);
Expr neg(Expr a);
Expr pow_rat(Expr base, Rational e);
Expr exp_e(Expr a);
Expr sin_e(Expr a);
Expr cos_e(Expr a);
Expr abs_e(Expr a);
Expr sgn_e(Expr a);
Expr sat_e(Expr a);
Expr signed_pow(Expr a, Rational p);
Expr abs_pow(Expr a, Rational p);
Expr dsign(Expr a);
Expr dzero(Expr a);
Expr dsat(Expr a);

inline Expr operator+(Expr a, Expr b) { return add(std::move(a), std::move(b)); }
inline Expr operator-(Expr a, Expr b) { return sub(std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return mul(std::move(a), std::move(b)); }
inline Expr operator/(Expr a, Expr b) { return div(std::move(a), std::move(b)); }
inline Expr operator-(Expr a) { return neg(std::move(a)); }

// --- errors -----------------------------------------------------------------

struct ParseError : std::runtime_error {
  int line, column;
  ParseError(const std::string& msg, int line_, int col_)
      : std::runtime_error(msg + " (line " + std::to_string(line_) + ", column " +
                           std::to_string(col_) + ")"),
        line(line_),
        column(col_) {}
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DiffError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- evaluation -------------------------------------------------------------

struct EvalContext {
  double t = 0.0;
  std::span<const double> x{};
  std::span<const double> d{};
  std::span<const double> y{};
  std::span<const double> z{};
  double w = 0.0;
  double s = 0.0;

  double get(VarRef v) const;
};

double eval(const Expr& e, const EvalContext& ctx);

// --- analysis / transformation ----------------------------------------------

// Parses the textual grammar documented in the README. Throws ParseError.
Expr parse(const std::string& src);

// Prints with minimal parentheses; parse(to_string(e)) is structurally equal to e.
std::string to_string(const Expr& e);

// Exact partial derivative. Derivatives of abs/sgn/sat/signed_pow introduce
// nodes whose evaluation at the singular set raises EvalError.
Expr differentiate(const Expr& e, VarRef v);

// Normalizing algebraic simplification: constant folding, flattening and
// collection of sums/products, power rewrites, deterministic operand order.
// Two expressions representing the same normal form simplify to structurally
// equal trees, so simplify(a) == simplify(b) (via equal()) is the structural
// comparison used throughout.
Expr simplify(const Expr& e);

// Exact structural equality (same ops, constants, variables, exponents).
bool equal(const Expr& a, const Expr& b);

// Total order consistent with equal(); used for canonical operand sorting.
int compare(const Expr& a, const Expr& b);

Expr substitute(const Expr& e, const std::vector<std::pair<VarRef, Expr>>& map);

std::set<VarRef> free_vars(const Expr& e);

bool contains_singular_nodes(const Expr& e);  // DSign / DZero / DSat present

// --- compiled form for tight loops -------------------------------------------

// Maps variables to slots of a flat input vector.
struct SlotLayout {
  int t_slot = -1;
  int x0 = -1, nx = 0;
  int d0 = -1, nd = 0;
  int y0 = -1, ny = 0;
  int z0 = -1, nz = 0;
  int w_slot = -1;
  int s_slot = -1;
  int slot(VarRef v) const;  // -1 if unmapped
};

class Tape {
 public:
  Tape() = default;
  void compile(const Expr& e, const SlotLayout& layout);
  double eval(std::span<const double> slots) const;

 private:
  struct Instr {
    Op op;
    std::int32_t arg = 0;  // slot index (Var), const-pool index, or rational-pool index
  };
  std::vector<Instr> code_;
  std::vector<double> consts_;
  std::vector<Rational> rats_;
  mutable std::vector<double> stack_;
};

// Shared pow with exact-rational exponent semantics (0^neg and negative
// base with non-integer exponent raise EvalError).
double eval_pow_rational(double base, const Rational& r);
double eval_signed_pow(double u, const Rational& p);
double eval_abs_pow(double u, const Rational& p);
double sat_value(double u);

}  // namespace tvest
