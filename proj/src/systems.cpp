#include "tvest/systems.hpp"

#include <complex>
#include <stdexcept>

namespace tvest {

namespace {

BoundData cubic_bounds() {
  return BoundData{ScalarTimeFunction::from_text("3*exp(5*t)", FnClass::Kplus),
                   parse("s + s^3 + s^5"),
                   ScalarTimeFunction::from_text("exp(t)", FnClass::Kplus), parse("s")};
}

EstimatorSpec cubic_reference(const ObservabilityChain& chain) {
  auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
  auto clock = ScalarTimeFunction::from_text("exp(10*t)", FnClass::Kstar);
  DesignOptions opt;
  opt.R_override = 1.0;  // printed gains keep the radius symbolic; unit here
  opt.q_override = &clock;
  std::vector<std::complex<double>> roots = {{-6.0, 6.0}, {-6.0, -6.0}};
  return build_estimator(chain, design_gains(2, roots, phi, opt), phi);
}

EstimatorSpec cubic_saturated(const ObservabilityChain& chain, const BoundData& bounds) {
  auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
  auto clock = ScalarTimeFunction::from_text("exp(10*t)", FnClass::Kstar);
  DesignOptions opt;
  opt.R_override = 1.0;
  opt.q_override = &clock;
  std::vector<std::complex<double>> roots = {{-6.0, 6.0}, {-6.0, -6.0}};
  return build_observer(chain, design_gains(2, roots, phi, opt), phi, bounds);
}

BuiltinBundle make_cubic() {
  BuiltinBundle b;
  b.name = "ex2.5";
  SystemModel& s = b.sys;
  s.n = 2;
  s.k_out = 1;
  s.l_dist = 1;
  s.D = {{-1.0, 1.0}};
  s.f = {parse("x1 + x2^3"), parse("-x1*x2^2 + d1*x2")};
  s.h = {parse("x1")};
  s.known_disturbance = true;  // the saturated drift form needs d announced
  s.name = b.name;
  b.chain = build_chain(s, parse("y"), parse("1"), {parse("-y")}, 1);
  attach_psi(b.chain, s, {parse("y"), parse("signed_pow(z1, 1/3)")});
  build_closure(b.chain, s, {}, parse("3*d1*z1 - 3*y*abs_pow(z1, 4/3)"));
  b.bounds = cubic_bounds();
  b.reference = cubic_reference(b.chain);
  return b;
}

BuiltinBundle make_damped_axis() {
  BuiltinBundle b;
  b.name = "ex2.8";
  SystemModel& s = b.sys;
  s.n = 3;
  s.k_out = 1;
  s.l_dist = 1;
  s.D = {{-1.0, 1.0}};
  s.f = {parse("x1 + x2^3"), parse("-x1*x2^2 + d1*x2"), parse("-(1 + abs(d1))*x3")};
  s.h = {parse("x1")};
  s.name = b.name;
  b.chain = build_chain(s, parse("y"), parse("1"), {parse("-y")}, 1);
  // the third axis never reaches the measured output; the map recovers it
  // only up to its own decay, so the exact-identity attachment does not
  // apply and the components are installed directly
  b.chain.Psi = {parse("y"), parse("signed_pow(z1, 1/3)"), parse("0")};
  b.chain.has_psi = true;
  b.bounds = cubic_bounds();
  b.reference = cubic_reference(b.chain);
  return b;
}

BuiltinBundle make_kinked() {
  BuiltinBundle b;
  b.name = "remark2.5c";
  SystemModel& s = b.sys;
  s.n = 2;
  s.k_out = 1;
  s.l_dist = 0;
  s.f = {parse("abs(x1) + x2"), parse("0")};
  s.h = {parse("signed_pow(x1, 1/3)")};
  s.name = b.name;
  b.chain = build_chain(s, parse("y^3"), parse("1"), {parse("-abs(y^3)")}, 1);
  attach_psi(b.chain, s, {parse("y^3"), parse("z1")});
  // nothing printed for this one; Gronwall on |x1|' <= |x1| + |x2| gives
  // |x(t)| <= 3 exp(t) |x(0)| and the chain magnitude adds the output's
  // cube root on top
  b.bounds = BoundData{ScalarTimeFunction::from_text("3*exp(t)", FnClass::Kplus),
                       parse("abs_pow(s, 1/3) + s"),
                       ScalarTimeFunction::from_text("3*exp(t)", FnClass::Kplus), parse("s")};
  return b;
}

BuiltinBundle make_chain(int n) {
  if (n < 2 || n > 8) {
    throw std::invalid_argument("chain length must be between 2 and 8");
  }
  BuiltinBundle b;
  b.name = "chain(" + std::to_string(n) + ")";
  SystemModel& s = b.sys;
  s.n = n;
  s.k_out = 1;
  s.l_dist = 2;  // d1 is the scheduling angle, d2 the drive on the last row
  s.D = {{-3.2, 3.2}, {-1.0, 1.0}};
  const std::string a_text = "1 + 0.5*sin(t + d1)";
  for (int i = 1; i < n; ++i) {
    s.f.push_back(parse("(" + a_text + ")*x" + std::to_string(i + 1)));
  }
  s.f.push_back(parse("d2"));
  s.h = {parse("x1")};
  s.origin_is_equilibrium = false;  // the drive moves the origin
  s.known_disturbance = true;
  s.name = b.name;

  std::vector<Expr> inj(static_cast<std::size_t>(n - 1), parse("0"));
  b.chain = build_chain(s, parse("y"), parse(a_text), inj, n - 1);
  std::vector<Expr> psi;
  psi.push_back(parse("y"));
  for (int i = 1; i < n; ++i) psi.push_back(parse("z" + std::to_string(i)));
  attach_psi(b.chain, s, psi);
  build_closure(b.chain, s, {}, parse("d2"));

  // bounds for the undriven chain (d2 = 0): the multiplier stays below 3/2,
  // so |x(t)| <= exp(3t/2) |x(0)| and the stacked chain values are below
  // sqrt(n) |x|
  b.bounds = BoundData{ScalarTimeFunction::from_text("exp(1.5*t)", FnClass::Kplus),
                       parse(std::to_string(n) + "*s"),
                       ScalarTimeFunction::from_text("exp(1.5*t)", FnClass::Kplus),
                       parse("s")};

  auto one = ScalarTimeFunction::from_text("1", FnClass::Kplus);
  // roots spread over [-2, -1]; pushing them out to -n blows the loop
  // polynomial coefficients up factorially and the certificate solve with it
  std::vector<std::complex<double>> roots;
  for (int i = 0; i < n; ++i) {
    roots.push_back({-1.0 - static_cast<double>(i) / (n - 1), 0.0});
  }
  DesignOptions opt;
  opt.l = 0.5;
  b.reference = build_estimator(b.chain, design_gains(n, roots, one, opt), one);
  return b;
}

}  // namespace

BuiltinBundle builtin(const std::string& name) {
  if (name == "ex2.5") return make_cubic();
  if (name == "ex3.4") {
    BuiltinBundle b = make_cubic();
    b.name = "ex3.4";
    b.sys.name = b.name;
    b.reference = cubic_saturated(b.chain, b.bounds);
    return b;
  }
  if (name == "ex2.8") return make_damped_axis();
  if (name == "remark2.5c") return make_kinked();
  if (name.rfind("chain(", 0) == 0 && name.back() == ')') {
    std::string inner = name.substr(6, name.size() - 7);
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(inner, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != inner.size() || inner.empty()) {
      throw std::invalid_argument("bad chain length in '" + name + "'");
    }
    return make_chain(n);
  }
  throw std::invalid_argument("unknown builtin '" + name +
                              "'; known: ex2.5, ex3.4, ex2.8, remark2.5c, chain(n)");
}

std::vector<std::string> builtin_names() {
  return {"ex2.5", "ex3.4", "ex2.8", "remark2.5c", "chain(n)"};
}

}  // namespace tvest
