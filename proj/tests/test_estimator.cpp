#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "tvest/estimator.hpp"

using namespace tvest;

namespace {

using cd = std::complex<double>;

SystemModel cubic_plant(bool known_d) {
  SystemModel s;
  s.n = 2;
  s.k_out = 1;
  s.l_dist = 1;
  s.D = {{-1.0, 1.0}};
  s.f = {parse("x1 + x2^3"), parse("-x1*x2^2 + d1*x2")};
  s.h = {parse("x1")};
  s.known_disturbance = known_d;
  return s;
}

ObservabilityChain cubic_chain(const SystemModel& sys) {
  auto chain = build_chain(sys, parse("y"), parse("1"), {parse("-y")}, 1);
  attach_psi(chain, sys, {parse("y"), parse("signed_pow(z1, 1/3)")});
  return chain;
}

GainDesign unit_radius_design() {
  auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
  auto clock = ScalarTimeFunction::from_text("exp(10*t)", FnClass::Kstar);
  DesignOptions opt;
  opt.R_override = 1.0;
  opt.q_override = &clock;
  std::vector<cd> roots = {{-6.0, 6.0}, {-6.0, -6.0}};
  return design_gains(2, roots, phi, opt);
}

double eval_row(const Expr& e, double t, double y, std::vector<double> z, double w = 0.0,
                std::vector<double> d = {}) {
  EvalContext ctx;
  ctx.t = t;
  ctx.y = std::span<const double>(&y, 1);
  ctx.z = z;
  ctx.w = w;
  ctx.d = d;
  return eval(e, ctx);
}

BoundData cubic_bounds() {
  return BoundData{ScalarTimeFunction::from_text("3*exp(5*t)", FnClass::Kplus),
                   parse("s + s^3 + s^5"),
                   ScalarTimeFunction::from_text("exp(t)", FnClass::Kplus), parse("s")};
}

}  // namespace

TEST_SUITE("estimator assembly") {
  TEST_CASE("cubic plant rows with unit radius and exponential clock") {
    auto sys = cubic_plant(false);
    auto chain = cubic_chain(sys);
    auto d = unit_radius_design();
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto spec = build_estimator(chain, d, phi);
    REQUIRE(spec.rhs.size() == 2);
    CHECK(spec.m == 1);
    CHECK_FALSE(spec.has_w);

    for (double t : {0.0, 0.1, 0.3}) {
      for (double y : {-1.0, 0.5}) {
        for (double z1 : {0.2, -0.7}) {
          double z2 = 1.5;
          double want0 = z2 + y - 12.0 * std::exp(10.0 * t) * (z1 - y);
          double want1 = -72.0 * std::exp(20.0 * t) * (z1 - y);
          CHECK(eval_row(spec.rhs[0], t, y, {z1, z2}) ==
                doctest::Approx(want0).epsilon(1e-12));
          CHECK(eval_row(spec.rhs[1], t, y, {z1, z2}) ==
                doctest::Approx(want1).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("single-state chain collapses to pure feedback") {
    ObservabilityChain chain;
    chain.m = 0;
    chain.g = parse("y");
    chain.a = parse("1");
    chain.y_exprs = {parse("x1")};
    chain.Psi = {parse("y")};
    chain.has_psi = true;
    std::vector<cd> roots = {{-1.0, 0.0}};
    auto phi = ScalarTimeFunction::from_text("1", FnClass::Kplus);
    auto d = design_gains(1, roots, phi);
    auto spec = build_estimator(chain, d, phi);
    REQUIRE(spec.rhs.size() == 1);
    // a R q k (z_0 - y) = 4 * 2 * (-1) (z_0 - y)
    CHECK(eval_row(spec.rhs[0], 0.7, 0.25, {1.0}) == doctest::Approx(-6.0).epsilon(1e-13));
  }

  TEST_CASE("dimension and precondition errors") {
    auto sys = cubic_plant(false);
    auto chain = cubic_chain(sys);
    auto phi = ScalarTimeFunction::from_text("1", FnClass::Kplus);
    std::vector<cd> r3 = {{-1.0, 0.0}, {-2.0, 0.0}, {-3.0, 0.0}};
    auto d3 = design_gains(3, r3, phi);
    CHECK_THROWS_AS(build_estimator(chain, d3, phi), std::invalid_argument);

    auto bare = build_chain(sys, parse("y"), parse("1"), {parse("-y")}, 1);
    auto d2 = unit_radius_design();
    auto phi5 = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    CHECK_THROWS_AS(build_estimator(bare, d2, phi5), std::invalid_argument);
    CHECK_THROWS_AS(build_observer(bare, d2, phi5, cubic_bounds()), std::invalid_argument);
  }
}

TEST_SUITE("observer assembly") {
  TEST_CASE("saturated drift row") {
    auto sys = cubic_plant(true);
    auto chain = cubic_chain(sys);
    build_closure(chain, sys, {}, parse("3*d1*z1 - 3*y*abs_pow(z1, 4/3)"));
    auto d = unit_radius_design();
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto spec = build_observer(chain, d, phi, cubic_bounds());
    REQUIRE(spec.rhs.size() == 2);
    CHECK(spec.has_w);
    CHECK(eval_row(spec.w_rhs, 0.0, 0.0, {}, 3.0) == doctest::Approx(-3.0).epsilon(1e-14));

    SUBCASE("inside the trust region the drift equals the closed form") {
      double t = 0.2, y = 0.5, z1 = 0.3, z2 = 0.7, w = 0.1, dd = 0.4;
      double beta = 3.0 * std::exp(5.0 * t) * (1.0 + std::exp(t) * std::fabs(w));
      double ytilde = 3.0 * dd * z2 - 3.0 * y * std::pow(std::fabs(z2), 4.0 / 3.0);
      REQUIRE(std::fabs(ytilde / beta) < 1.0);
      double feedback = -72.0 * std::exp(20.0 * t) * (z1 - y);
      CHECK(eval_row(spec.rhs[1], t, y, {z1, z2}, w, {dd}) ==
            doctest::Approx(ytilde + feedback).epsilon(1e-12));
      CHECK(eval_row(spec.sat_arg, t, y, {z1, z2}, w, {dd}) ==
            doctest::Approx(ytilde / beta).epsilon(1e-12));
    }

    SUBCASE("outside the trust region the drift clamps to beta") {
      double t = 0.0, y = 0.5, z1 = 0.3, z2 = 50.0, w = 0.0, dd = 0.4;
      double beta = 3.0;
      double ytilde = 3.0 * dd * z2 - 3.0 * y * std::pow(z2, 4.0 / 3.0);
      REQUIRE(ytilde / beta < -1.0);
      double feedback = -72.0 * (z1 - y);
      CHECK(eval_row(spec.rhs[1], t, y, {z1, z2}, w, {dd}) ==
            doctest::Approx(-beta + feedback).epsilon(1e-12));
    }

    SUBCASE("first row matches the estimator form") {
      double t = 0.1, y = -0.4, z1 = 0.6, z2 = -1.1;
      double want = z2 + y - 12.0 * std::exp(10.0 * t) * (z1 - y);
      CHECK(eval_row(spec.rhs[0], t, y, {z1, z2}, 0.2, {0.0}) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_SUITE("initialization and reconstruction") {
  TEST_CASE("consistent start matches the derived outputs") {
    auto sys = cubic_plant(false);
    auto chain = cubic_chain(sys);
    auto bounds = cubic_bounds();
    std::vector<double> x0 = {1.0, 1.0};
    auto init = consistent_init(chain, bounds, 0.0, x0);
    REQUIRE(init.z0.size() == 2);
    CHECK(init.z0[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(init.z0[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(init.w0 == doctest::Approx(7.0 * std::sqrt(2.0) * 1.1).epsilon(1e-12));
    CHECK(init.w0 >= 9.90);

    std::vector<double> origin = {0.0, 0.0};
    auto at0 = consistent_init(chain, bounds, 0.0, origin);
    CHECK(at0.z0[0] == 0.0);
    CHECK(at0.z0[1] == 0.0);
    CHECK(at0.w0 == 0.0);

    auto later = consistent_init(chain, bounds, 1.0, x0);
    CHECK(later.w0 == doctest::Approx(init.w0 * std::exp(-1.0)).epsilon(1e-12));
  }

  TEST_CASE("cube-root reconstruction") {
    auto sys = cubic_plant(false);
    auto chain = cubic_chain(sys);
    auto d = unit_radius_design();
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto spec = build_estimator(chain, d, phi);

    std::vector<double> dy = {8.0};
    auto xhat = reconstruct(spec, 0.0, 1.0, dy);
    REQUIRE(xhat.size() == 2);
    CHECK(xhat[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(xhat[1] == doctest::Approx(2.0).epsilon(1e-13));

    std::vector<double> zero = {0.0};
    auto at0 = reconstruct(spec, 0.3, 0.0, zero);
    CHECK(at0[0] == 0.0);
    CHECK(at0[1] == 0.0);

    std::vector<double> neg = {-27.0};
    auto cube = reconstruct(spec, 0.0, 2.0, neg);
    CHECK(cube[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(cube[1] == doctest::Approx(-3.0).epsilon(1e-13));

    std::vector<double> full = {99.0, 8.0};
    auto from_state = reconstruct(spec, 0.0, 1.0, full);
    CHECK(from_state[1] == doctest::Approx(2.0).epsilon(1e-13));

    std::vector<double> bad = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(reconstruct(spec, 0.0, 1.0, bad), std::invalid_argument);
  }
}
