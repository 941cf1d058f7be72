#include <cmath>
#include <vector>

#include "doctest.h"
#include "tvest/expr.hpp"
#include "tvest/timefun.hpp"

using namespace tvest;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return g;
}

}  // namespace

TEST_SUITE("time function classes") {
  TEST_CASE("construction rejects state variables") {
    CHECK_THROWS_AS(ScalarTimeFunction(parse("x1 + t"), FnClass::Kplus), std::invalid_argument);
    CHECK_THROWS_AS(ScalarTimeFunction(parse("w"), FnClass::Plain), std::invalid_argument);
    CHECK_NOTHROW(ScalarTimeFunction(parse("exp(2*t) + 1"), FnClass::Kplus));
  }

  TEST_CASE("value and slope") {
    auto f = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    CHECK(f.value(0.0) == 1.0);
    CHECK(f.value(0.3) == doctest::Approx(std::exp(1.5)).epsilon(1e-14));
    CHECK(f.differentiable());
    CHECK(f.slope(0.3) == doctest::Approx(5.0 * std::exp(1.5)).epsilon(1e-12));
  }

  TEST_CASE("grid preconditions") {
    auto f = ScalarTimeFunction::from_text("1", FnClass::Kstar);
    std::vector<double> short_grid = {0.0};
    CHECK_THROWS_AS(check_class(f, short_grid, 1e-3), std::invalid_argument);
    std::vector<double> unsorted = {0.0, 2.0, 1.0};
    CHECK_THROWS_AS(check_class(f, unsorted, 1e-3), std::invalid_argument);
  }

  TEST_CASE("constant one is a valid clock") {
    auto f = ScalarTimeFunction::from_text("1", FnClass::Kstar);
    auto grid = linspace(0.0, 2.0, 201);
    auto rep = check_class(f, grid, 1e-3);
    CHECK(rep.pass);
  }

  TEST_CASE("exponential weight passes on a long horizon") {
    auto f = ScalarTimeFunction::from_text("exp(t)", FnClass::Kstar);
    auto grid = linspace(0.0, 10.0, 1001);
    auto rep = check_class(f, grid, 1e-3);
    // slope/value^2 = exp(-t), about 1.2e-4 at the tail start t = 9
    CHECK(rep.pass);
  }

  TEST_CASE("exp(t^2) fails the decay check on a short horizon") {
    auto f = ScalarTimeFunction::from_text("exp(t^2)", FnClass::Kstar);
    auto grid = linspace(0.0, 2.0, 401);
    auto rep = check_class(f, grid, 1e-3);
    CHECK_FALSE(rep.pass);
    // slope/value^2 = 2 t exp(-t^2) = 0.0733 at t = 2, far above 1e-3;
    // the other properties hold
    int failed = 0;
    for (const auto& c : rep.checks) {
      if (!c.pass) {
        ++failed;
        CHECK(c.property == "slope/value^2 decays");
      }
    }
    CHECK(failed == 1);
  }

  TEST_CASE("non-finite samples are caught") {
    auto f = ScalarTimeFunction::from_text("exp(exp(t))", FnClass::Kplus);
    auto grid = linspace(0.0, 8.0, 81);
    auto rep = check_class(f, grid, 1e-3);
    CHECK_FALSE(rep.pass);
    CHECK(rep.checks.front().property == "finite samples");
  }

  TEST_CASE("domain errors report the offending time") {
    auto f = ScalarTimeFunction::from_text("1/(1 - t)", FnClass::Kplus);
    auto grid = linspace(0.0, 2.0, 21);
    try {
      check_class(f, grid, 1e-3);
      FAIL("expected EvalError");
    } catch (const EvalError& e) {
      CHECK(std::string(e.what()).find("at t = 1") != std::string::npos);
    }
  }

  TEST_CASE("unbounded growth accepted, saturation rejected") {
    auto grow = ScalarTimeFunction::from_text("t + t^3", FnClass::Kinf);
    CHECK(check_class(grow, linspace(0.0, 5.0, 501), 1e-3).pass);

    auto flat = ScalarTimeFunction::from_text("sat(t)", FnClass::Kinf);
    auto rep = check_class(flat, linspace(0.0, 5.0, 501), 1e-3);
    CHECK_FALSE(rep.pass);
    bool growth_failed = false;
    for (const auto& c : rep.checks)
      if (c.property == "still growing at the horizon" && !c.pass) growth_failed = true;
    CHECK(growth_failed);

    // bounded but strictly increasing: only the growth proxy can flag it,
    // and it needs a horizon long enough for the plateau to show
    auto asym = ScalarTimeFunction::from_text("t/(1 + t)", FnClass::Kinf);
    CHECK_FALSE(check_class(asym, linspace(0.0, 500.0, 1001), 1e-3).pass);
  }
}

TEST_SUITE("gain clock derivation") {
  TEST_CASE("exponential weight") {
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto q = derive_q(phi);
    // |phi'|/phi + phi^2 + 1 = 5 + exp(10 t) + 1
    CHECK(equal(q.body(), simplify(parse("exp(10*t) + 6"))));
    CHECK(q.claimed() == FnClass::Kstar);
    CHECK(check_class(q, linspace(0.0, 2.0, 201), 1e-3).pass);
  }

  TEST_CASE("constant weight") {
    auto phi = ScalarTimeFunction::from_text("1", FnClass::Kplus);
    auto q = derive_q(phi);
    CHECK(equal(q.body(), constant(2.0)));
    CHECK(check_class(q, linspace(0.0, 10.0, 101), 1e-3).pass);
  }

  TEST_CASE("polynomial weight") {
    auto phi = ScalarTimeFunction::from_text("(1 + t)^(1/2)", FnClass::Kplus);
    auto q = derive_q(phi);
    for (double t : {0.0, 0.7, 3.0, 12.5}) {
      double expected = 0.5 / (1.0 + t) + (1.0 + t) + 1.0;
      CHECK(q.value(t) == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(check_class(q, linspace(0.0, 40.0, 2001), 1e-3).pass);
  }

  TEST_CASE("derived clock dominates with unit margin") {
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto q = derive_q(phi);
    auto grid = linspace(0.0, 4.0, 401);
    auto chk = check_gain_clock(phi, q, grid);
    CHECK(chk.satisfied);
    CHECK(chk.max_deficit == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(chk.warning.empty());
  }

  TEST_CASE("undersized clock is flagged with its deficit") {
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto q = ScalarTimeFunction::from_text("exp(10*t)", FnClass::Kstar);
    auto grid = linspace(0.0, 4.0, 401);
    auto chk = check_gain_clock(phi, q, grid);
    CHECK_FALSE(chk.satisfied);
    // bound - q = (5 + exp(10 t)) - exp(10 t) = 5 exactly
    CHECK(chk.max_deficit == doctest::Approx(5.0).epsilon(1e-12));
    CHECK_FALSE(chk.warning.empty());
  }
}
