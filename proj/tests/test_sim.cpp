#include <cmath>
#include <complex>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "tvest/estimator.hpp"
#include "tvest/sim.hpp"

using namespace tvest;
using cd = std::complex<double>;

namespace {

SystemModel cubic_plant(bool known_d = false) {
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

SystemModel damped_third_axis() {
  SystemModel s;
  s.n = 3;
  s.k_out = 1;
  s.l_dist = 1;
  s.D = {{-1.0, 1.0}};
  s.f = {parse("x1 + x2^3"), parse("-x1*x2^2 + d1*x2"), parse("-(1 + abs(d1))*x3")};
  s.h = {parse("x1")};
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

BoundData cubic_bounds() {
  return BoundData{ScalarTimeFunction::from_text("3*exp(5*t)", FnClass::Kplus),
                   parse("s + s^3 + s^5"),
                   ScalarTimeFunction::from_text("exp(t)", FnClass::Kplus), parse("s")};
}

DisturbanceSignal zero_disturbance() {
  DisturbanceSignal d;
  d.values = {{0.0}};
  return d;
}

double max_estimate_error(const Trajectory& traj) {
  double worst = 0.0;
  for (std::size_t r = 0; r < traj.times.size(); ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < traj.x[r].size(); ++i) {
      double e = traj.xhat[r][i] - traj.x[r][i];
      acc += e * e;
    }
    worst = std::max(worst, std::sqrt(acc));
  }
  return worst;
}

}  // namespace

TEST_SUITE("adaptive stepping") {
  TEST_CASE("exponential growth hits e") {
    Rhs rhs = [](double, std::span<const double> s, std::span<double> ds) { ds[0] = s[0]; };
    SimConfig cfg;
    double s0[] = {1.0};
    auto traj = integrate(rhs, s0, cfg);
    REQUIRE_FALSE(traj.blow_up);
    REQUIRE_FALSE(traj.stiff);
    CHECK(traj.times.front() == 0.0);
    CHECK(traj.times.back() == 1.0);
    CHECK(traj.x.back()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
    CHECK(traj.steps.size() + 1 == traj.times.size());
    for (std::size_t i = 1; i < traj.times.size(); ++i) {
      CHECK(traj.times[i] > traj.times[i - 1]);
    }

    SimConfig tight = cfg;
    tight.rtol = 5e-11;
    auto traj2 = integrate(rhs, s0, tight);
    CHECK(std::fabs(traj2.x.back()[0] - traj.x.back()[0]) < 1e-9);
  }

  TEST_CASE("fixed grid runge kutta") {
    Rhs rhs = [](double, std::span<const double> s, std::span<double> ds) { ds[0] = s[0]; };
    SimConfig cfg;
    cfg.method = Method::RK4;
    cfg.fixed_step = 1e-3;
    double s0[] = {1.0};
    auto traj = integrate(rhs, s0, cfg);
    REQUIRE(traj.steps.size() == 1000);
    CHECK(std::fabs(traj.x.back()[0] - std::exp(1.0)) < 1e-11);
    for (double h : traj.steps) CHECK(h == traj.steps.front());
  }

  TEST_CASE("finite escape truncates with a diagnostic") {
    Rhs rhs = [](double, std::span<const double> s, std::span<double> ds) {
      ds[0] = s[0] * s[0];
    };
    SimConfig cfg;
    cfg.T = 2.0;
    double s0[] = {1.0};
    auto traj = integrate(rhs, s0, cfg);
    CHECK((traj.blow_up || traj.stiff));
    CHECK_FALSE(traj.diagnostic.empty());
    CHECK(traj.times.back() < 2.0);
    CHECK(traj.times.back() > 0.9);
    for (const auto& row : traj.x) {
      for (double v : row) CHECK(std::isfinite(v));
    }
  }

  TEST_CASE("bad slope at the start is reported, not integrated") {
    Rhs rhs = [](double, std::span<const double> s, std::span<double> ds) {
      ds[0] = 1.0 / s[0];
    };
    SimConfig cfg;
    double s0[] = {0.0};
    auto traj = integrate(rhs, s0, cfg);
    CHECK(traj.blow_up);
    CHECK(traj.times.size() == 1);
    CHECK(traj.diagnostic.find("not finite") != std::string::npos);
  }

  TEST_CASE("raised floor flags the run as stiff") {
    Rhs rhs = [](double, std::span<const double> s, std::span<double> ds) {
      ds[0] = s[0] * s[0];
    };
    SimConfig cfg;
    cfg.T = 2.0;
    cfg.min_step = 1e-6;
    double s0[] = {1.0};
    auto traj = integrate(rhs, s0, cfg);
    CHECK(traj.stiff);
    CHECK(traj.diagnostic.find("underflow") != std::string::npos);
  }

  TEST_CASE("config validation") {
    Rhs rhs = [](double, std::span<const double>, std::span<double> ds) { ds[0] = 0.0; };
    double s0[] = {1.0};
    SimConfig bad;
    bad.T = bad.t0;
    CHECK_THROWS_AS(integrate(rhs, s0, bad), std::invalid_argument);
    SimConfig neg;
    neg.rtol = -1.0;
    CHECK_THROWS_AS(integrate(rhs, s0, neg), std::invalid_argument);
  }
}

TEST_SUITE("disturbance signals") {
  TEST_CASE("right continuity at the breakpoints") {
    DisturbanceSignal sig;
    sig.breakpoints = {0.5, 1.5};
    sig.values = {{1.0}, {2.0}, {3.0}};
    CHECK(sig.value_at(0.0)[0] == 1.0);
    CHECK(sig.value_at(0.5)[0] == 2.0);
    CHECK(sig.value_at(1.0)[0] == 2.0);
    CHECK(sig.value_at(1.5)[0] == 3.0);
    CHECK(sig.value_at(9.0)[0] == 3.0);
  }

  TEST_CASE("random pieces live in the box and reproduce") {
    std::vector<std::pair<double, double>> D = {{-1.0, 1.0}, {0.0, 2.0}};
    std::mt19937_64 rng(42);
    auto sig = random_disturbance(rng, D, 3.0, 4);
    REQUIRE(sig.breakpoints.size() == 3);
    REQUIRE(sig.values.size() == 4);
    CHECK(std::is_sorted(sig.breakpoints.begin(), sig.breakpoints.end()));
    for (double bp : sig.breakpoints) {
      CHECK(bp > 0.0);
      CHECK(bp < 3.0);
    }
    for (const auto& v : sig.values) {
      REQUIRE(v.size() == 2);
      CHECK(v[0] >= -1.0);
      CHECK(v[0] <= 1.0);
      CHECK(v[1] >= 0.0);
      CHECK(v[1] <= 2.0);
    }
    std::mt19937_64 rng2(42);
    auto sig2 = random_disturbance(rng2, D, 3.0, 4);
    CHECK(sig2.breakpoints == sig.breakpoints);
    CHECK(sig2.values == sig.values);

    std::mt19937_64 rng3(7);
    auto one = random_disturbance(rng3, D, 1.0, 1);
    CHECK(one.breakpoints.empty());
    CHECK(one.value_at(0.3).size() == 2);

    CHECK_THROWS_AS(random_disturbance(rng3, D, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(random_disturbance(rng3, D, -1.0, 2), std::invalid_argument);
  }
}

TEST_SUITE("plant runs") {
  TEST_CASE("cubic plant from (1,0) stays on the pure exponential") {
    auto sys = cubic_plant();
    SimConfig cfg;
    double x0[] = {1.0, 0.0};
    auto traj = simulate_plant(sys, zero_disturbance(), x0, cfg);
    REQUIRE_FALSE(traj.blow_up);
    CHECK(traj.x.back()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
    for (const auto& row : traj.x) CHECK(row[1] == 0.0);
  }

  TEST_CASE("third axis decays like exp(-t) without disturbance") {
    auto sys = damped_third_axis();
    SimConfig cfg;
    double x0[] = {1.0, 0.0, 1.0};
    auto traj = simulate_plant(sys, zero_disturbance(), x0, cfg);
    CHECK(traj.x.back()[2] == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  }

  TEST_CASE("breakpoint restart is exact") {
    auto sys = cubic_plant();
    DisturbanceSignal d;
    d.breakpoints = {0.4};
    d.values = {{0.5}, {-0.8}};

    SimConfig cfg;
    double x0[] = {1.0, 0.5};
    auto full = simulate_plant(sys, d, x0, cfg);

    SimConfig first = cfg;
    first.T = 0.4;
    DisturbanceSignal da;
    da.values = {{0.5}};
    auto a = simulate_plant(sys, da, x0, first);
    SimConfig second = cfg;
    second.t0 = 0.4;
    DisturbanceSignal db;
    db.values = {{-0.8}};
    auto b = simulate_plant(sys, db, a.x.back(), second);

    bool hit = false;
    for (double t : full.times) hit = hit || t == 0.4;
    CHECK(hit);
    REQUIRE(full.x.back().size() == 2);
    CHECK(full.x.back()[0] == b.x.back()[0]);
    CHECK(full.x.back()[1] == b.x.back()[1]);
  }

  TEST_CASE("dimension mismatch is refused") {
    auto sys = cubic_plant();
    SimConfig cfg;
    double x0[] = {1.0, 0.0, 0.0};
    CHECK_THROWS_AS(simulate_plant(sys, zero_disturbance(), x0, cfg), std::invalid_argument);
  }
}

TEST_SUITE("joint runs") {
  TEST_CASE("equilibrium stays put exactly") {
    auto sys = cubic_plant();
    auto chain = cubic_chain(sys);
    auto spec = build_estimator(chain, unit_radius_design(),
                                ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus));
    SimConfig cfg;
    double x0[] = {0.0, 0.0};
    double z0[] = {0.0, 0.0};
    auto traj = cosimulate(sys, spec, zero_disturbance(), x0, z0, 0.0, cfg);
    REQUIRE_FALSE(traj.blow_up);
    REQUIRE(traj.w.empty());
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
      CHECK(traj.x[r][0] == 0.0);
      CHECK(traj.x[r][1] == 0.0);
      CHECK(traj.z[r][0] == 0.0);
      CHECK(traj.z[r][1] == 0.0);
      CHECK(traj.y[r] == 0.0);
      CHECK(traj.xhat[r][0] == 0.0);
      CHECK(traj.xhat[r][1] == 0.0);
    }
  }

  TEST_CASE("growing clock squeezes the estimator error") {
    // the last z row is feedback only, so the drift of the top derived
    // output leaves a quasi-static error of order 1/q that the clock then
    // shrinks; exact tracking is the saturated variant's job
    auto sys = cubic_plant();
    auto chain = cubic_chain(sys);
    auto spec = build_estimator(chain, unit_radius_design(),
                                ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus));
    SimConfig cfg;
    cfg.T = 0.5;
    double x0[] = {1.0, 0.5};
    double z0[] = {1.0, 0.125};  // measured output and its cubed companion
    auto traj = cosimulate(sys, spec, zero_disturbance(), x0, z0, 0.0, cfg);
    REQUIRE_FALSE(traj.blow_up);
    REQUIRE_FALSE(traj.stiff);

    double worst = 0.0, t_worst = 0.0;
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
      double e0 = traj.xhat[r][0] - traj.x[r][0];
      double e1 = traj.xhat[r][1] - traj.x[r][1];
      double e = std::sqrt(e0 * e0 + e1 * e1);
      if (e > worst) {
        worst = e;
        t_worst = traj.times[r];
      }
    }
    std::size_t last = traj.times.size() - 1;
    double f0 = traj.xhat[last][0] - traj.x[last][0];
    double f1 = traj.xhat[last][1] - traj.x[last][1];
    double final_err = std::sqrt(f0 * f0 + f1 * f1);
    CHECK(t_worst < 0.2);
    CHECK(final_err < 1e-3);
    CHECK(final_err < worst / 10.0);
    CHECK(std::fabs(traj.z[last][0] - traj.y[last]) < 1e-6);
  }

  TEST_CASE("saturated run tracks from consistent start") {
    auto sys = cubic_plant(true);
    auto chain = cubic_chain(sys);
    build_closure(chain, sys, {}, parse("3*d1*z1 - 3*y*abs_pow(z1, 4/3)"));
    auto bounds = cubic_bounds();
    auto spec = build_observer(chain, unit_radius_design(),
                               ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus),
                               bounds);
    double x0[] = {1.0, 1.0};
    auto init = consistent_init(chain, bounds, 0.0, x0);
    REQUIRE(init.z0.size() == 2);
    CHECK(init.z0[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(init.z0[1] == doctest::Approx(1.0).epsilon(1e-14));

    SimConfig cfg;
    auto d = zero_disturbance();
    auto traj = cosimulate(sys, spec, d, x0, init.z0, init.w0, cfg);
    REQUIRE_FALSE(traj.blow_up);
    REQUIRE_FALSE(traj.stiff);
    REQUIRE(traj.w.size() == traj.times.size());
    CHECK(max_estimate_error(traj) < 1e-6);
    CHECK(traj.w.back() == doctest::Approx(init.w0 * std::exp(-1.0)).epsilon(1e-8));
    CHECK(max_sat_argument(spec, sys, d, traj) < 1.0 + 1e-9);
  }

  TEST_CASE("sat argument query is inert for plain estimators") {
    auto sys = cubic_plant();
    auto chain = cubic_chain(sys);
    auto spec = build_estimator(chain, unit_radius_design(),
                                ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus));
    Trajectory traj;
    CHECK(max_sat_argument(spec, sys, zero_disturbance(), traj) == 0.0);
  }

  TEST_CASE("initial sizes are checked") {
    auto sys = cubic_plant();
    auto chain = cubic_chain(sys);
    auto spec = build_estimator(chain, unit_radius_design(),
                                ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus));
    SimConfig cfg;
    double x0[] = {0.0, 0.0};
    double z1[] = {0.0};
    CHECK_THROWS_AS(cosimulate(sys, spec, zero_disturbance(), x0, z1, 0.0, cfg),
                    std::invalid_argument);
  }
}

TEST_SUITE("csv output") {
  TEST_CASE("joint layout, header and round trip") {
    auto sys = cubic_plant(true);
    auto chain = cubic_chain(sys);
    build_closure(chain, sys, {}, parse("3*d1*z1 - 3*y*abs_pow(z1, 4/3)"));
    auto bounds = cubic_bounds();
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto spec = build_observer(chain, unit_radius_design(), phi, bounds);
    double x0[] = {1.0, 1.0};
    auto init = consistent_init(chain, bounds, 0.0, x0);
    SimConfig cfg;
    cfg.T = 0.2;
    auto traj = cosimulate(sys, spec, zero_disturbance(), x0, init.z0, init.w0, cfg);

    std::ostringstream out;
    write_csv(traj, &spec.phi, out);
    std::istringstream in(out.str());
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "t,x_1,x_2,z_0,z_1,w,xhat_1,xhat_2,abs_err,weighted_err");
    std::size_t rows = 0;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        // 17 significant digits round-trip: the w column reads back bitwise
        std::istringstream fields(line);
        std::string cell;
        for (int i = 0; i <= 5; ++i) REQUIRE(std::getline(fields, cell, ','));
        CHECK(std::strtod(cell.c_str(), nullptr) == init.w0);
        first = false;
      }
      ++rows;
    }
    CHECK(rows == traj.times.size());
  }

  TEST_CASE("plain layout stops after the states") {
    auto sys = cubic_plant();
    SimConfig cfg;
    cfg.T = 0.1;
    double x0[] = {1.0, 0.0};
    auto traj = simulate_plant(sys, zero_disturbance(), x0, cfg);
    std::ostringstream out;
    write_csv(traj, nullptr, out);
    std::istringstream in(out.str());
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "t,x_1,x_2");
  }
}
