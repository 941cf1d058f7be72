#include <cmath>
#include <random>

#include "doctest.h"
#include "tvest/systems.hpp"
#include "tvest/verify.hpp"

using namespace tvest;

namespace {

Trajectory two_state_traj(double offset0, double offset1) {
  Trajectory traj;
  for (int i = 0; i <= 10; ++i) {
    double t = 0.1 * i;
    traj.times.push_back(t);
    traj.x.push_back({std::sin(t), std::cos(t)});
    traj.xhat.push_back({std::sin(t) + offset0, std::cos(t) + offset1});
  }
  return traj;
}

}  // namespace

TEST_SUITE("decay fitting") {
  TEST_CASE("clean exponential recovered to machine level") {
    std::vector<double> ts, ys;
    for (int i = 0; i <= 300; ++i) {
      double t = 0.01 * i;
      ts.push_back(t);
      ys.push_back(3.0 * std::exp(-2.0 * t));
    }
    auto fit = fit_decay(ys, ts);
    CHECK(fit.C == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(fit.lambda == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.residual < 1e-10);
    CHECK(fit.used == 301);
  }

  TEST_CASE("tiny additive noise leaves the rate intact") {
    std::vector<double> ts, ys;
    for (int i = 0; i <= 2000; ++i) {
      double t = 0.01 * i;
      ts.push_back(t);
      ys.push_back(std::exp(-t) + 1e-15);
    }
    auto fit = fit_decay(ys, ts);
    CHECK(fit.lambda == doctest::Approx(1.0).epsilon(1e-3));
  }

  TEST_CASE("constant series fits a zero rate") {
    std::vector<double> ts, ys;
    for (int i = 0; i < 50; ++i) {
      ts.push_back(0.1 * i);
      ys.push_back(5.0);
    }
    auto fit = fit_decay(ys, ts);
    CHECK(std::fabs(fit.lambda) < 1e-12);
    CHECK(fit.C == doctest::Approx(5.0).epsilon(1e-12));
  }

  TEST_CASE("starved fits are refused") {
    std::vector<double> ts(50), ys(50, 1e-15);
    for (int i = 0; i < 50; ++i) ts[static_cast<std::size_t>(i)] = 0.1 * i;
    CHECK_THROWS_AS(fit_decay(ys, ts), std::invalid_argument);
    std::vector<double> short_ts(10);
    CHECK_THROWS_AS(fit_decay(ys, short_ts), std::invalid_argument);
  }
}

TEST_SUITE("pointwise weighted error") {
  TEST_CASE("zero error stays zero under any weight") {
    auto traj = two_state_traj(0.0, 0.0);
    auto w = weighted_error(traj, ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus));
    for (double v : w) CHECK(v == 0.0);
  }

  TEST_CASE("unit weight gives the plain norm") {
    auto traj = two_state_traj(0.6, 0.8);
    auto w = weighted_error(traj, ScalarTimeFunction::from_text("1", FnClass::Kplus));
    for (double v : w) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("weight multiplies through") {
    auto traj = two_state_traj(0.6, 0.8);
    auto phi = ScalarTimeFunction::from_text("exp(5*t)", FnClass::Kplus);
    auto w = weighted_error(traj, phi);
    CHECK(w.back() == doctest::Approx(std::exp(5.0)).epsilon(1e-12));
  }

  TEST_CASE("plain runs are rejected") {
    Trajectory traj;
    traj.times = {0.0};
    traj.x = {{1.0}};
    CHECK_THROWS_AS(weighted_error(traj, ScalarTimeFunction::from_text("1", FnClass::Kplus)),
                    std::invalid_argument);
  }
}

TEST_SUITE("growth bound check") {
  TEST_CASE("cubic plant sits on its printed bound") {
    auto b = builtin("ex2.5");
    SimConfig cfg;
    double x0[] = {1.0, 0.0};
    DisturbanceSignal d0;
    d0.values = {{0.0}};
    auto traj = simulate_plant(b.sys, d0, x0, cfg);
    auto rep = check_rfc(traj, b.bounds);
    CHECK(rep.pass);
    CHECK(std::fabs(rep.max_violation) < 1e-9);

    std::mt19937_64 rng(71);
    for (int s = 0; s < 5; ++s) {
      auto d = random_disturbance(rng, b.sys.D, 1.0, 3);
      double xr[] = {0.7, -0.4};
      auto tr = simulate_plant(b.sys, d, xr, cfg);
      CHECK(check_rfc(tr, b.bounds).pass);
    }
  }

  TEST_CASE("resting state is trivially inside") {
    auto b = builtin("ex2.5");
    SimConfig cfg;
    double x0[] = {0.0, 0.0};
    DisturbanceSignal d0;
    d0.values = {{0.0}};
    auto traj = simulate_plant(b.sys, d0, x0, cfg);
    auto rep = check_rfc(traj, b.bounds);
    CHECK(rep.pass);
    CHECK(rep.max_violation == 0.0);
  }

  TEST_CASE("a bound that grows too slowly is caught") {
    auto b = builtin("ex2.5");
    SimConfig cfg;
    double x0[] = {1.0, 0.0};
    DisturbanceSignal d0;
    d0.values = {{0.0}};
    auto traj = simulate_plant(b.sys, d0, x0, cfg);
    BoundData weak = b.bounds;
    weak.rfc_mu = ScalarTimeFunction::from_text("exp(0.5*t)", FnClass::Kplus);
    auto rep = check_rfc(traj, weak);
    CHECK_FALSE(rep.pass);
    CHECK(rep.max_violation ==
          doctest::Approx(std::exp(1.0) - std::exp(0.5)).epsilon(1e-2));
    CHECK(rep.worst_t == doctest::Approx(1.0));
  }
}

TEST_SUITE("reconstruction moduli") {
  TEST_CASE("cube root increment ratio peaks at the mirrored pair") {
    auto b = builtin("ex2.5");
    auto rep = check_holder(b.chain.Psi, 20000, 2.0);
    CHECK(rep.pass);
    double ratio = rep.max_violation + 2.0;
    CHECK(ratio == doctest::Approx(std::cbrt(4.0)).epsilon(1e-12));

    // spot values straight from the map
    EvalContext ca, cb;
    double ys[] = {0.0};
    ca.y = cb.y = ys;
    double za[] = {8.0}, zb[] = {-8.0};
    ca.z = za;
    cb.z = zb;
    double diff = eval(b.chain.Psi[1], ca) - eval(b.chain.Psi[1], cb);
    CHECK(diff == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(diff / std::cbrt(16.0) == doctest::Approx(4.0 / std::cbrt(16.0)).epsilon(1e-14));
    CHECK(4.0 / std::cbrt(16.0) < 2.0);

    CHECK_THROWS_AS(check_holder(b.chain.Psi, 0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(check_holder(b.chain.Psi, 10, -1.0), std::invalid_argument);
  }

  TEST_CASE("supplied modulus candidates") {
    auto b = builtin("ex2.5");
    auto one = ScalarTimeFunction::from_text("1", FnClass::Kplus);
    CHECK(check_modulus(b.chain.Psi, parse("2*abs_pow(s, 1/3)"), parse("s"), one, 10000));
    CHECK_FALSE(
        check_modulus(b.chain.Psi, parse("abs_pow(s, 1/3)"), parse("s"), one, 10000));
  }
}

TEST_SUITE("comparison oracle") {
  TEST_CASE("saturating ramp stays below its limit") {
    auto one = ScalarTimeFunction::from_text("1", FnClass::Kplus);
    auto rep = lemma211_oracle(one, one, 0.0, 20.0);
    CHECK(rep.hypothesis_ok);
    CHECK(rep.bounded);
    CHECK(rep.sup > 0.999);
    CHECK(rep.sup < 1.0 + 1e-6);
  }

  TEST_CASE("early negative damping still ends bounded") {
    auto a = ScalarTimeFunction::from_text("t - 1", FnClass::Plain);
    auto one = ScalarTimeFunction::from_text("1", FnClass::Kplus);
    auto rep = lemma211_oracle(a, one, 1.0, 20.0);
    CHECK(rep.hypothesis_ok);
    CHECK(rep.bounded);
    CHECK(rep.sup > 1.5);
    CHECK(rep.sup_t < 3.0);
  }

  TEST_CASE("divergent forcing ratio is reported, not thrown") {
    auto one = ScalarTimeFunction::from_text("1", FnClass::Kplus);
    auto b = ScalarTimeFunction::from_text("exp(0.5*t)", FnClass::Kplus);
    auto rep = lemma211_oracle(one, b, 0.0, 20.0);
    CHECK_FALSE(rep.hypothesis_ok);
    CHECK(rep.message.find("b/a") != std::string::npos);
    CHECK_FALSE(rep.bounded);

    CHECK_THROWS_AS(lemma211_oracle(one, b, 0.0, -1.0), std::invalid_argument);
  }
}

TEST_SUITE("decay envelope on the chain loop") {
  TEST_CASE("certified constants hold for free and forced runs") {
    auto c = builtin("chain(3)");
    const auto& design = c.reference->design;
    std::vector<IssRun> runs;
    IssRun r1;
    r1.x0 = {1.0, -1.0, 0.5};
    r1.theta = 0.7;
    r1.T = 2.0;
    runs.push_back(r1);
    IssRun r2;
    r2.x0 = {0.0, 0.0, 0.0};
    r2.theta = -1.2;
    r2.T = 1.0;
    std::mt19937_64 rng(9);
    r2.u = random_disturbance(rng, {{-1.0, 1.0}}, 1.0, 3);
    runs.push_back(r2);
    IssRun r3;
    r3.t0 = 0.5;
    r3.x0 = {1.0, 0.0, 0.0};
    r3.theta = -1.2;
    r3.T = 2.0;
    r3.u = random_disturbance(rng, {{-1.0, 1.0}}, 2.0, 4);
    runs.push_back(r3);

    auto rep = check_iss_chain(design, c.chain.a, runs);
    CHECK(rep.pass);
    CHECK(rep.max_violation < 0.0);
    // the forced response comes within a factor of a few of the envelope,
    // so the check is not vacuous
    CHECK(rep.max_violation > -0.9);
    // actual decay is far faster than the certified floor
    CHECK(rep.fit_lambda > design.gamma);
  }

  TEST_CASE("shape and certification guards") {
    auto c = builtin("chain(3)");
    const auto& design = c.reference->design;
    IssRun bad;
    bad.x0 = {1.0, 0.0};
    std::vector<IssRun> runs = {bad};
    CHECK_THROWS_AS(check_iss_chain(design, c.chain.a, runs), std::invalid_argument);
    IssRun rev;
    rev.x0 = {1.0, 0.0, 0.0};
    rev.T = -1.0;
    runs = {rev};
    CHECK_THROWS_AS(check_iss_chain(design, c.chain.a, runs), std::invalid_argument);

    auto e = builtin("ex2.5");  // unit-radius override, not certified
    IssRun ok;
    ok.x0 = {1.0, 0.0};
    runs = {ok};
    CHECK_THROWS_AS(check_iss_chain(e.reference->design, e.chain.a, runs),
                    std::invalid_argument);
  }
}

TEST_SUITE("packaged design convergence") {
  TEST_CASE("saturated variant recovers from a mismatched start") {
    auto b = builtin("ex2.5");
    auto spec = build_observer(b.chain, b.reference->design, b.reference->phi, b.bounds);
    double x0[] = {1.0, 1.0};
    auto init = consistent_init(b.chain, b.bounds, 0.0, x0);
    std::vector<double> z0 = init.z0;
    z0[0] += 0.3;
    z0[1] -= 0.4;
    SimConfig cfg;
    cfg.T = 0.8;
    DisturbanceSignal d0;
    d0.values = {{0.0}};
    auto traj = cosimulate(b.sys, spec, d0, x0, z0, init.w0, cfg);
    REQUIRE_FALSE(traj.blow_up);
    REQUIRE_FALSE(traj.stiff);
    auto w = weighted_error(traj, spec.phi);
    double mx = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] > mx) {
        mx = w[i];
        mt = traj.times[i];
      }
    }
    CHECK(mt < 0.4);
    CHECK(w.back() < 1e-3 * mx);
  }

  TEST_CASE("unsaturated variant decays at better than unit rate") {
    auto b = builtin("ex2.5");
    std::mt19937_64 rng(17);
    auto d = random_disturbance(rng, b.sys.D, 0.6, 3);
    SimConfig cfg;
    cfg.T = 0.6;
    double x0[] = {0.8, -0.6};
    double z0[] = {0.2, 0.5};
    auto traj = cosimulate(b.sys, *b.reference, d, x0, z0, 0.0, cfg);
    REQUIRE_FALSE(traj.blow_up);
    std::vector<double> err, ts;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      if (traj.times[i] < 0.2) continue;
      double e0 = traj.xhat[i][0] - traj.x[i][0];
      double e1 = traj.xhat[i][1] - traj.x[i][1];
      err.push_back(std::sqrt(e0 * e0 + e1 * e1));
      ts.push_back(traj.times[i]);
    }
    auto fit = fit_decay(err, ts, 1e-6);
    CHECK(fit.lambda >= 0.9);
  }
}
