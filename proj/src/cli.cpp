#include "tvest/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "tvest/specfile.hpp"
#include "tvest/verify.hpp"

namespace tvest {

namespace {

std::optional<LoadedSystem> load_or_report(const std::string& ref, std::ostream& err) {
  try {
    return load_model(ref);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return std::nullopt;
  }
}

std::optional<std::vector<double>> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      while (used < part.size() && std::isspace(static_cast<unsigned char>(part[used]))) ++used;
      if (used != part.size()) return std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  if (out.empty()) return std::nullopt;
  return out;
}

DisturbanceSignal zero_signal(int width) {
  DisturbanceSignal d;
  d.values = {std::vector<double>(static_cast<std::size_t>(width), 0.0)};
  return d;
}

SimConfig config_from(const SimSection& sim) {
  SimConfig cfg;
  cfg.t0 = sim.t0;
  cfg.T = sim.T;
  cfg.method = sim.method;
  cfg.rtol = sim.rtol;
  cfg.atol = sim.atol;
  cfg.fixed_step = sim.fixed_step;
  return cfg;
}

void print_vector(std::ostream& out, std::span<const double> v) {
  out << "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ", ";
    out << v[i];
  }
  out << ")";
}

}  // namespace

int cmd_design(const std::string& ref, std::ostream& out, std::ostream& err) {
  auto sys = load_or_report(ref, err);
  if (!sys) return kExitUsage;
  if (!sys->estimator) {
    err << ref << ": no [estimator] section, nothing to design\n";
    return kExitUsage;
  }
  const GainDesign& d = sys->estimator->design;
  out << std::setprecision(12);
  out << "system    = " << sys->sys.name << "\n";
  out << "n         = " << d.n << "\n";
  out << "k         = ";
  print_vector(out, d.k);
  out << "\n";
  out << "P         = [";
  for (int i = 0; i < d.P.size(); ++i) {
    if (i) out << ", ";
    out << "[";
    for (int j = 0; j < d.P.size(); ++j) {
      if (j) out << ", ";
      out << d.P(i, j);
    }
    out << "]";
  }
  out << "]\n";
  out << "mu        = " << d.mu << "\n";
  out << "K1        = " << d.K1 << "\n";
  out << "K2        = " << d.K2 << "\n";
  out << "l         = " << d.l << "\n";
  out << "R         = " << d.R << (d.certified ? " (certified)" : " (below the certified radius)")
      << "\n";
  out << "phi       = " << to_string(d.phi.body()) << "\n";
  out << "q         = " << to_string(d.q.body()) << "\n";
  if (d.constants_valid) {
    out << "gamma     = " << d.gamma << "\n";
    out << "M         = " << d.M << "\n";
    out << "rho(0)    = exp(" << d.rho_log_at(0.0) << ")\n";
  } else {
    out << "gamma, M  = unavailable (transient envelope constants did not settle)\n";
  }
  for (const std::string& w : d.warnings) out << "warning: " << w << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& ref, const std::string& csv_path, const SimulateOptions& opt,
                 std::ostream& out, std::ostream& err) {
  auto sys = load_or_report(ref, err);
  if (!sys) return kExitUsage;
  const int n = sys->sys.n;
  SimConfig cfg = config_from(sys->sim);

  std::vector<double> x0(static_cast<std::size_t>(n), 0.0);
  if (!opt.x0.empty()) {
    if (static_cast<int>(opt.x0.size()) != n) {
      err << "--x0 needs " << n << " components\n";
      return kExitUsage;
    }
    x0 = opt.x0;
  }

  DisturbanceSignal dist = zero_signal(sys->sys.l_dist);
  if (sys->sim.n_pieces > 0 && sys->sys.l_dist > 0) {
    std::mt19937_64 rng(opt.seed.value_or(sys->sim.seed));
    dist = random_disturbance(rng, sys->sys.D, cfg.T, sys->sim.n_pieces);
  }

  Trajectory traj;
  const ScalarTimeFunction* phi = nullptr;
  try {
    if (sys->estimator) {
      const EstimatorSpec& spec = *sys->estimator;
      const int nz = spec.m + 1;
      std::vector<double> z0(static_cast<std::size_t>(nz), 0.0);
      double w0 = 0.0;
      if (opt.consistent && !opt.z0.empty()) {
        err << "--consistent and --z0 are mutually exclusive\n";
        return kExitUsage;
      }
      if (opt.consistent) {
        if (!sys->has_growth) {
          err << ref << ": consistent starts need beta_tilde and kappa_a\n";
          return kExitUsage;
        }
        auto init = consistent_init(spec.chain, sys->bounds, cfg.t0, x0);
        z0 = init.z0;
        w0 = init.w0;
      } else if (!opt.z0.empty()) {
        if (static_cast<int>(opt.z0.size()) != nz) {
          err << "--z0 needs " << nz << " components\n";
          return kExitUsage;
        }
        z0 = opt.z0;
        if (spec.has_w && sys->has_growth) w0 = consistent_init(spec.chain, sys->bounds, cfg.t0, x0).w0;
      } else if (spec.has_w && sys->has_growth) {
        w0 = consistent_init(spec.chain, sys->bounds, cfg.t0, x0).w0;
      }
      phi = &spec.phi;
      traj = cosimulate(sys->sys, spec, dist, x0, z0, w0, cfg);
    } else {
      traj = simulate_plant(sys->sys, dist, x0, cfg);
    }
  } catch (const std::exception& e) {
    err << "integration failed: " << e.what() << "\n";
    return kExitNumerical;
  }

  std::ofstream ofs(csv_path);
  if (!ofs) {
    err << "cannot open '" << csv_path << "' for writing\n";
    return kExitUsage;
  }
  write_csv(traj, phi, ofs);
  if (traj.blow_up || traj.stiff) {
    err << "integration stopped early: " << traj.diagnostic << "\n";
    return kExitNumerical;
  }
  out << "wrote " << traj.times.size() << " rows to " << csv_path << "\n";
  return kExitOk;
}

namespace {

int verify_rfc(const LoadedSystem& sys, const VerifyOptions& opt, std::ostream& out,
               std::ostream& err) {
  if (!sys.has_rfc) {
    err << sys.origin << ": no rfc_mu / rfc_a data to check against\n";
    return kExitUsage;
  }
  constexpr int kRuns = 20;
  SimConfig cfg = config_from(sys.sim);

  struct RunInput {
    std::vector<double> x0;
    DisturbanceSignal d;
  };
  std::mt19937_64 rng(opt.seed.value_or(sys.sim.seed));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<RunInput> inputs(kRuns);
  for (RunInput& in : inputs) {
    in.x0.resize(static_cast<std::size_t>(sys.sys.n));
    for (double& c : in.x0) c = unit(rng);
    if (sys.sys.l_dist > 0) {
      in.d = random_disturbance(rng, sys.sys.D, cfg.T, std::max(3, sys.sim.n_pieces));
    } else {
      in.d = zero_signal(0);
    }
  }

  std::vector<EnvelopeReport> reports(kRuns);
  std::vector<std::string> failures(kRuns);
  const int jobs = std::clamp(opt.jobs, 1, kRuns);
  auto worker = [&](int first) {
    for (int i = first; i < kRuns; i += jobs) {
      const std::size_t ui = static_cast<std::size_t>(i);
      try {
        auto traj = simulate_plant(sys.sys, inputs[ui].d, inputs[ui].x0, cfg);
        reports[ui] = check_rfc(traj, sys.bounds);
      } catch (const std::exception& e) {
        failures[ui] = e.what();
      }
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker, j);
    for (std::thread& th : pool) th.join();
  }

  for (int i = 0; i < kRuns; ++i) {
    if (!failures[static_cast<std::size_t>(i)].empty()) {
      err << "run " << i << " failed: " << failures[static_cast<std::size_t>(i)] << "\n";
      return kExitNumerical;
    }
  }
  double worst = -1e300, worst_t = 0.0;
  bool pass = true;
  for (const EnvelopeReport& r : reports) {
    if (r.max_violation > worst) {
      worst = r.max_violation;
      worst_t = r.worst_t;
    }
    pass = pass && r.pass;
  }
  out << std::setprecision(6);
  out << "growth bound: " << kRuns << " runs over [" << cfg.t0 << ", " << cfg.T
      << "], max violation = " << worst << " at t = " << worst_t << "\n";
  out << (pass ? "pass" : "fail") << "\n";
  return pass ? kExitOk : kExitNumerical;
}

int verify_holder(const LoadedSystem& sys, const VerifyOptions& opt, std::ostream& out,
                  std::ostream& err) {
  if (!sys.has_chain || !sys.chain.has_psi) {
    err << sys.origin << ": no reconstruction map to check\n";
    return kExitUsage;
  }
  EnvelopeReport rep = check_holder(sys.chain.Psi, 20000, 2.0,
                                    static_cast<unsigned>(opt.seed.value_or(0x5e11u)));
  out << std::setprecision(6);
  out << "reconstruction increments: sup ratio = " << rep.max_violation + 2.0
      << " (bound 2) over " << 20000 << " samples\n";
  out << (rep.pass ? "pass" : "fail") << "\n";
  return rep.pass ? kExitOk : kExitNumerical;
}

int verify_iss(const LoadedSystem& sys, const VerifyOptions& opt, std::ostream& out,
               std::ostream& err) {
  if (!sys.estimator) {
    err << sys.origin << ": no gain design to certify\n";
    return kExitUsage;
  }
  const GainDesign& design = sys.estimator->design;
  std::mt19937_64 rng(opt.seed.value_or(sys.sim.seed));
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  const double T = std::max(1.0, sys.sim.T);
  std::pair<double, double> theta_box =
      sys.sys.l_dist >= 1 ? sys.sys.D[0] : std::make_pair(0.0, 0.0);
  std::pair<double, double> u_box =
      sys.sys.l_dist >= 2 ? sys.sys.D[1] : std::make_pair(-1.0, 1.0);

  std::vector<IssRun> runs;
  for (int i = 0; i < 6; ++i) {
    IssRun r;
    r.t0 = sys.sim.t0;
    r.T = r.t0 + T;
    r.x0.resize(static_cast<std::size_t>(design.n));
    for (double& c : r.x0) c = box(rng);
    std::uniform_real_distribution<double> th(theta_box.first, theta_box.second);
    r.theta = th(rng);
    if (i >= 3) r.u = random_disturbance(rng, {u_box}, r.T, 4);
    runs.push_back(std::move(r));
  }

  EnvelopeReport rep;
  try {
    rep = check_iss_chain(design, sys.chain.a, runs);
  } catch (const std::invalid_argument& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }
  out << std::setprecision(6);
  out << "decay envelope: 3 free + 3 forced runs, max scaled violation = " << rep.max_violation
      << "\n";
  out << "certified rate = " << design.gamma << ", fitted free-run rate = " << rep.fit_lambda
      << "\n";
  if (!rep.note.empty()) out << "note: " << rep.note << "\n";
  out << (rep.pass ? "pass" : "fail") << "\n";
  return rep.pass ? kExitOk : kExitNumerical;
}

}  // namespace

int cmd_verify(const std::string& ref, const std::string& check, const VerifyOptions& opt,
               std::ostream& out, std::ostream& err) {
  auto sys = load_or_report(ref, err);
  if (!sys) return kExitUsage;
  if (check == "rfc") return verify_rfc(*sys, opt, out, err);
  if (check == "holder") return verify_holder(*sys, opt, out, err);
  if (check == "iss") return verify_iss(*sys, opt, out, err);
  err << "unknown check '" << check << "'; known checks: rfc, holder, iss\n";
  return kExitUsage;
}

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"time-varying estimator workbench"};
  app.name("tvest");

  std::string ref, csv_path, check;
  std::string x0_text, z0_text;
  std::uint64_t seed_val = 0;
  SimulateOptions sopt;
  VerifyOptions vopt;

  CLI::App* des = app.add_subcommand("design", "print the gain design held by a spec");
  des->add_option("spec", ref, "spec file path or builtin:<name>")->required();

  CLI::App* sim = app.add_subcommand("simulate", "integrate a spec and write CSV");
  sim->add_option("spec", ref, "spec file path or builtin:<name>")->required();
  sim->add_option("csv", csv_path, "output CSV path")->required();
  sim->add_option("--seed", seed_val, "seed for the disturbance draw");
  sim->add_option("--x0", x0_text, "comma-separated initial state");
  sim->add_option("--z0", z0_text, "comma-separated initial estimator state");
  sim->add_flag("--consistent", sopt.consistent, "start z on the derived outputs of x0");

  CLI::App* ver = app.add_subcommand("verify", "run a property check over seeded runs");
  ver->add_option("spec", ref, "spec file path or builtin:<name>")->required();
  ver->add_option("check", check, "one of: rfc, holder, iss")->required();
  ver->add_option("--seed", seed_val, "master seed for the runs");
  ver->add_option("--jobs", vopt.jobs, "worker threads for independent runs")
      ->check(CLI::Range(1, 64));

  app.require_subcommand(1);
  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (des->parsed()) return cmd_design(ref, out, err);
  if (sim->parsed()) {
    if (sim->count("--seed")) sopt.seed = seed_val;
    if (!x0_text.empty()) {
      auto v = parse_list(x0_text);
      if (!v) {
        err << "--x0 expects comma-separated numbers\n";
        return kExitUsage;
      }
      sopt.x0 = *v;
    }
    if (!z0_text.empty()) {
      auto v = parse_list(z0_text);
      if (!v) {
        err << "--z0 expects comma-separated numbers\n";
        return kExitUsage;
      }
      sopt.z0 = *v;
    }
    return cmd_simulate(ref, csv_path, sopt, out, err);
  }
  if (ver->parsed() && ver->count("--seed")) vopt.seed = seed_val;
  return cmd_verify(ref, check, vopt, out, err);
}

}  // namespace tvest
