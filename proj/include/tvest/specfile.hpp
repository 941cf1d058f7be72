#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvest/estimator.hpp"
#include "tvest/obsmap.hpp"
#include "tvest/sim.hpp"
#include "tvest/timefun.hpp"

namespace tvest {

struct SpecError : std::runtime_error {
  int line;
  SpecError(const std::string& origin, int line_, const std::string& msg)
      : std::runtime_error(origin + ":" + std::to_string(line_) + ": " + msg), line(line_) {}
};

// Simulation defaults carried by the [sim] section. n_pieces = 0 keeps the
// disturbance identically zero; positive values draw a piecewise-constant
// signal from the model's box with the stored seed.
struct SimSection {
  double t0 = 0.0;
  double T = 1.0;
  Method method = Method::RK45;
  double rtol = 1e-10;
  double atol = 1e-12;
  double fixed_step = 1e-3;
  std::uint64_t seed = 1;
  int n_pieces = 0;
};

// Parsed file contents, before any chain or gain construction runs. Raw
// expression trees are kept so instantiation can be re-run cheaply.
struct SpecFile {
  std::string origin;
  SystemModel sys;

  bool has_chain = false;
  int m = 0;
  Expr g;
  Expr a;
  std::vector<Expr> injections;
  std::vector<Expr> Psi;
  Expr y_next_tilde;  // null when the chain is left open

  bool has_estimator = false;
  EstimatorKind kind = EstimatorKind::Estimator;
  ScalarTimeFunction phi;
  std::vector<std::complex<double>> roots;
  double l = 1.0;
  double R_multiplier = 1.0;
  double R_override = 0.0;
  std::optional<ScalarTimeFunction> q;
  std::optional<ScalarTimeFunction> beta_tilde;
  Expr kappa_a;  // null unless given

  bool has_rfc = false;
  ScalarTimeFunction rfc_mu;
  Expr rfc_a;

  SimSection sim;
};

// origin is used in error messages only.
SpecFile parse_specfile(std::istream& in, const std::string& origin);
SpecFile load_specfile(const std::string& path);

// A spec file or builtin brought to runnable form: chain built and checked,
// gains designed, estimator assembled when requested.
struct LoadedSystem {
  std::string origin;
  SystemModel sys;
  ObservabilityChain chain;
  bool has_chain = false;
  BoundData bounds;
  bool has_rfc = false;
  bool has_growth = false;  // beta_tilde and kappa_a present
  std::optional<EstimatorSpec> estimator;
  SimSection sim;
};

LoadedSystem instantiate(const SpecFile& spec);

// Accepts "builtin:<name>" or a file path.
LoadedSystem load_model(const std::string& ref);

}  // namespace tvest
