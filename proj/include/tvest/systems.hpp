#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tvest/estimator.hpp"

namespace tvest {

// A worked example: plant, derived-output chain, growth bounds, and where
// one exists in closed form, a ready-made z-dynamics spec.
struct BuiltinBundle {
  std::string name;
  SystemModel sys;
  ObservabilityChain chain;
  BoundData bounds;
  std::optional<EstimatorSpec> reference;
};

// Known names: "ex2.5", "ex2.8", "remark2.5c", and "chain(n)" for an
// integrator chain of length 2 <= n <= 8 with the scheduled multiplier
// 1 + sin(t + d1)/2. Throws std::invalid_argument for anything else.
BuiltinBundle builtin(const std::string& name);

std::vector<std::string> builtin_names();

}  // namespace tvest
