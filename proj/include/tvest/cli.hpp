#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tvest {

// Exit code contract shared by every subcommand:
//   0  success / property holds
//   2  usage errors, spec parse or validation failures, unknown checks
//   3  numerical failures: blow-up, stiffness bailout, failed property checks
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

int cmd_design(const std::string& ref, std::ostream& out, std::ostream& err);

struct SimulateOptions {
  std::optional<std::uint64_t> seed;  // overrides the [sim] seed
  std::vector<double> x0;             // empty: origin start
  std::vector<double> z0;             // empty: zero start
  bool consistent = false;            // derive z0 (and w0) from x0
};

int cmd_simulate(const std::string& ref, const std::string& csv_path, const SimulateOptions& opt,
                 std::ostream& out, std::ostream& err);

struct VerifyOptions {
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

int cmd_verify(const std::string& ref, const std::string& check, const VerifyOptions& opt,
               std::ostream& out, std::ostream& err);

// args in natural order, program name excluded
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace tvest
