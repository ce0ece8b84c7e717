#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maskedntk/mc.hpp"

namespace maskedntk::cli {

// Exit codes: 0 all checks pass, 1 check failure, 2 config error.
struct CommandResult {
  int exit_code = 0;
  std::string message;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MomentCheck {
  std::string name;
  double closed_form = 0.0;
  double mc_mean = 0.0;
  double mc_se = 0.0;
  double deviation_se = 0.0;  // |closed_form - mc_mean| / se
  bool pass = false;
};

// Randomized closed-form-vs-oracle suite over the scalar and vector moments.
// `perturbation` is a testing hook added to every closed-form value before
// comparison, so the harness's sensitivity is itself checkable.
std::vector<MomentCheck> run_moment_suite(std::uint64_t seed, std::size_t n_param_sets,
                                          std::uint64_t mc_samples, double perturbation);

CommandResult run_command(const std::string& command, const std::string& config_path,
                          const std::string& out_dir, std::optional<std::uint64_t> seed_override);

}  // namespace maskedntk::cli
