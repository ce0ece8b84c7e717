#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "maskedntk/common.hpp"

int main(int argc, char** argv) {
  maskedntk::apply_thread_cap();

  CLI::App app{"masked-ntk: closed-form and simulation toolkit for two-layer ReLU "
               "networks trained under multiplicative Gaussian input masks"};
  app.require_subcommand(1);

  const char* names[] = {"moments-check",  "activation-sweep", "loss-decomposition",
                         "gradient-decomposition", "train-sweep", "fedavg-sweep", "ntk-report"};
  const char* descs[] = {
      "compare every closed-form moment against its Monte Carlo oracle",
      "sweep the smoothed/exact activation over z and kappa grids",
      "emit the expected-loss decomposition for a synthetic instance",
      "emit expected-gradient component norms over a kappa grid",
      "run masked full-batch GD over a kappa grid and report plateaus",
      "run the FedAvg fading-channel simulation over kappa x local-steps",
      "compute the infinite-width kernel, its minimum eigenvalue, and finite-width distances"};

  struct SubArgs {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
  };
  std::vector<SubArgs> args(std::size(names));
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(names); ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descs[i]);
    sub->add_option("--config", args[i].config, "JSON config path")->required();
    sub->add_option("--out", args[i].out, "output directory");
    sub->add_option("--seed", args[i].seed, "override the config seed");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) {
      const maskedntk::cli::CommandResult r =
          maskedntk::cli::run_command(names[i], args[i].config, args[i].out, args[i].seed);
      std::fprintf(r.exit_code == 0 ? stdout : stderr, "%s\n", r.message.c_str());
      return r.exit_code;
    }
  }
  return 2;
}
