#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maskedntk/analytic.hpp"
#include "maskedntk/io.hpp"
#include "maskedntk/ntk.hpp"
#include "maskedntk/train.hpp"

namespace maskedntk::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;
constexpr double kSigmaGate = 4.0;  // pass threshold in standard errors

json parse_config(const std::string& path, const std::set<std::string>& allowed) {
  json cfg;
  try {
    cfg = json::parse(io::read_file(path));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  if (!cfg.contains("schema_version") || cfg["schema_version"] != kSchemaVersion)
    throw ConfigError("config must declare schema_version = 1");
  for (const auto& [key, _] : cfg.items()) {
    if (key != "schema_version" && !allowed.count(key))
      throw ConfigError("unknown config key: " + key);
  }
  return cfg;
}

template <typename T>
T require(const json& cfg, const std::string& key) {
  if (!cfg.contains(key)) throw ConfigError("missing config key: " + key);
  try {
    return cfg.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key has wrong type: " + key);
  }
}

template <typename T>
T get_or(const json& cfg, const std::string& key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key has wrong type: " + key);
  }
}

void write_meta(const std::string& out_dir, const std::string& command, const json& cfg,
                std::uint64_t seed) {
  json meta;
  meta["command"] = command;
  meta["schema_version"] = kSchemaVersion;
  meta["seed"] = seed;
  meta["threads"] = effective_threads();
  meta["config"] = cfg;
  io::write_file(out_dir + "/meta.json", meta.dump(2));
}

struct CheckTally {
  int failures = 0;
  std::string first_failure;

  void add(const std::string& name, bool pass) {
    if (!pass) {
      ++failures;
      if (first_failure.empty()) first_failure = name;
    }
  }
};

// ---------------------------------------------------------------------------
// moments-check

struct ScalarProblem {
  std::string name;
  double closed_form;
  std::function<double(Rng&)> draw;
};

MomentCheck compare_scalar(const std::string& name, double closed_form, const McScalar& est,
                           double perturbation) {
  MomentCheck c;
  c.name = name;
  c.closed_form = closed_form + perturbation;
  c.mc_mean = est.mean;
  c.mc_se = est.std_error;
  const double se = std::max(est.std_error, 1e-300);
  c.deviation_se = std::abs(c.closed_form - est.mean) / se;
  c.pass = c.deviation_se <= kSigmaGate;
  return c;
}

}  // namespace

std::vector<MomentCheck> run_moment_suite(std::uint64_t seed, std::size_t n_param_sets,
                                          std::uint64_t mc_samples, double perturbation) {
  std::vector<MomentCheck> checks;
  Rng pr = Rng::derive(seed, {0x9A});
  const std::size_t dim = 4;

  for (std::size_t set = 0; set < n_param_sets; ++set) {
    const std::string tag = "set" + std::to_string(set) + "/";
    const std::uint64_t set_seed = seed + 1 + set;

    // Univariate truncated moments.
    {
      const UnivariateGaussian g{pr.next_normal(), 0.3 + 1.5 * pr.next_unit()};
      const double a = pr.next_normal();
      const auto draw_first = [g, a](Rng& r) {
        const double z = g.mu + g.kappa * r.next_normal();
        return z >= a ? z : 0.0;
      };
      const auto draw_second = [g, a](Rng& r) {
        const double z = g.mu + g.kappa * r.next_normal();
        return z >= a ? z * z : 0.0;
      };
      checks.push_back(compare_scalar(tag + "truncated_first_moment",
                                      truncated_first_moment(g, a),
                                      mc_expectation(set_seed, mc_samples, draw_first),
                                      perturbation));
      checks.push_back(compare_scalar(tag + "truncated_second_moment",
                                      truncated_second_moment(g, a),
                                      mc_expectation(set_seed + 7919, mc_samples, draw_second),
                                      perturbation));
    }

    // Coupled standard moments, all five fields plus the orthant probability.
    {
      const double a = pr.next_normal();
      const double b = pr.next_normal();
      const double rho = -0.95 + 1.9 * pr.next_unit();
      const CoupledMoments m = coupled_standard_moments(a, b, rho);
      const double root = std::sqrt(1.0 - rho * rho);
      const auto sample_pair = [rho, root](Rng& r, double& z1, double& z2) {
        z1 = r.next_normal();
        z2 = rho * z1 + root * r.next_normal();
      };
      struct Field {
        const char* name;
        double value;
        std::function<double(double, double)> stat;
      };
      const Field fields[] = {
          {"coupled/e_z1", m.e_z1, [](double z1, double) { return z1; }},
          {"coupled/e_z2", m.e_z2, [](double, double z2) { return z2; }},
          {"coupled/e_z1sq", m.e_z1sq, [](double z1, double) { return z1 * z1; }},
          {"coupled/e_z2sq", m.e_z2sq, [](double, double z2) { return z2 * z2; }},
          {"coupled/e_z1z2", m.e_z1z2, [](double z1, double z2) { return z1 * z2; }},
          {"coupled/prob", m.prob, [](double, double) { return 1.0; }},
      };
      std::uint64_t sub = 0;
      for (const Field& f : fields) {
        const auto draw = [&sample_pair, a, b, stat = f.stat](Rng& r) {
          double z1, z2;
          sample_pair(r, z1, z2);
          return (z1 >= a && z2 >= b) ? stat(z1, z2) : 0.0;
        };
        checks.push_back(compare_scalar(tag + f.name, f.value,
                                        mc_expectation(set_seed + 13 * (++sub), mc_samples, draw),
                                        perturbation));
      }
    }

    // General-mean ReLU product.
    {
      BivariateMomentParams p;
      p.mu1 = pr.next_normal();
      p.mu2 = pr.next_normal();
      p.kappa1 = 0.3 + 1.2 * pr.next_unit();
      p.kappa2 = 0.3 + 1.2 * pr.next_unit();
      p.rho = -0.95 + 1.9 * pr.next_unit();
      const double root = std::sqrt(1.0 - p.rho * p.rho);
      const auto draw = [p, root](Rng& r) {
        const double g1 = r.next_normal();
        const double g2 = p.rho * g1 + root * r.next_normal();
        const double z1 = p.mu1 + p.kappa1 * g1;
        const double z2 = p.mu2 + p.kappa2 * g2;
        return (z1 >= 0.0 && z2 >= 0.0) ? z1 * z2 : 0.0;
      };
      checks.push_back(compare_scalar(tag + "relu_product_expectation",
                                      relu_product_expectation(p),
                                      mc_expectation(set_seed + 104729, mc_samples, draw),
                                      perturbation));
    }

    // Vector moments with mask-style mean vector 1.
    {
      std::vector<double> mu(dim, 1.0);
      std::vector<double> u(dim), v(dim);
      for (double& t : u) t = pr.next_normal();
      for (double& t : v) t = pr.next_normal();
      const double kappa = 0.2 + 0.9 * pr.next_unit();

      const std::vector<double> ind = expected_indicator_vector(mu, kappa, u);
      McVector ind_mc = mc_expectation_vec(
          set_seed + 224737, mc_samples, dim, [&, kappa](Rng& r, std::span<double> out) {
            std::vector<double> c(dim);
            for (std::size_t j = 0; j < dim; ++j) c[j] = 1.0 + kappa * r.next_normal();
            const bool on = dot(c, u) >= 0.0;
            for (std::size_t j = 0; j < dim; ++j) out[j] = on ? c[j] : 0.0;
          });
      for (std::size_t j = 0; j < dim; ++j) {
        MomentCheck c;
        c.name = tag + "expected_indicator_vector[" + std::to_string(j) + "]";
        c.closed_form = ind[j] + perturbation;
        c.mc_mean = ind_mc.mean[j];
        c.mc_se = ind_mc.std_error[j];
        c.deviation_se = std::abs(c.closed_form - c.mc_mean) / std::max(c.mc_se, 1e-300);
        c.pass = c.deviation_se <= kSigmaGate;
        checks.push_back(c);
      }

      const std::vector<double> act = expected_second_moment_action(mu, kappa, u, v);
      McVector act_mc = mc_expectation_vec(
          set_seed + 350377, mc_samples, dim, [&, kappa](Rng& r, std::span<double> out) {
            std::vector<double> c(dim);
            for (std::size_t j = 0; j < dim; ++j) c[j] = 1.0 + kappa * r.next_normal();
            const bool on = dot(c, u) >= 0.0 && dot(c, v) >= 0.0;
            const double cv = dot(c, v);
            for (std::size_t j = 0; j < dim; ++j) out[j] = on ? c[j] * cv : 0.0;
          });
      for (std::size_t j = 0; j < dim; ++j) {
        MomentCheck c;
        c.name = tag + "expected_second_moment_action[" + std::to_string(j) + "]";
        c.closed_form = act[j] + perturbation;
        c.mc_mean = act_mc.mean[j];
        c.mc_se = act_mc.std_error[j];
        c.deviation_se = std::abs(c.closed_form - c.mc_mean) / std::max(c.mc_se, 1e-300);
        c.pass = c.deviation_se <= kSigmaGate;
        checks.push_back(c);
      }
    }
  }
  return checks;
}

namespace {

CommandResult cmd_moments_check(const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  const auto n_sets = get_or<std::size_t>(cfg, "n_param_sets", 200);
  const auto samples = get_or<std::uint64_t>(cfg, "mc_samples", 1000000);
  const auto perturbation = get_or<double>(cfg, "formula_perturbation", 0.0);
  if (n_sets < 1) throw ConfigError("n_param_sets must be >= 1");
  if (samples < 2) throw ConfigError("mc_samples must be >= 2");

  const std::vector<MomentCheck> checks = run_moment_suite(seed, n_sets, samples, perturbation);

  fs::create_directories(out_dir);
  json report;
  report["checks"] = json::array();
  CheckTally tally;
  double worst = 0.0;
  for (const MomentCheck& c : checks) {
    tally.add(c.name, c.pass);
    worst = std::max(worst, c.deviation_se);
    report["checks"].push_back({{"name", c.name},
                                {"closed_form", c.closed_form},
                                {"mc_mean", c.mc_mean},
                                {"mc_se", c.mc_se},
                                {"deviation_se", c.deviation_se},
                                {"pass", c.pass}});
  }
  report["total"] = checks.size();
  report["failures"] = tally.failures;
  report["worst_deviation_se"] = worst;
  io::write_file(out_dir + "/moments_report.json", report.dump(2));
  write_meta(out_dir, "moments-check", cfg, seed);

  if (tally.failures > 0)
    return {1, "moment check failed: " + tally.first_failure + " (" +
                   std::to_string(tally.failures) + " of " + std::to_string(checks.size()) + ")"};
  return {0, std::to_string(checks.size()) + " moment checks passed (worst " +
                 io::format_double(worst) + " SE)"};
}

CommandResult cmd_activation_sweep(const json& cfg, const std::string& out_dir,
                                   std::uint64_t seed) {
  const auto z_min = get_or<double>(cfg, "z_min", -3.0);
  const auto z_max = get_or<double>(cfg, "z_max", 3.0);
  const auto z_steps = get_or<std::size_t>(cfg, "z_steps", 61);
  const auto kappas = require<std::vector<double>>(cfg, "kappa_grid");
  const auto mask_norm = get_or<double>(cfg, "mask_norm", 1.0);
  const auto samples = get_or<std::uint64_t>(cfg, "mc_samples", 200000);
  if (z_steps < 2) throw ConfigError("z_steps must be >= 2");
  if (!(z_max > z_min)) throw ConfigError("z_max must exceed z_min");
  if (!(mask_norm > 0.0)) throw ConfigError("mask_norm must be > 0");
  if (samples < 2) throw ConfigError("mc_samples must be >= 2");
  for (double k : kappas)
    if (!(k > 0.0)) throw ConfigError("kappa_grid entries must be > 0");

  // Build (w, x) with w = 1 so that w o x = x, 1^T x = z, ||x|| = mask_norm.
  const double zabs = std::max(std::abs(z_min), std::abs(z_max));
  std::size_t dim = 2;
  while (static_cast<double>(dim) * mask_norm * mask_norm <= zabs * zabs * 1.05) dim += 2;
  dim = std::max<std::size_t>(dim, 16);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "z,kappa,sigma_hat,sigma_exact,mc_mean,mc_se\n";
  const std::vector<double> w(dim, 1.0);
  std::uint64_t row = 0;
  for (std::size_t t = 0; t < z_steps; ++t) {
    const double z = z_min + (z_max - z_min) * static_cast<double>(t) /
                                 static_cast<double>(z_steps - 1);
    std::vector<double> x(dim, z / static_cast<double>(dim));
    const double spread =
        std::sqrt(std::max(0.0, mask_norm * mask_norm - z * z / static_cast<double>(dim)));
    for (std::size_t j = 0; j < dim; ++j)
      x[j] += (j % 2 == 0 ? spread : -spread) / std::sqrt(static_cast<double>(dim));
    for (double kappa : kappas) {
      const double sig_hat = smoothed_activation(w, x, kappa);
      const double sig_exact = exact_masked_activation_expectation(w, x, kappa);
      const McScalar mc = mc_activation_expectation(w, x, kappa, samples, seed + (++row));
      csv << io::format_double(z) << "," << io::format_double(kappa) << ","
          << io::format_double(sig_hat) << "," << io::format_double(sig_exact) << ","
          << io::format_double(mc.mean) << "," << io::format_double(mc.std_error) << "\n";
    }
  }
  io::write_file(out_dir + "/activation_sweep.csv", csv.str());
  write_meta(out_dir, "activation-sweep", cfg, seed);
  return {0, "activation sweep written (" + std::to_string(z_steps * kappas.size()) + " rows)"};
}

struct InstanceSpec {
  std::size_t n, d, m;
  double tau;
};

InstanceSpec read_instance(const json& cfg) {
  InstanceSpec s;
  s.n = require<std::size_t>(cfg, "n");
  s.d = require<std::size_t>(cfg, "d");
  s.m = require<std::size_t>(cfg, "m");
  s.tau = get_or<double>(cfg, "tau", 0.5);
  if (s.n < 1 || s.d < 1 || s.m < 1) throw ConfigError("n, d, m must be >= 1");
  if (!(s.tau > 0.0)) throw ConfigError("tau must be > 0");
  return s;
}

// Work guard for the Theta(n m^2) exact-loss path.
void check_exact_loss_budget(std::size_t n, std::size_t m) {
  const double work = static_cast<double>(m) * std::sqrt(static_cast<double>(n));
  if (work > 1e4)
    throw ConfigError("exact-form run too large: m * sqrt(n) = " + io::format_double(work) +
                      " exceeds the 1e4 budget");
}

CommandResult cmd_loss_decomposition(const json& cfg, const std::string& out_dir,
                                     std::uint64_t seed) {
  const InstanceSpec spec = read_instance(cfg);
  const auto kappas = require<std::vector<double>>(cfg, "kappa_grid");
  for (double k : kappas)
    if (!(k > 0.0)) throw ConfigError("kappa_grid entries must be > 0");
  check_exact_loss_budget(spec.n, spec.m);

  const Dataset data = make_synthetic_dataset(spec.n, spec.d, seed);
  const NetworkState net = init_network(spec.m, spec.d, spec.tau, seed + 1, seed + 2);

  fs::create_directories(out_dir);
  json out = json::array();
  bool all_within = true;
  for (double kappa : kappas) {
    const LossBreakdown b = expected_loss_decomposition(net, data, kappa);
    all_within = all_within && std::abs(b.residual) <= b.residual_bound;
    out.push_back({{"kappa", kappa},
                   {"breakdown", json::parse(io::loss_breakdown_to_json(b))}});
  }
  io::write_file(out_dir + "/loss_decomposition.json", out.dump(2));
  io::write_file(out_dir + "/dataset.csv", io::dataset_to_csv(data));
  io::write_file(out_dir + "/network.json", io::network_to_json(net));
  write_meta(out_dir, "loss-decomposition", cfg, seed);
  if (!all_within) return {1, "loss residual exceeded its bound"};
  return {0, "loss decomposition written for " + std::to_string(kappas.size()) + " kappas"};
}

CommandResult cmd_gradient_decomposition(const json& cfg, const std::string& out_dir,
                                         std::uint64_t seed) {
  const auto n = require<std::size_t>(cfg, "n");
  const auto d = require<std::size_t>(cfg, "d");
  const auto m = require<std::size_t>(cfg, "m");
  const auto weight_std = get_or<double>(cfg, "weight_std", 0.1);
  const auto target_std = get_or<double>(cfg, "target_std", 0.5);
  const auto row = get_or<std::size_t>(cfg, "row", 0);
  const auto kappas = require<std::vector<double>>(cfg, "kappa_grid");
  if (n < 1 || d < 1 || m < 1) throw ConfigError("n, d, m must be >= 1");
  if (!(weight_std > 0.0) || !(target_std > 0.0))
    throw ConfigError("weight_std and target_std must be > 0");
  if (row >= m) throw ConfigError("row out of range");
  for (double k : kappas)
    if (!(k > 0.0 && k <= 1.0)) throw ConfigError("kappa_grid entries must be in (0, 1]");

  Dataset data = make_synthetic_dataset(n, d, seed);
  Rng yr = Rng::derive(seed, {0xE1});
  double ymax = 0.0;
  for (double& y : data.targets) {
    y = target_std * yr.next_normal();
    ymax = std::max(ymax, std::abs(y));
  }
  data.target_bound = std::max(1.0, ymax);
  const NetworkState net = init_network(m, d, weight_std, seed + 1, seed + 2);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "kappa,clean_norm,t3_norm,exact_norm,residual_norm,residual_bound\n";
  bool all_within = true;
  for (double kappa : kappas) {
    const GradientDecomposition g = gradient_decomposition(net, data, kappa, row);
    const double rn = norm2(g.residual_row);
    all_within = all_within && rn <= g.residual_bound;
    csv << io::format_double(kappa) << "," << io::format_double(norm2(g.clean_grad_row)) << ","
        << io::format_double(norm2(g.t3_row)) << ","
        << io::format_double(norm2(g.exact_expected_row)) << "," << io::format_double(rn) << ","
        << io::format_double(g.residual_bound) << "\n";
  }
  io::write_file(out_dir + "/gradient_decomposition.csv", csv.str());
  write_meta(out_dir, "gradient-decomposition", cfg, seed);
  if (!all_within) return {1, "gradient residual exceeded its bound"};
  return {0, "gradient decomposition written for " + std::to_string(kappas.size()) + " kappas"};
}

CommandResult cmd_train_sweep(const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  const InstanceSpec spec = read_instance(cfg);
  const auto eta = require<double>(cfg, "eta");
  const auto iters = require<std::size_t>(cfg, "iters");
  const auto record_every = get_or<std::size_t>(cfg, "record_every", 10);
  const auto kappas = require<std::vector<double>>(cfg, "kappa_grid");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (iters < 1) throw ConfigError("iters must be >= 1");
  if (record_every < 1) throw ConfigError("record_every must be >= 1");
  for (double k : kappas)
    if (k < 0.0) throw ConfigError("kappa_grid entries must be >= 0");

  const Dataset data = make_synthetic_dataset(spec.n, spec.d, seed);
  const NetworkState net0 = init_network(spec.m, spec.d, spec.tau, seed + 1, seed + 2);

  fs::create_directories(out_dir);
  json summary;
  summary["plateaus"] = json::array();
  std::vector<double> plateaus;
  for (std::size_t t = 0; t < kappas.size(); ++t) {
    TrainConfig tc;
    tc.eta = eta;
    tc.iters = iters;
    tc.kappa = kappas[t];
    tc.base_seed = seed + 1000 + t;
    tc.record_every = record_every;
    const Trajectory traj = train(net0, data, tc);
    std::ostringstream name;
    name << out_dir << "/trajectory_kappa_" << kappas[t] << ".csv";
    io::write_file(name.str(), io::trajectory_to_csv(traj));
    const double plateau = plateau_loss(traj, 0.1);
    plateaus.push_back(plateau);
    summary["plateaus"].push_back({{"kappa", kappas[t]}, {"plateau_loss", plateau}});
  }
  bool monotone = true;
  for (std::size_t t = 1; t < plateaus.size(); ++t)
    monotone = monotone && plateaus[t] >= plateaus[t - 1];
  summary["plateau_monotone_in_kappa"] = monotone;
  io::write_file(out_dir + "/train_summary.json", summary.dump(2));
  write_meta(out_dir, "train-sweep", cfg, seed);
  return {0, std::string("train sweep complete; plateau monotone: ") +
                 (monotone ? "true" : "false")};
}

CommandResult cmd_fedavg_sweep(const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  const InstanceSpec spec = read_instance(cfg);
  const auto eta = require<double>(cfg, "eta");
  const auto rounds = require<std::size_t>(cfg, "rounds");
  const auto workers = get_or<std::size_t>(cfg, "workers", 5);
  const auto batch_size = get_or<std::size_t>(cfg, "batch_size", 0);
  const auto local_steps_grid = require<std::vector<std::size_t>>(cfg, "local_steps_grid");
  const auto kappas = require<std::vector<double>>(cfg, "kappa_grid");
  const auto n_seeds = get_or<std::size_t>(cfg, "n_seeds", 5);
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (rounds < 1 || workers < 1 || n_seeds < 1)
    throw ConfigError("rounds, workers, n_seeds must be >= 1");
  for (std::size_t ls : local_steps_grid)
    if (ls < 1) throw ConfigError("local_steps_grid entries must be >= 1");
  for (double k : kappas)
    if (k < 0.0) throw ConfigError("kappa_grid entries must be >= 0");

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "round,kappa,local_steps,clean_loss\n";
  json finals = json::array();
  std::map<std::pair<std::size_t, double>, double> final_loss;
  for (std::size_t ls : local_steps_grid) {
    for (double kappa : kappas) {
      std::vector<double> mean_by_round(rounds, 0.0);
      double final_mean = 0.0;
      for (std::size_t s = 0; s < n_seeds; ++s) {
        const Dataset data = make_synthetic_dataset(spec.n, spec.d, seed + 17 * s);
        const NetworkState net0 =
            init_network(spec.m, spec.d, spec.tau, seed + 17 * s + 1, seed + 17 * s + 2);
        FedConfig fc;
        fc.workers = workers;
        fc.local_steps = ls;
        fc.rounds = rounds;
        fc.kappa = kappa;
        fc.eta = eta;
        fc.batch_size = batch_size;
        fc.base_seed = seed + 31 * s;
        const std::vector<FedRoundRecord> recs = fedavg_simulate(net0, data, fc);
        for (std::size_t t = 0; t < rounds; ++t) mean_by_round[t] += recs[t].clean_loss;
        final_mean += recs.back().clean_loss;
      }
      for (std::size_t t = 0; t < rounds; ++t) {
        csv << t << "," << io::format_double(kappa) << "," << ls << ","
            << io::format_double(mean_by_round[t] / static_cast<double>(n_seeds)) << "\n";
      }
      final_mean /= static_cast<double>(n_seeds);
      final_loss[{ls, kappa}] = final_mean;
      finals.push_back(
          {{"local_steps", ls}, {"kappa", kappa}, {"mean_final_clean_loss", final_mean}});
    }
  }

  bool monotone = true;
  for (std::size_t ls : local_steps_grid) {
    for (std::size_t t = 1; t < kappas.size(); ++t)
      monotone = monotone && final_loss[{ls, kappas[t]}] >= final_loss[{ls, kappas[t - 1]}];
  }
  json summary;
  summary["finals"] = finals;
  summary["final_loss_monotone_in_kappa"] = monotone;
  const double kmax = *std::max_element(kappas.begin(), kappas.end());
  const auto ls_min = *std::min_element(local_steps_grid.begin(), local_steps_grid.end());
  const auto ls_max = *std::max_element(local_steps_grid.begin(), local_steps_grid.end());
  summary["max_local_steps_worse_at_max_kappa"] =
      final_loss[{ls_max, kmax}] > final_loss[{ls_min, kmax}];
  io::write_file(out_dir + "/fedavg_sweep.csv", csv.str());
  io::write_file(out_dir + "/fedavg_summary.json", summary.dump(2));
  write_meta(out_dir, "fedavg-sweep", cfg, seed);
  return {0, std::string("fedavg sweep complete; monotone in kappa: ") +
                 (monotone ? "true" : "false")};
}

CommandResult cmd_ntk_report(const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  const auto n = require<std::size_t>(cfg, "n");
  const auto d = require<std::size_t>(cfg, "d");
  const auto m_grid = get_or<std::vector<std::size_t>>(cfg, "m_grid", {100, 1000, 10000});
  if (n < 1 || d < 1) throw ConfigError("n and d must be >= 1");
  for (std::size_t m : m_grid)
    if (m < 1) throw ConfigError("m_grid entries must be >= 1");

  const Dataset data = make_synthetic_dataset(n, d, seed);
  const DatasetValidation v = validate_dataset(data);
  if (!v.ok) return {1, "generated dataset failed validation: " + v.detail};

  const KernelMatrix hinf = h_infinity(data);
  const double lambda0 = min_eigenvalue(hinf);

  fs::create_directories(out_dir);
  json report;
  report["n"] = n;
  report["d"] = d;
  report["lambda0"] = lambda0;
  report["positive_definite"] = lambda0 > 1e-8;
  report["frobenius_distance"] = json::array();
  for (std::size_t m : m_grid) {
    const NetworkState net = init_network(m, d, 1.0, seed + m, seed + 2 * m + 1);
    const KernelMatrix emp = empirical_ntk(net, data);
    report["frobenius_distance"].push_back(
        {{"m", m}, {"distance", kernel_frobenius_distance(emp, hinf)}});
  }
  io::write_file(out_dir + "/ntk_report.json", report.dump(2));
  io::write_file(out_dir + "/h_infinity.csv", io::kernel_to_csv(hinf));
  write_meta(out_dir, "ntk-report", cfg, seed);
  if (!(lambda0 > 1e-8)) return {1, "h_infinity is not positive definite"};
  return {0, "ntk report written; lambda0 = " + io::format_double(lambda0)};
}

}  // namespace

CommandResult run_command(const std::string& command, const std::string& config_path,
                          const std::string& out_dir, std::optional<std::uint64_t> seed_override) {
  static const std::map<std::string, std::set<std::string>> kAllowedKeys = {
      {"moments-check", {"seed", "n_param_sets", "mc_samples", "formula_perturbation"}},
      {"activation-sweep",
       {"seed", "z_min", "z_max", "z_steps", "kappa_grid", "mask_norm", "mc_samples"}},
      {"loss-decomposition", {"seed", "n", "d", "m", "tau", "kappa_grid"}},
      {"gradient-decomposition",
       {"seed", "n", "d", "m", "weight_std", "target_std", "row", "kappa_grid"}},
      {"train-sweep", {"seed", "n", "d", "m", "tau", "eta", "iters", "record_every", "kappa_grid"}},
      {"fedavg-sweep",
       {"seed", "n", "d", "m", "tau", "eta", "rounds", "workers", "batch_size",
        "local_steps_grid", "kappa_grid", "n_seeds"}},
      {"ntk-report", {"seed", "n", "d", "m_grid"}},
  };

  const auto it = kAllowedKeys.find(command);
  if (it == kAllowedKeys.end()) return {2, "unknown command: " + command};

  try {
    const json cfg = parse_config(config_path, it->second);
    const std::uint64_t seed =
        seed_override ? *seed_override : get_or<std::uint64_t>(cfg, "seed", 0);
    if (command == "moments-check") return cmd_moments_check(cfg, out_dir, seed);
    if (command == "activation-sweep") return cmd_activation_sweep(cfg, out_dir, seed);
    if (command == "loss-decomposition") return cmd_loss_decomposition(cfg, out_dir, seed);
    if (command == "gradient-decomposition") return cmd_gradient_decomposition(cfg, out_dir, seed);
    if (command == "train-sweep") return cmd_train_sweep(cfg, out_dir, seed);
    if (command == "fedavg-sweep") return cmd_fedavg_sweep(cfg, out_dir, seed);
    return cmd_ntk_report(cfg, out_dir, seed);
  } catch (const ConfigError& e) {
    return {2, std::string("config error: ") + e.what()};
  } catch (const std::invalid_argument& e) {
    return {2, std::string("config error: ") + e.what()};
  } catch (const std::exception& e) {
    return {1, std::string("run failure: ") + e.what()};
  }
}

}  // namespace maskedntk::cli
