#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <sys/wait.h>

#include "commands.hpp"
#include "maskedntk/io.hpp"

using namespace maskedntk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_json(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("unknown config keys are rejected before any work") {
  TempDir tmp("mntk_cli_unknown");
  write_json(tmp.file("cfg.json"),
             R"({"schema_version":1,"seed":1,"n_param_sets":1,"mc_samples":1000,"typo_key":3})");
  const auto r =
      cli::run_command("moments-check", tmp.file("cfg.json"), tmp.file("out"), std::nullopt);
  CHECK(r.exit_code == 2);
  CHECK(r.message.find("typo_key") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.file("out")));
}

TEST_CASE("missing schema_version is a config error") {
  TempDir tmp("mntk_cli_schema");
  write_json(tmp.file("cfg.json"), R"({"seed":1})");
  const auto r =
      cli::run_command("moments-check", tmp.file("cfg.json"), tmp.file("out"), std::nullopt);
  CHECK(r.exit_code == 2);
}

TEST_CASE("precondition violations are config errors") {
  TempDir tmp("mntk_cli_precond");
  write_json(tmp.file("cfg.json"),
             R"({"schema_version":1,"seed":1,"n_param_sets":2,"mc_samples":1})");
  const auto r =
      cli::run_command("moments-check", tmp.file("cfg.json"), tmp.file("out"), std::nullopt);
  CHECK(r.exit_code == 2);
  CHECK_FALSE(fs::exists(tmp.file("out")));
}

TEST_CASE("moments-check passes clean and fails under a perturbed formula") {
  TempDir tmp("mntk_cli_moments");
  write_json(tmp.file("ok.json"),
             R"({"schema_version":1,"seed":5,"n_param_sets":3,"mc_samples":200000})");
  const auto ok = cli::run_command("moments-check", tmp.file("ok.json"), tmp.file("out_ok"),
                                   std::nullopt);
  CHECK(ok.exit_code == 0);
  CHECK(fs::exists(tmp.file("out_ok") + "/moments_report.json"));
  CHECK(fs::exists(tmp.file("out_ok") + "/meta.json"));

  write_json(tmp.file("bad.json"),
             R"({"schema_version":1,"seed":5,"n_param_sets":3,"mc_samples":200000,)"
             R"("formula_perturbation":1e-3})");
  const auto bad = cli::run_command("moments-check", tmp.file("bad.json"), tmp.file("out_bad"),
                                    std::nullopt);
  CHECK(bad.exit_code == 1);
  // The failing moment is named in the message.
  CHECK(bad.message.find("set") != std::string::npos);
}

TEST_CASE("activation sweep emits ordered, MC-consistent columns") {
  TempDir tmp("mntk_cli_act");
  write_json(tmp.file("cfg.json"),
             R"({"schema_version":1,"seed":3,"z_min":-2.0,"z_max":2.0,"z_steps":9,)"
             R"("kappa_grid":[0.01,0.5,2.0],"mc_samples":200000})");
  const auto r =
      cli::run_command("activation-sweep", tmp.file("cfg.json"), tmp.file("out"), std::nullopt);
  REQUIRE(r.exit_code == 0);
  const std::string csv = io::read_file(tmp.file("out") + "/activation_sweep.csv");
  CHECK(csv.rfind("z,kappa,sigma_hat,sigma_exact,mc_mean,mc_se\n", 0) == 0);

  // Parse rows and assert: mc within 4 SE of sigma_exact, larger kappa gives a
  // smaller smoothed value at fixed z > 0, and the small-kappa curve hugs ReLU.
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  struct Row {
    double z, kappa, sig_hat, sig_exact, mc, se;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    Row row;
    std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &row.z, &row.kappa, &row.sig_hat,
                &row.sig_exact, &row.mc, &row.se);
    rows.push_back(row);
  }
  REQUIRE(rows.size() == 27);
  for (const Row& row : rows) {
    CHECK(std::abs(row.mc - row.sig_exact) <= 4.0 * row.se + 1e-12);
    if (row.kappa == 0.01)
      CHECK(std::abs(row.sig_hat - std::max(0.0, row.z)) <= 0.01);
  }
  for (std::size_t i = 0; i + 2 < rows.size(); i += 3) {
    if (rows[i].z > 0.0) {
      CHECK(rows[i].sig_hat >= rows[i + 1].sig_hat - 1e-12);   // kappa 0.01 vs 0.5
      CHECK(rows[i + 1].sig_hat >= rows[i + 2].sig_hat - 1e-12);  // kappa 0.5 vs 2.0
    }
  }
}

TEST_CASE("loss and gradient decomposition commands emit bounded residuals") {
  TempDir tmp("mntk_cli_decomp");
  write_json(tmp.file("loss.json"),
             R"({"schema_version":1,"seed":7,"n":4,"d":3,"m":5,"tau":0.7,)"
             R"("kappa_grid":[0.05,0.3]})");
  const auto lr = cli::run_command("loss-decomposition", tmp.file("loss.json"),
                                   tmp.file("out_loss"), std::nullopt);
  REQUIRE(lr.exit_code == 0);
  const auto loss_json =
      nlohmann::json::parse(io::read_file(tmp.file("out_loss") + "/loss_decomposition.json"));
  for (const auto& entry : loss_json) {
    const auto& b = entry.at("breakdown");
    CHECK(std::abs(b.at("residual").get<double>()) <= b.at("residual_bound").get<double>());
    CHECK(b.contains("exact"));
    CHECK(b.contains("t1_smoothed"));
    CHECK(b.contains("t2_regularizer"));
  }

  write_json(tmp.file("grad.json"),
             R"({"schema_version":1,"seed":7,"n":5,"d":4,"m":5,"weight_std":0.3,)"
             R"("target_std":0.4,"kappa_grid":[0.001,0.01,0.1],"row":1})");
  const auto gr = cli::run_command("gradient-decomposition", tmp.file("grad.json"),
                                   tmp.file("out_grad"), std::nullopt);
  REQUIRE(gr.exit_code == 0);
  const std::string csv = io::read_file(tmp.file("out_grad") + "/gradient_decomposition.csv");
  CHECK(csv.rfind("kappa,clean_norm,t3_norm,exact_norm,residual_norm,residual_bound\n", 0) == 0);

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::array<double, 6>> rows;
  while (std::getline(in, line)) {
    std::array<double, 6> row{};
    std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &row[0], &row[1], &row[2], &row[3],
                &row[4], &row[5]);
    rows.push_back(row);
  }
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) CHECK(row[4] <= row[5]);
  // t3 ~ kappa^2: the ratio t3/kappa^2 is constant within 1%.
  const double r0 = rows[0][2] / (rows[0][0] * rows[0][0]);
  const double r1 = rows[1][2] / (rows[1][0] * rows[1][0]);
  const double r2 = rows[2][2] / (rows[2][0] * rows[2][0]);
  CHECK(r1 == doctest::Approx(r0).epsilon(0.01));
  CHECK(r2 == doctest::Approx(r0).epsilon(0.01));
}

TEST_CASE("reruns are byte-identical") {
  TempDir tmp("mntk_cli_repro");
  write_json(tmp.file("cfg.json"),
             R"({"schema_version":1,"seed":11,"n":6,"d":4,"m":6,"tau":0.6,"eta":0.05,)"
             R"("iters":30,"record_every":5,"kappa_grid":[0.0,0.3]})");
  const auto r1 =
      cli::run_command("train-sweep", tmp.file("cfg.json"), tmp.file("out1"), std::nullopt);
  const auto r2 =
      cli::run_command("train-sweep", tmp.file("cfg.json"), tmp.file("out2"), std::nullopt);
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  for (const char* name : {"/trajectory_kappa_0.csv", "/trajectory_kappa_0.3.csv",
                           "/train_summary.json"}) {
    CHECK(io::read_file(tmp.file("out1") + name) == io::read_file(tmp.file("out2") + name));
  }
}

TEST_CASE("ntk-report produces a positive-definite kernel") {
  TempDir tmp("mntk_cli_ntk");
  write_json(tmp.file("cfg.json"),
             R"({"schema_version":1,"seed":13,"n":10,"d":5,"m_grid":[50,200]})");
  const auto r =
      cli::run_command("ntk-report", tmp.file("cfg.json"), tmp.file("out"), std::nullopt);
  REQUIRE(r.exit_code == 0);
  const auto rep = nlohmann::json::parse(io::read_file(tmp.file("out") + "/ntk_report.json"));
  CHECK(rep.at("lambda0").get<double>() > 0.0);
  CHECK(rep.at("positive_definite").get<bool>());
}

TEST_CASE("seed override changes outputs") {
  TempDir tmp("mntk_cli_seedflag");
  write_json(tmp.file("cfg.json"),
             R"({"schema_version":1,"seed":13,"n":10,"d":5,"m_grid":[50]})");
  const auto a = cli::run_command("ntk-report", tmp.file("cfg.json"), tmp.file("o1"), 99);
  const auto b = cli::run_command("ntk-report", tmp.file("cfg.json"), tmp.file("o2"), 13);
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  CHECK(io::read_file(tmp.file("o1") + "/h_infinity.csv") !=
        io::read_file(tmp.file("o2") + "/h_infinity.csv"));
}

TEST_CASE("dataset CSV and network JSON round-trip") {
  const Dataset data = make_synthetic_dataset(7, 3, 900);
  const Dataset back = io::dataset_from_csv(io::dataset_to_csv(data));
  CHECK(back.inputs.data == data.inputs.data);
  CHECK(back.targets == data.targets);

  const NetworkState net = init_network(4, 3, 0.7, 901, 902);
  const NetworkState nback = io::network_from_json(io::network_to_json(net));
  CHECK(nback.W.data == net.W.data);
  CHECK(nback.signs == net.signs);
  CHECK(nback.tau == net.tau);
}

TEST_CASE("binary end-to-end exit codes") {
#ifdef MASKED_NTK_BIN
  TempDir tmp("mntk_cli_binary");
  write_json(tmp.file("cfg.json"),
             R"({"schema_version":1,"seed":2,"n_param_sets":1,"mc_samples":50000})");
  const std::string base = std::string(MASKED_NTK_BIN) + " moments-check --config " +
                           tmp.file("cfg.json") + " --out " + tmp.file("out");
  const int ok = std::system((base + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(ok) == 0);

  write_json(tmp.file("bad.json"), R"({"schema_version":1,"oops":1})");
  const std::string badcmd = std::string(MASKED_NTK_BIN) + " moments-check --config " +
                             tmp.file("bad.json") + " --out " + tmp.file("out2");
  const int bad = std::system((badcmd + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(bad) == 2);
#endif
}
