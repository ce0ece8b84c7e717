#include "maskedntk/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace maskedntk::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream out;
  const std::size_t d = data.d();
  for (std::size_t j = 1; j <= d; ++j) out << "x_" << j << ",";
  out << "y\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double* x = data.inputs.row(i);
    for (std::size_t j = 0; j < d; ++j) out << format_double(x[j]) << ",";
    out << format_double(data.targets[i]) << "\n";
  }
  return out.str();
}

Dataset dataset_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset_from_csv: empty input");
  std::size_t d = 0;
  for (char c : line)
    if (c == ',') ++d;  // d features + 1 target -> d commas

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(ls, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (count != d + 1) throw std::runtime_error("dataset_from_csv: ragged row");
    ++rows;
  }
  Dataset data;
  data.inputs = Matrix(rows, d);
  data.targets.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) data.inputs.at(i, j) = values[i * (d + 1) + j];
    data.targets[i] = values[i * (d + 1) + d];
  }
  return data;
}

std::string network_to_json(const NetworkState& net) {
  nlohmann::json j;
  j["m"] = net.m;
  j["d"] = net.d;
  j["tau"] = net.tau;
  j["a"] = net.signs;
  j["W"] = net.W.data;
  return j.dump();
}

NetworkState network_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  NetworkState net;
  net.m = j.at("m").get<std::size_t>();
  net.d = j.at("d").get<std::size_t>();
  net.tau = j.at("tau").get<double>();
  net.signs = j.at("a").get<std::vector<double>>();
  net.W = Matrix(net.m, net.d);
  net.W.data = j.at("W").get<std::vector<double>>();
  if (net.signs.size() != net.m || net.W.data.size() != net.m * net.d)
    throw std::runtime_error("network_from_json: inconsistent shapes");
  return net;
}

std::string kernel_to_csv(const KernelMatrix& k) {
  std::ostringstream out;
  const std::size_t n = k.n();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j) out << ",";
      out << format_double(k.entries.at(i, j));
    }
    out << "\n";
  }
  return out.str();
}

std::string trajectory_to_csv(const Trajectory& traj) {
  std::ostringstream out;
  out << "iter,clean_loss,masked_loss,max_weight_drift\n";
  for (std::size_t t = 0; t < traj.iterations.size(); ++t) {
    out << traj.iterations[t] << "," << format_double(traj.clean_loss[t]) << ","
        << format_double(traj.masked_loss[t]) << "," << format_double(traj.weight_drift[t])
        << "\n";
  }
  return out.str();
}

std::string loss_breakdown_to_json(const LossBreakdown& b) {
  nlohmann::json j;
  j["exact"] = b.exact;
  j["t1_smoothed"] = b.t1_smoothed;
  j["t2_regularizer"] = b.t2_regularizer;
  j["residual"] = b.residual;
  j["residual_bound"] = b.residual_bound;
  return j.dump(2);
}

std::string gradient_decomposition_to_json(const GradientDecomposition& g) {
  nlohmann::json j;
  j["clean_grad_row"] = g.clean_grad_row;
  j["t3_row"] = g.t3_row;
  j["exact_expected_row"] = g.exact_expected_row;
  j["residual_row"] = g.residual_row;
  j["residual_bound"] = g.residual_bound;
  return j.dump(2);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace maskedntk::io
