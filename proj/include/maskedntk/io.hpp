#pragma once

#include <string>

#include "maskedntk/analytic.hpp"
#include "maskedntk/ntk.hpp"
#include "maskedntk/train.hpp"

namespace maskedntk::io {

// Shortest 17-significant-digit decimal form; round-trips doubles exactly.
std::string format_double(double v);

// Dataset CSV: header `x_1,...,x_d,y`, one row per sample.
std::string dataset_to_csv(const Dataset& data);
Dataset dataset_from_csv(const std::string& csv);

// NetworkState JSON: {"m":..., "d":..., "tau":..., "a":[...], "W":[row-major]}.
std::string network_to_json(const NetworkState& net);
NetworkState network_from_json(const std::string& text);

// Kernel CSV: row-major values, one matrix row per line.
std::string kernel_to_csv(const KernelMatrix& k);

// Trajectory CSV: `iter,clean_loss,masked_loss,max_weight_drift`.
std::string trajectory_to_csv(const Trajectory& traj);

std::string loss_breakdown_to_json(const LossBreakdown& b);
std::string gradient_decomposition_to_json(const GradientDecomposition& g);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace maskedntk::io
