#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ts3/tensor.hpp"

namespace ts3::tensor {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

// Diagonal AdaGrad state: one squared-gradient accumulator per parameter.
struct OptimState {
  double learning_rate = 0.01;
  double epsilon = 1e-8;
  std::map<std::string, std::vector<double>> accumulators;
};

/// One diagonal AdaGrad update on raw buffers:
///   accum += g^2;  param -= lr * g / (sqrt(accum) + eps)
void adagrad_update(std::span<double> param, std::span<const double> grad, std::span<double> accum,
                    double learning_rate, double epsilon);

/// Applies adagrad_update to every parameter using its current gradient,
/// creating accumulators on first use, then rounds to `precision`.
void adagrad_step(ParamList& params, OptimState& state, Precision precision = Precision::kF64);

void zero_grads(ParamList& params);

}  // namespace ts3::tensor
