#include "ts3/optim.hpp"

#include <cmath>

#include "ts3/error.hpp"

namespace ts3::tensor {

void adagrad_update(std::span<double> param, std::span<const double> grad, std::span<double> accum,
                    double learning_rate, double epsilon) {
  if (param.size() != grad.size() || param.size() != accum.size()) {
    throw ShapeError("adagrad buffers disagree: param " + std::to_string(param.size()) + ", grad " +
                     std::to_string(grad.size()) + ", accumulator " + std::to_string(accum.size()));
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (g == 0.0) continue;
    accum[i] += g * g;
    param[i] -= learning_rate * g / (std::sqrt(accum[i]) + epsilon);
  }
}

void adagrad_step(ParamList& params, OptimState& state, Precision precision) {
  for (auto& [name, tensor] : params) {
    auto [it, fresh] = state.accumulators.try_emplace(name, tensor.size(), 0.0);
    if (!fresh && it->second.size() != tensor.size()) {
      throw ShapeError("accumulator for " + name + " has " + std::to_string(it->second.size()) +
                       " entries, parameter has " + std::to_string(tensor.size()));
    }
    if (tensor.grad().size() != tensor.size()) continue;
    adagrad_update(tensor.mutable_values(), tensor.grad(), it->second, state.learning_rate, state.epsilon);
    round_to_precision(tensor, precision);
  }
}

void zero_grads(ParamList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace ts3::tensor
