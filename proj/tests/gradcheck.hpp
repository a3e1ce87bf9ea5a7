#pragma once

// Central finite-difference oracle shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "ts3/tensor.hpp"

namespace ts3::testing {

using tensor::Tensor;

// Deterministic test data, independent of the library RNG.
inline std::vector<double> random_values(std::size_t n, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

inline Tensor random_param(std::size_t rows, std::size_t cols, unsigned seed, double lo = -1.0, double hi = 1.0) {
  return Tensor::parameter(rows, cols, random_values(rows * cols, seed, lo, hi));
}

// sum_ij R_ij t_ij with fixed random R, so that no output symmetry hides a
// wrong gradient.
inline Tensor probe(const Tensor& t, unsigned seed = 99) {
  const auto r = random_values(t.size(), seed, 0.5, 1.5);
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      terms.push_back(tensor::scale(tensor::pick(t, i, j), r[i * t.cols() + j]));
    }
  }
  return terms.size() == 1 ? terms.front() : tensor::sum(tensor::concat_cols(terms));
}

struct GradReport {
  double worst = 0.0;        // max over tensors of |a - n| / max(|a|, |n|, floor)
  std::size_t checked = 0;   // coordinates perturbed
};

/// Compares backward() of `loss_fn` against central differences for every
/// tensor in `inputs`. At most `max_coords` coordinates per tensor are
/// perturbed (evenly strided) to bound the cost on large models.
inline GradReport check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                  double eps = 1e-5, std::size_t max_coords = std::numeric_limits<std::size_t>::max()) {
  for (auto& t : inputs) t.zero_grad();
  tensor::backward(loss_fn());
  GradReport report;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    const std::size_t stride = std::max<std::size_t>(1, t.size() / std::min(t.size(), max_coords));
    auto values = t.mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < t.size(); k += stride) {
      const double orig = values[k];
      double plus = 0.0, minus = 0.0;
      {
        tensor::NoGradGuard guard;
        values[k] = orig + eps;
        plus = loss_fn().item();
        values[k] = orig - eps;
        minus = loss_fn().item();
      }
      values[k] = orig;
      const double numeric = (plus - minus) / (2.0 * eps);
      diff2 += (numeric - analytic[k]) * (numeric - analytic[k]);
      a2 += analytic[k] * analytic[k];
      n2 += numeric * numeric;
      ++report.checked;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-7});
    report.worst = std::max(report.worst, std::sqrt(diff2) / denom);
    t.zero_grad();
  }
  return report;
}

}  // namespace ts3::testing
