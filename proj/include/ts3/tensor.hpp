#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ts3::tensor {

// Storage precision of trainable parameters. Arithmetic always runs in
// double; kF32 rounds parameters to float after every update so that they
// survive the 32-bit checkpoint format bit-exactly.
enum class Precision { kF32, kF64 };

namespace detail {
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool grad_populated = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};
}  // namespace detail

/// Dense row-major 2-D array that records the operations producing it so
/// gradients can be propagated back to parameter leaves.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  // Trainable leaf; its grad buffer starts at zero.
  static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::string shape_string() const;

  std::span<const double> values() const { return node_->value; }
  // Direct write access, used by optimizers and checkpoint loading.
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool grad_populated() const { return node_->grad_populated; }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  // Same values, cut off from the tape.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }

 private:
  friend Tensor make_result(std::size_t, std::size_t, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>, const char*);
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Disables tape recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// a (r×c) + row (1×c) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor mean_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor row(const Tensor& a, std::size_t r);
Tensor pick(const Tensor& a, std::size_t r, std::size_t c);
// Rows of `table` selected by `ids`; backward scatters into the table.
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids);

/// Reverse-mode sweep from a 1×1 loss. Every reachable parameter leaf
/// accumulates its gradient. Throws NumericError when called twice on the
/// same loss or when a reached parameter still carries gradients from an
/// earlier backward that were never cleared with zero_grad().
void backward(const Tensor& loss);

void round_to_precision(Tensor& t, Precision p);

}  // namespace ts3::tensor
