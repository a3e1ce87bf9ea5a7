#include "ts3/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ts3/error.hpp"

namespace ts3::tensor {
namespace {

using Node = detail::Node;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

thread_local bool g_grad_enabled = true;

ConstMap view(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MutMap view(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
ConstMap value_of(const Node& n) { return view(n.value, n.rows, n.cols); }

std::vector<double>& grad_of(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}
MutMap grad_map(Node& n) { return view(grad_of(n), n.rows, n.cols); }

std::string shape(std::size_t r, std::size_t c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

Node& node(const Tensor& t) {
  if (!t.defined()) throw ShapeError("operation on an undefined tensor");
  return *t.node();
}

}  // namespace

Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward,
                   const char* op) {
  for (double v : value) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->leaf = false;
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      n->requires_grad = true;
      for (auto& t : inputs) n->parents.push_back(t.node_);
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

Tensor Tensor::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw ShapeError("constant of shape " + shape(rows, cols) + " given " + std::to_string(values.size()) +
                     " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor input");
  }
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return constant(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::parameter(std::size_t rows, std::size_t cols, std::vector<double> values) {
  Tensor t = constant(rows, cols, std::move(values));
  t.node_->requires_grad = true;
  t.node_->grad.assign(t.node_->value.size(), 0.0);
  return t;
}

std::string Tensor::shape_string() const { return shape(rows(), cols()); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
  return node_->value[0];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  node_->grad_populated = false;
}

Tensor Tensor::detach() const { return constant(rows(), cols(), node_->value); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  Node& na = node(a);
  Node& nb = node(b);
  require(na.cols == nb.rows, "matmul shape mismatch: " + shape(na.rows, na.cols) + " x " + shape(nb.rows, nb.cols));
  std::vector<double> out(na.rows * nb.cols);
  view(out, na.rows, nb.cols).noalias() = value_of(na) * value_of(nb);
  return make_result(na.rows, nb.cols, std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto g = view(self.grad, self.rows, self.cols);
    if (pa.requires_grad) grad_map(pa).noalias() += g * value_of(pb).transpose();
    if (pb.requires_grad) grad_map(pb).noalias() += value_of(pa).transpose() * g;
  }, "matmul");
}

Tensor transpose(const Tensor& a) {
  Node& na = node(a);
  std::vector<double> out(na.value.size());
  view(out, na.cols, na.rows) = value_of(na).transpose();
  return make_result(na.cols, na.rows, std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    grad_map(p) += view(self.grad, self.rows, self.cols).transpose();
  }, "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  Node& na = node(a);
  Node& nb = node(b);
  require(na.rows == nb.rows && na.cols == nb.cols,
          "add shape mismatch: " + shape(na.rows, na.cols) + " + " + shape(nb.rows, nb.cols));
  std::vector<double> out(na.value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += nb.value[i];
  return make_result(na.rows, na.cols, std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = grad_of(*p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Node& na = node(a);
  Node& nb = node(b);
  require(na.rows == nb.rows && na.cols == nb.cols,
          "sub shape mismatch: " + shape(na.rows, na.cols) + " - " + shape(nb.rows, nb.cols));
  std::vector<double> out(na.value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= nb.value[i];
  return make_result(na.rows, na.cols, std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  }, "sub");
}

Tensor add_row(const Tensor& a, const Tensor& row_vec) {
  Node& na = node(a);
  Node& nr = node(row_vec);
  require(nr.rows == 1 && nr.cols == na.cols,
          "add_row shape mismatch: " + shape(na.rows, na.cols) + " + " + shape(nr.rows, nr.cols));
  std::vector<double> out(na.value);
  for (std::size_t r = 0; r < na.rows; ++r) {
    for (std::size_t c = 0; c < na.cols; ++c) out[r * na.cols + c] += nr.value[c];
  }
  return make_result(na.rows, na.cols, std::move(out), {a, row_vec}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pr = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pr.requires_grad) {
      auto& g = grad_of(pr);
      for (std::size_t r = 0; r < self.rows; ++r) {
        for (std::size_t c = 0; c < self.cols; ++c) g[c] += self.grad[r * self.cols + c];
      }
    }
  }, "add_row");
}

Tensor scale(const Tensor& a, double s) {
  Node& na = node(a);
  std::vector<double> out(na.value);
  for (double& v : out) v *= s;
  return make_result(na.rows, na.cols, std::move(out), {a}, [s](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  }, "scale");
}

Tensor square(const Tensor& a) {
  Node& na = node(a);
  std::vector<double> out(na.value);
  for (double& v : out) v *= v;
  return make_result(na.rows, na.cols, std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * p.value[i] * self.grad[i];
  }, "square");
}

Tensor relu(const Tensor& a) {
  Node& na = node(a);
  std::vector<double> out(na.value);
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(na.rows, na.cols, std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > 0.0) g[i] += self.grad[i];
    }
  }, "relu");
}

Tensor tanh(const Tensor& a) {
  Node& na = node(a);
  std::vector<double> out(na.value);
  for (double& v : out) v = std::tanh(v);
  return make_result(na.rows, na.cols, std::move(out), {a}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += (1.0 - y * y) * self.grad[i];
    }
  }, "tanh");
}

Tensor softmax_rows(const Tensor& a) {
  Node& na = node(a);
  std::vector<double> out(na.value.size());
  for (std::size_t r = 0; r < na.rows; ++r) {
    const double* x = &na.value[r * na.cols];
    double* y = &out[r * na.cols];
    const double mx = *std::max_element(x, x + na.cols);
    double total = 0.0;
    for (std::size_t c = 0; c < na.cols; ++c) total += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < na.cols; ++c) y[c] /= total;
  }
  return make_result(na.rows, na.cols, std::move(out), {a}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t r = 0; r < self.rows; ++r) {
      const double* y = &self.value[r * self.cols];
      const double* dy = &self.grad[r * self.cols];
      double dot = 0.0;
      for (std::size_t c = 0; c < self.cols; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < self.cols; ++c) g[r * self.cols + c] += y[c] * (dy[c] - dot);
    }
  }, "softmax_rows");
}

Tensor log_softmax_rows(const Tensor& a) {
  Node& na = node(a);
  std::vector<double> out(na.value.size());
  for (std::size_t r = 0; r < na.rows; ++r) {
    const double* x = &na.value[r * na.cols];
    const double mx = *std::max_element(x, x + na.cols);
    double total = 0.0;
    for (std::size_t c = 0; c < na.cols; ++c) total += std::exp(x[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < na.cols; ++c) out[r * na.cols + c] = x[c] - lse;
  }
  return make_result(na.rows, na.cols, std::move(out), {a}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t r = 0; r < self.rows; ++r) {
      const double* y = &self.value[r * self.cols];
      const double* dy = &self.grad[r * self.cols];
      double total = 0.0;
      for (std::size_t c = 0; c < self.cols; ++c) total += dy[c];
      for (std::size_t c = 0; c < self.cols; ++c) g[r * self.cols + c] += dy[c] - std::exp(y[c]) * total;
    }
  }, "log_softmax_rows");
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  Node& na = node(a);
  Node& ng = node(gain);
  Node& nb = node(bias);
  require(ng.rows == 1 && ng.cols == na.cols && nb.rows == 1 && nb.cols == na.cols,
          "layer_norm shape mismatch: input " + shape(na.rows, na.cols) + ", gain " + shape(ng.rows, ng.cols) +
              ", bias " + shape(nb.rows, nb.cols));
  const std::size_t rows = na.rows;
  const std::size_t cols = na.cols;
  std::vector<double> normalized(na.value.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(na.value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &na.value[r * cols];
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double xh = (x[c] - mean) * inv_std[r];
      normalized[r * cols + c] = xh;
      out[r * cols + c] = xh * ng.value[c] + nb.value[c];
    }
  }
  return make_result(rows, cols, std::move(out), {a, gain, bias},
                     [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    const std::size_t cols = self.cols;
    const double n = static_cast<double>(cols);
    for (std::size_t r = 0; r < self.rows; ++r) {
      const double* dy = &self.grad[r * cols];
      const double* xh = &normalized[r * cols];
      if (pg.requires_grad) {
        auto& g = grad_of(pg);
        for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c] * xh[c];
      }
      if (pb.requires_grad) {
        auto& g = grad_of(pb);
        for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c];
      }
      if (px.requires_grad) {
        double mean_d = 0.0;
        double mean_dx = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = dy[c] * pg.value[c];
          mean_d += d;
          mean_dx += d * xh[c];
        }
        mean_d /= n;
        mean_dx /= n;
        auto& g = grad_of(px);
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = dy[c] * pg.value[c];
          g[r * cols + c] += inv_std[r] * (d - mean_d - xh[c] * mean_dx);
        }
      }
    }
  }, "layer_norm");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = node(parts[0]).rows;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(node(p).rows == rows, "concat_cols row mismatch: " + parts[0].shape_string() + " vs " + p.shape_string());
    cols += p.cols();
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Node& n = node(p);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&n.value[r * n.cols], n.cols, &out[r * cols + offset]);
    }
    offset += n.cols;
  }
  return make_result(rows, cols, std::move(out), {parts.begin(), parts.end()}, [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        auto& g = grad_of(*p);
        for (std::size_t r = 0; r < self.rows; ++r) {
          for (std::size_t c = 0; c < p->cols; ++c) g[r * p->cols + c] += self.grad[r * self.cols + offset + c];
        }
      }
      offset += p->cols;
    }
  }, "concat_cols");
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  const std::size_t cols = node(parts[0]).cols;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(node(p).cols == cols, "concat_rows column mismatch: " + parts[0].shape_string() + " vs " + p.shape_string());
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), node(p).value.begin(), node(p).value.end());
  return make_result(rows, cols, std::move(out), {parts.begin(), parts.end()}, [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        auto& g = grad_of(*p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
      }
      offset += p->value.size();
    }
  }, "concat_rows");
}

Tensor mean_rows(const Tensor& a) {
  Node& na = node(a);
  require(na.rows > 0, "mean_rows of an empty tensor");
  std::vector<double> out(na.cols, 0.0);
  for (std::size_t r = 0; r < na.rows; ++r) {
    for (std::size_t c = 0; c < na.cols; ++c) out[c] += na.value[r * na.cols + c];
  }
  for (double& v : out) v /= static_cast<double>(na.rows);
  return make_result(1, na.cols, std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    const double inv = 1.0 / static_cast<double>(p.rows);
    for (std::size_t r = 0; r < p.rows; ++r) {
      for (std::size_t c = 0; c < p.cols; ++c) g[r * p.cols + c] += self.grad[c] * inv;
    }
  }, "mean_rows");
}

Tensor sum(const Tensor& a) {
  Node& na = node(a);
  double total = 0.0;
  for (double v : na.value) total += v;
  return make_result(1, 1, {total}, {a}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (double& v : g) v += self.grad[0];
  }, "sum");
}

Tensor row(const Tensor& a, std::size_t r) {
  Node& na = node(a);
  require(r < na.rows, "row " + std::to_string(r) + " out of range for " + shape(na.rows, na.cols));
  std::vector<double> out(na.value.begin() + static_cast<std::ptrdiff_t>(r * na.cols),
                          na.value.begin() + static_cast<std::ptrdiff_t>((r + 1) * na.cols));
  return make_result(1, na.cols, std::move(out), {a}, [r](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t c = 0; c < p.cols; ++c) g[r * p.cols + c] += self.grad[c];
  }, "row");
}

Tensor pick(const Tensor& a, std::size_t r, std::size_t c) {
  Node& na = node(a);
  require(r < na.rows && c < na.cols,
          "pick (" + std::to_string(r) + "," + std::to_string(c) + ") out of range for " + shape(na.rows, na.cols));
  return make_result(1, 1, {na.value[r * na.cols + c]}, {a}, [idx = r * na.cols + c](Node& self) {
    grad_of(*self.parents[0])[idx] += self.grad[0];
  }, "pick");
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  Node& nt = node(table);
  std::vector<double> out;
  out.reserve(ids.size() * nt.cols);
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= nt.rows) {
      throw ShapeError("id " + std::to_string(id) + " out of range for table of " + std::to_string(nt.rows) + " rows");
    }
    auto first = nt.value.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(id) * nt.cols);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(nt.cols));
  }
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  return make_result(ids.size(), nt.cols, std::move(out), {table}, [kept = std::move(kept)](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const std::size_t base = static_cast<std::size_t>(kept[i]) * p.cols;
      for (std::size_t c = 0; c < p.cols; ++c) g[base + c] += self.grad[i * p.cols + c];
    }
  }, "gather_rows");
}

void backward(const Tensor& loss) {
  Node& root = node(loss);
  if (root.rows != 1 || root.cols != 1) {
    throw ShapeError("backward needs a 1x1 loss, got " + shape(root.rows, root.cols));
  }
  if (root.backward_done) throw NumericError("backward called twice on the same loss");
  if (!root.requires_grad) throw NumericError("loss does not depend on any parameter");

  // Iterative DFS producing a post-order; reversed, it is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(n);
    stack.pop_back();
  }
  for (Node* n : order) {
    if (n->leaf && n->grad_populated) {
      throw NumericError("parameter gradient already populated; call zero_grad() before another backward");
    }
  }

  root.backward_done = true;
  grad_of(root)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->leaf) {
      n->grad_populated = true;
      for (double g : n->grad) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient");
      }
      continue;
    }
    if (n->grad.empty()) continue;
    n->backward(*n);
    // Interior gradients are not needed once propagated.
    if (n != &root) std::vector<double>().swap(n->grad);
  }
}

void round_to_precision(Tensor& t, Precision p) {
  if (p != Precision::kF32) return;
  for (double& v : t.mutable_values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace ts3::tensor
