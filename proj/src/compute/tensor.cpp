#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "hivae/compute.hpp"
#include "hivae/errors.hpp"

namespace hivae {

using NodePtr = std::shared_ptr<Tensor::Node>;

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
}

namespace {

NodePtr make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<Tensor::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->grad.assign(node->value.size(), 0.0);
  node->requires_grad = requires_grad;
  return node;
}

// Result of an op: records parents and the backward closure only when some
// parent needs a gradient.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                   std::function<void(Tensor::Node&)> backward_fn) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  auto node = make_node(shape, std::move(values), needs);
  if (needs) {
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void require(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                     to_string(b));
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

inline std::size_t bidx(const Shape& s, std::size_t r, std::size_t c) {
  return (s.rows == 1 ? 0 : r) * s.cols + (s.cols == 1 ? 0 : c);
}

// Elementwise binary op with broadcasting. `fwd(x, y)` computes the value;
// `dx(x, y, out)` and `dy(x, y, out)` the partial derivatives.
template <typename F, typename DX, typename DY>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F fwd, DX dx, DY dy) {
  require(a, name);
  require(b, name);
  const Shape sa = a.shape(), sb = b.shape();
  const Shape so = broadcast_shape(sa, sb, name);
  std::vector<double> out(so.size());
  const auto av = a.values(), bv = b.values();
  for (std::size_t r = 0; r < so.rows; ++r)
    for (std::size_t c = 0; c < so.cols; ++c)
      out[r * so.cols + c] = fwd(av[bidx(sa, r, c)], bv[bidx(sb, r, c)]);
  return make_result(so, std::move(out), {a.node(), b.node()},
                     [sa, sb, so, dx, dy](Tensor::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       for (std::size_t r = 0; r < so.rows; ++r)
                         for (std::size_t c = 0; c < so.cols; ++c) {
                           const std::size_t o = r * so.cols + c;
                           const double g = self.grad[o];
                           if (g == 0.0) continue;
                           const std::size_t ia = bidx(sa, r, c), ib = bidx(sb, r, c);
                           const double x = pa.value[ia], y = pb.value[ib];
                           if (pa.requires_grad) pa.grad[ia] += g * dx(x, y, self.value[o]);
                           if (pb.requires_grad) pb.grad[ib] += g * dy(x, y, self.value[o]);
                         }
                     });
}

// Elementwise unary op; `d(x, out)` is the derivative.
template <typename F, typename D>
Tensor unary(const Tensor& a, const char* name, F fwd, D d) {
  require(a, name);
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(a.shape(), std::move(out), {a.node()}, [d](Tensor::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * d(p.value[i], self.value[i]);
  });
}

}  // namespace

// --- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(shape, 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  return Tensor(make_node(shape, std::vector<double>(shape.size(), value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.size())
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  return Tensor(make_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  static const Shape empty{};
  return node_ ? node_->shape : empty;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void backward(const Tensor& loss) {
  require(loss, "backward");
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + to_string(loss.shape()));
  Tensor::Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> seen;
  std::vector<std::pair<Tensor::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Tensor::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (auto* n : order)
    if (n->backward) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a, "matmul");
  require(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  std::vector<double> out(n * m, 0.0);
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + p * m;
      double* orow = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += x * brow[j];
    }
  return make_result({n, m}, std::move(out), {a.node(), b.node()},
                     [n, k, m](Tensor::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       const double* g = self.grad.data();
                       if (pa.requires_grad)
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < m; ++j)
                               acc += g[i * m + j] * pb.value[p * m + j];
                             pa.grad[i * k + p] += acc;
                           }
                       if (pb.requires_grad)
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double x = pa.value[i * k + p];
                             if (x == 0.0) continue;
                             for (std::size_t j = 0; j < m; ++j)
                               pb.grad[p * m + j] += x * g[i * m + j];
                           }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus", [](double x) { return softplus(x); },
      [](double x, double) { return sigmoid(x); });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return sigmoid(x); },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  require(a, "sum");
  double total = 0.0;
  for (double x : a.values()) total += x;
  return make_result({1, 1}, {total}, {a.node()}, [](Tensor::Node& self) {
    auto& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor sum_cols(const Tensor& a) {
  require(a, "sum_cols");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += av[i * m + j];
  return make_result({n, 1}, std::move(out), {a.node()}, [n, m](Tensor::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) p.grad[i * m + j] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> offsets;
  std::size_t width = 0;
  std::vector<NodePtr> parents;
  for (const auto& t : parts) {
    require(t, "concat_cols");
    if (t.rows() != n) throw ShapeError("concat_cols: row count mismatch");
    offsets.push_back(width);
    width += t.cols();
    parents.push_back(t.node());
  }
  std::vector<double> out(n * width);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    const std::size_t w = parts[k].cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(v.data() + i * w, w, out.data() + i * width + offsets[k]);
  }
  return make_result({n, width}, std::move(out), std::move(parents),
                     [n, width, offsets](Tensor::Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         auto& p = *self.parents[k];
                         if (!p.requires_grad) continue;
                         const std::size_t w = p.shape.cols;
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                             p.grad[i * w + j] += self.grad[i * width + offsets[k] + j];
                       }
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t width) {
  require(a, "slice_cols");
  const std::size_t n = a.rows(), m = a.cols();
  if (begin + width > m)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + width) +
                     ") out of " + to_string(a.shape()));
  std::vector<double> out(n * width);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(av.data() + i * m + begin, width, out.data() + i * width);
  return make_result({n, width}, std::move(out), {a.node()},
                     [n, m, begin, width](Tensor::Node& self) {
                       auto& p = *self.parents[0];
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < width; ++j)
                           p.grad[i * m + begin + j] += self.grad[i * width + j];
                     });
}

Tensor cumsum_cols(const Tensor& a) {
  require(a, "cumsum_cols");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = (acc += av[i * m + j]);
  }
  return make_result({n, m}, std::move(out), {a.node()}, [n, m](Tensor::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = m; j-- > 0;) {
        acc += self.grad[i * m + j];
        p.grad[i * m + j] += acc;
      }
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  require(a, "softmax_rows");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = av.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (out[i * m + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  return make_result({n, m}, std::move(out), {a.node()}, [n, m](Tensor::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = self.value.data() + i * m;
      const double* g = self.grad.data() + i * m;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < m; ++j) p.grad[i * m + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  require(a, "log_softmax_rows");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = av.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = row[j] - lse;
  }
  return make_result({n, m}, std::move(out), {a.node()}, [n, m](Tensor::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = self.value.data() + i * m;
      const double* g = self.grad.data() + i * m;
      double gsum = 0.0;
      for (std::size_t j = 0; j < m; ++j) gsum += g[j];
      for (std::size_t j = 0; j < m; ++j) p.grad[i * m + j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

}  // namespace hivae
