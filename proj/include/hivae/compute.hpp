#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices, plus the layers, samplers and optimizer built on top of it.
//
// Every Tensor is a 2-D matrix (rows x cols); scalars are 1 x 1 and vectors
// are 1 x n. Ops that combine two tensors broadcast dimensions of size 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hivae {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

class Tensor {
 public:
  struct Node;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::size_t size() const { return shape().size(); }
  bool requires_grad() const;

  std::span<const double> values() const;
  /// Mutable view for parameter updates; never mutate a tensor mid-graph.
  std::span<double> mutable_values();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Tensor::Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
/// Intermediate gradients are reset on each call, so leaf gradients from
/// repeated calls add up.
void backward(const Tensor& loss);

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Elementwise clamp; gradient passes only strictly inside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);       // 1 x 1
Tensor sum_cols(const Tensor& a);  // rows x 1, summing across each row

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t width);
Tensor cumsum_cols(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

double softplus(double x);
double sigmoid(double x);

// --- randomness --------------------------------------------------------------

/// Seeded stream; every stochastic routine draws through one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();       // [0, 1)
  double uniform_open();  // (0, 1)
  double normal();
  double gumbel();
  std::uint64_t next_u64() { return engine_(); }
  std::size_t below(std::size_t n);  // uniform in {0..n-1}
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Derives an independent seed from a base seed and a stream label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// --- layers ------------------------------------------------------------------

enum class Activation { Identity, Relu, Softplus, Sigmoid };

struct DenseLayer {
  Tensor weights;  // in x out
  Tensor bias;     // 1 x out
  Activation activation = Activation::Identity;

  std::size_t in() const { return weights.rows(); }
  std::size_t out() const { return weights.cols(); }

  /// Uniform(+-sqrt(6/(in+out))) weights, zero bias.
  static DenseLayer init(std::size_t in, std::size_t out, Activation act, Rng& rng);
};

Tensor forward_dense(const DenseLayer& layer, const Tensor& input);

/// Sequence of dense layers applied in order.
struct DenseStack {
  std::vector<DenseLayer> layers;

  std::size_t in() const { return layers.front().in(); }
  std::size_t out() const { return layers.back().out(); }

  /// `depth` layers; hidden layers use ReLU with width `hidden`, the last
  /// layer uses `output_activation`.
  static DenseStack init(std::size_t in, std::size_t out, std::size_t depth, std::size_t hidden,
                         Activation output_activation, Rng& rng);
};

Tensor forward(const DenseStack& stack, const Tensor& input);

// --- samplers ----------------------------------------------------------------

inline constexpr double kLogVarMin = -15.0;
inline constexpr double kLogVarMax = 15.0;

/// mu + exp(clamp(log_var)/2) * eps with eps ~ N(0, I).
Tensor sample_gaussian_reparam(const Tensor& mu, const Tensor& log_var, Rng& rng);
Tensor sample_gaussian_reparam(const Tensor& mu, const Tensor& log_var, const Tensor& eps);

/// softmax((logits + g) / tau) row-wise with g ~ Gumbel(0, 1).
Tensor sample_gumbel_softmax(const Tensor& logits, double tau, Rng& rng);
Tensor sample_gumbel_softmax(const Tensor& logits, double tau, const Tensor& gumbel_noise);

// --- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update on every parameter, then zeroes the grads.
void adam_step(AdamState& state, std::span<Tensor> params);

}  // namespace hivae
