#include <cmath>
#include <limits>

#include "hivae/compute.hpp"
#include "hivae/errors.hpp"

namespace hivae {

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::uniform_open() {
  double u = 0.0;
  while (u == 0.0) u = uniform();
  return u;
}

double Rng::normal() { return normal_(engine_); }

double Rng::gumbel() { return -std::log(-std::log(uniform_open())); }

std::size_t Rng::below(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

DenseLayer DenseLayer::init(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& x : w) x = (2.0 * rng.uniform() - 1.0) * limit;
  return {Tensor::from({in, out}, std::move(w), true), Tensor::zeros({1, out}, true), act};
}

Tensor forward_dense(const DenseLayer& layer, const Tensor& input) {
  if (input.cols() != layer.in())
    throw ShapeError("dense layer expects " + std::to_string(layer.in()) + " inputs, got " +
                     to_string(input.shape()));
  Tensor pre = add(matmul(input, layer.weights), layer.bias);
  switch (layer.activation) {
    case Activation::Identity: return pre;
    case Activation::Relu: return relu(pre);
    case Activation::Softplus: return softplus(pre);
    case Activation::Sigmoid: return sigmoid(pre);
  }
  return pre;
}

DenseStack DenseStack::init(std::size_t in, std::size_t out, std::size_t depth, std::size_t hidden,
                            Activation output_activation, Rng& rng) {
  if (depth == 0) throw ConfigError("dense stack needs at least one layer");
  DenseStack stack;
  std::size_t width = in;
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    stack.layers.push_back(DenseLayer::init(width, hidden, Activation::Relu, rng));
    width = hidden;
  }
  stack.layers.push_back(DenseLayer::init(width, out, output_activation, rng));
  return stack;
}

Tensor forward(const DenseStack& stack, const Tensor& input) {
  Tensor h = input;
  for (const auto& layer : stack.layers) h = forward_dense(layer, h);
  return h;
}

Tensor sample_gaussian_reparam(const Tensor& mu, const Tensor& log_var, Rng& rng) {
  std::vector<double> eps(mu.size());
  for (auto& e : eps) e = rng.normal();
  return sample_gaussian_reparam(mu, log_var, Tensor::from(mu.shape(), std::move(eps)));
}

Tensor sample_gaussian_reparam(const Tensor& mu, const Tensor& log_var, const Tensor& eps) {
  if (!(mu.shape() == log_var.shape()) || !(mu.shape() == eps.shape()))
    throw ShapeError("gaussian reparameterization: mu/log_var/eps shapes differ");
  Tensor stddev = exp(scale(clamp(log_var, kLogVarMin, kLogVarMax), 0.5));
  return add(mu, mul(stddev, eps));
}

Tensor sample_gumbel_softmax(const Tensor& logits, double tau, Rng& rng) {
  std::vector<double> g(logits.size());
  for (auto& x : g) x = rng.gumbel();
  return sample_gumbel_softmax(logits, tau, Tensor::from(logits.shape(), std::move(g)));
}

Tensor sample_gumbel_softmax(const Tensor& logits, double tau, const Tensor& gumbel_noise) {
  if (!(tau > 0.0)) throw ConfigError("Gumbel-softmax temperature must be > 0");
  return softmax_rows(scale(add(logits, gumbel_noise), 1.0 / tau));
}

void adam_step(AdamState& state, std::span<Tensor> params) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: parameter list changed between steps");
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].mutable_values();
    auto grad = params[k].mutable_grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != value.size()) throw ShapeError("adam_step: parameter shape changed");
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      value[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
      grad[i] = 0.0;
    }
  }
}

}  // namespace hivae
