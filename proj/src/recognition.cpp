#include "hivae/recognition.hpp"

#include <algorithm>

#include "hivae/errors.hpp"
#include "hivae/generative.hpp"

namespace hivae {

std::size_t EncoderNets::dim_s() const { return factorized() ? 1 : s_net.out(); }

std::size_t EncoderNets::dim_z() const {
  return factorized() ? factors.front().mu.out() : z_mu_net.out();
}

EncoderNets init_input_dropout_encoder(const Schema& schema, std::size_t dim_z, std::size_t dim_s,
                                       std::size_t layers, std::size_t hidden, Rng& rng) {
  EncoderNets nets;
  nets.layout = EncodedLayout(schema);
  const std::size_t w = nets.layout.width();
  nets.s_net = DenseStack::init(w, dim_s, layers, auto_hidden(w, dim_s, hidden),
                                Activation::Identity, rng);
  const std::size_t zin = w + dim_s;
  nets.z_mu_net = DenseStack::init(zin, dim_z, layers, auto_hidden(zin, dim_z, hidden),
                                   Activation::Identity, rng);
  nets.z_log_var_net = DenseStack::init(zin, dim_z, layers, auto_hidden(zin, dim_z, hidden),
                                        Activation::Identity, rng);
  return nets;
}

EncoderNets init_factorized_encoder(const Schema& schema, std::size_t dim_z, std::size_t dim_s,
                                    std::size_t layers, std::size_t hidden, Rng& rng) {
  if (dim_s != 1)
    throw ConfigError("the factorized encoder models no mixture component: dim_s must be 1");
  EncoderNets nets;
  nets.layout = EncodedLayout(schema);
  for (std::size_t d = 0; d < schema.size(); ++d) {
    const std::size_t w = nets.layout[d].width;
    FactorNets f;
    f.mu = DenseStack::init(w, dim_z, layers, auto_hidden(w, dim_z, hidden), Activation::Identity,
                            rng);
    f.log_var = DenseStack::init(w, dim_z, layers, auto_hidden(w, dim_z, hidden),
                                 Activation::Identity, rng);
    nets.factors.push_back(std::move(f));
  }
  return nets;
}

std::vector<Tensor> parameters(const EncoderNets& nets) {
  std::vector<Tensor> out;
  auto add_stack = [&out](const DenseStack& s) {
    for (const auto& l : s.layers) {
      out.push_back(l.weights);
      out.push_back(l.bias);
    }
  };
  if (nets.factorized()) {
    for (const auto& f : nets.factors) {
      add_stack(f.mu);
      add_stack(f.log_var);
    }
  } else {
    add_stack(nets.s_net);
    add_stack(nets.z_mu_net);
    add_stack(nets.z_log_var_net);
  }
  return out;
}

RecognitionInput make_recognition_input(const EncodedBatch& batch, const MissingMask& mask,
                                        std::span<const std::size_t> rows) {
  if (batch.rows != rows.size()) throw ShapeError("encoded batch does not match the row list");
  const std::size_t cols = mask.cols();
  std::vector<double> observed(rows.size() * cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t d = 0; d < cols; ++d) observed[r * cols + d] = mask.observed(rows[r], d);
  return {Tensor::from({batch.rows, batch.width}, batch.values),
          Tensor::from({rows.size(), cols}, std::move(observed))};
}

Tensor encode_s_logits(const EncoderNets& nets, const RecognitionInput& input) {
  if (nets.factorized()) return Tensor::zeros({input.x.rows(), 1});
  return forward(nets.s_net, input.x);
}

RecognitionParams encode(const EncoderNets& nets, const RecognitionInput& input, const Tensor& s) {
  if (nets.factorized()) return encode_factorized(nets, input);
  if (input.x.cols() != nets.layout.width())
    throw ShapeError("encoder expects " + std::to_string(nets.layout.width()) +
                     " input slots, got " + to_string(input.x.shape()));
  Tensor zin = concat_cols({input.x, s});
  return {encode_s_logits(nets, input), forward(nets.z_mu_net, zin),
          forward(nets.z_log_var_net, zin)};
}

RecognitionParams encode_factorized(const EncoderNets& nets, const RecognitionInput& input) {
  if (!nets.factorized()) throw ConfigError("encoder was not built in factorized mode");
  if (input.x.cols() != nets.layout.width() || input.observed.cols() != nets.factors.size())
    throw ShapeError("factorized encoder input does not match the schema layout");
  const std::size_t n = input.x.rows();
  const std::size_t k = nets.dim_z();
  Tensor precision = Tensor::filled({n, k}, 1.0);
  Tensor weighted = Tensor::zeros({n, k});
  for (std::size_t d = 0; d < nets.factors.size(); ++d) {
    const auto& f = nets.factors[d];
    Tensor slots = slice_cols(input.x, nets.layout[d].offset, nets.layout[d].width);
    Tensor mu = forward(f.mu, slots);
    Tensor lv = clamp(forward(f.log_var, slots), kLogVarMin, kLogVarMax);
    // Precision of q(z | x_d), zeroed for unobserved attributes.
    Tensor prec = mul(exp(neg(lv)), slice_cols(input.observed, d, 1));
    precision = add(precision, prec);
    weighted = add(weighted, mul(mu, prec));
  }
  return {Tensor::zeros({n, 1}), div(weighted, precision), neg(log(precision))};
}

Tensor hard_one_hot(const Tensor& logits) {
  const std::size_t n = logits.rows(), m = logits.cols();
  std::vector<double> out(n * m, 0.0);
  const auto v = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = v.subspan(i * m, m);
    out[i * m + static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())] =
        1.0;
  }
  return Tensor::from({n, m}, std::move(out));
}

LatentSample sample_latent(const EncoderNets& nets, const RecognitionInput& input, double tau,
                           Rng& rng) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
  LatentSample out;
  out.tau = tau;
  const std::size_t n = input.x.rows();
  if (nets.factorized()) {
    out.s = Tensor::filled({n, 1}, 1.0);
    out.params = encode_factorized(nets, input);
  } else {
    Tensor logits = encode_s_logits(nets, input);
    out.s = sample_gumbel_softmax(logits, tau, rng);
    Tensor zin = concat_cols({input.x, out.s});
    out.params = {logits, forward(nets.z_mu_net, zin), forward(nets.z_log_var_net, zin)};
  }
  out.z = sample_gaussian_reparam(out.params.z_mu, out.params.z_log_var, rng);
  return out;
}

LatentSample map_latent(const EncoderNets& nets, const RecognitionInput& input) {
  LatentSample out;
  Tensor logits = encode_s_logits(nets, input);
  out.s = hard_one_hot(logits);
  out.params = encode(nets, input, out.s);
  out.z = out.params.z_mu;
  return out;
}

}  // namespace hivae
