#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hivae/compute.hpp"
#include "hivae/tabular.hpp"

namespace hivae {

/// Per-attribute encoder q(z | x_d) of the factorized recognition model.
struct FactorNets {
  DenseStack mu;       // slot width -> K
  DenseStack log_var;  // slot width -> K
};

struct EncoderNets {
  DenseStack s_net;          // x~ -> L logits
  DenseStack z_mu_net;       // concat(x~, s) -> K
  DenseStack z_log_var_net;  // concat(x~, s) -> K
  std::vector<FactorNets> factors;  // non-empty only in factorized mode
  EncodedLayout layout;

  bool factorized() const { return !factors.empty(); }
  std::size_t dim_s() const;
  std::size_t dim_z() const;
};

EncoderNets init_input_dropout_encoder(const Schema& schema, std::size_t dim_z, std::size_t dim_s,
                                       std::size_t layers, std::size_t hidden, Rng& rng);
/// Throws ConfigError when dim_s > 1: the factorized variant has no s.
EncoderNets init_factorized_encoder(const Schema& schema, std::size_t dim_z, std::size_t dim_s,
                                    std::size_t layers, std::size_t hidden, Rng& rng);

std::vector<Tensor> parameters(const EncoderNets& nets);

/// Encoder input for a batch: zero-filled normalized slots plus the n x D
/// observed-indicator matrix (used by the factorized variant).
struct RecognitionInput {
  Tensor x;
  Tensor observed;
};

RecognitionInput make_recognition_input(const EncodedBatch& batch, const MissingMask& mask,
                                        std::span<const std::size_t> rows);

struct RecognitionParams {
  Tensor s_logits;   // n x L
  Tensor z_mu;       // n x K
  Tensor z_log_var;  // n x K
};

struct LatentSample {
  Tensor s;  // n x L simplex rows
  Tensor z;  // n x K
  double tau = 0.0;
  RecognitionParams params;  // q parameters the sample was drawn from
};

Tensor encode_s_logits(const EncoderNets& nets, const RecognitionInput& input);

/// q(z | x^o, s) parameters for a given s (soft or hard), together with the
/// s logits.
RecognitionParams encode(const EncoderNets& nets, const RecognitionInput& input, const Tensor& s);

/// Precision-weighted fusion of the per-attribute Gaussians with N(0, I).
RecognitionParams encode_factorized(const EncoderNets& nets, const RecognitionInput& input);

/// Gumbel-softmax draw of s, then the Gaussian reparameterized draw of z
/// conditioned on that soft s.
LatentSample sample_latent(const EncoderNets& nets, const RecognitionInput& input, double tau,
                           Rng& rng);

/// Hard argmax s (ties to the lowest index) and z = mean of q(z | x^o, s).
LatentSample map_latent(const EncoderNets& nets, const RecognitionInput& input);

/// Row-wise one-hot of the argmax, ties to the lowest index.
Tensor hard_one_hot(const Tensor& logits);

}  // namespace hivae
