#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hivae/compute.hpp"
#include "hivae/generative.hpp"
#include "hivae/recognition.hpp"
#include "hivae/tabular.hpp"

namespace hivae {

enum class EncoderMode { InputDropout, Factorized };

struct TrainConfig {
  std::size_t dim_z = 10;  // K
  std::size_t dim_s = 10;  // L
  std::size_t dim_y = 5;
  std::size_t layers = 1;  // dense layers per network: 1 or 2
  std::size_t hidden = 0;  // hidden width of 2-layer stacks; 0 = max(in, out)
  std::size_t epochs = 2000;
  std::size_t batch_size = 1000;
  double tau_start = 1.0;
  double tau_end = 1e-3;
  std::uint64_t seed = 0;
  EncoderMode encoder = EncoderMode::InputDropout;
  bool normalization = true;
  /// Sum KL_z over all L components weighted by q(s) instead of evaluating
  /// it at the sampled soft s. Debug aid, L <= 16.
  bool exact_kl_z = false;
  AdamConfig adam;

  /// Throws ConfigError on a violated invariant.
  void validate() const;
  /// Linear temperature schedule from tau_start (first epoch) to tau_end (last).
  double temperature(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double tau = 0.0;
  double elbo = 0.0;  // per-row average over the epoch's minibatches
};

/// Everything needed to impute: networks, inference-time statistics and the
/// configuration that built them. Copies share parameter storage.
struct Model {
  Schema schema;
  TrainConfig config;
  EncoderNets encoder;
  GenerativeNets decoder;
  NormalizationStats stats;  // global stats over all observed training cells
  std::vector<EpochRecord> log;

  std::uint64_t fingerprint() const { return schema.fingerprint(); }
  /// Trainable parameters in a fixed order.
  std::vector<Tensor> parameters() const;
  /// All parameter tensors (frozen ones included) with stable names.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

/// Fresh model with weights drawn from config.seed.
Model init_model(const Schema& schema, const TrainConfig& config);

/// Throws FingerprintError when the model was trained on a different schema.
void check_fingerprint(const Model& model, const Schema& schema);

struct ElboTerms {
  Tensor elbo;            // 1 x 1, summed over rows
  Tensor per_row;         // n x 1
  Tensor reconstruction;  // n x 1, observed cells only
  Tensor kl_z;            // n x 1
  Tensor kl_s;            // n x 1
};

/// KL(N(mu, diag exp(log_var)) || N(prior_mean, I)) per row (n x 1).
Tensor kl_gaussian(const Tensor& mu, const Tensor& log_var, const Tensor& prior_mean);
/// KL(softmax(logits) || uniform over L) = ln L - H per row (n x 1).
Tensor kl_categorical_uniform(const Tensor& logits);

/// Single-sample estimate of the three-term ELBO over observed cells of `rows`.
ElboTerms elbo_batch(const Model& model, const HeterogeneousTable& table, const MissingMask& mask,
                     std::span<const std::size_t> rows, double tau, Rng& rng,
                     const NormalizationStats& stats);
/// Same, normalizing with the model's stored global statistics.
ElboTerms elbo_batch(const Model& model, const HeterogeneousTable& table, const MissingMask& mask,
                     std::span<const std::size_t> rows, double tau, Rng& rng);

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Maximizes the ELBO with Adam over shuffled minibatches. Throws
/// NumericalError naming the epoch and batch when the loss or a gradient
/// stops being finite.
Model train(const HeterogeneousTable& table, const MissingMask& mask, const TrainConfig& config,
            const EpochObserver& observer = {});

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const Model& model);
Model parse_model(const std::string& text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
/// load_model plus a fingerprint check against the dataset schema.
Model load_model(const std::filesystem::path& path, const Schema& expected);

std::string encoder_mode_name(EncoderMode mode);

}  // namespace hivae
