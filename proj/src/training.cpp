#include "hivae/training.hpp"

#include <algorithm>
#include <cmath>

#include "hivae/errors.hpp"

namespace hivae {

void TrainConfig::validate() const {
  if (dim_z < 1 || dim_s < 1 || dim_y < 1) throw ConfigError("dim_z, dim_s and dim_y must be >= 1");
  if (layers < 1 || layers > 2) throw ConfigError("layers must be 1 or 2");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(tau_end > 0.0) || !(tau_end <= tau_start))
    throw ConfigError("temperatures must satisfy 0 < tau_end <= tau_start");
  if (encoder == EncoderMode::Factorized && dim_s != 1)
    throw ConfigError("the factorized encoder requires dim_s = 1");
  if (exact_kl_z && dim_s > 16) throw ConfigError("exact KL enumeration supports dim_s <= 16");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be > 0");
}

double TrainConfig::temperature(std::size_t epoch) const {
  if (epochs <= 1) return tau_start;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return tau_start + (tau_end - tau_start) * t;
}

std::string encoder_mode_name(EncoderMode mode) {
  return mode == EncoderMode::Factorized ? "factorized" : "input_dropout";
}

namespace {

void add_stack(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
               const DenseStack& stack) {
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    out.emplace_back(prefix + "." + std::to_string(l) + ".weights", stack.layers[l].weights);
    out.emplace_back(prefix + "." + std::to_string(l) + ".bias", stack.layers[l].bias);
  }
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> Model::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (encoder.factorized()) {
    for (std::size_t d = 0; d < encoder.factors.size(); ++d) {
      add_stack(out, "encoder.factor" + std::to_string(d) + ".mu", encoder.factors[d].mu);
      add_stack(out, "encoder.factor" + std::to_string(d) + ".log_var", encoder.factors[d].log_var);
    }
  } else {
    add_stack(out, "encoder.s_net", encoder.s_net);
    add_stack(out, "encoder.z_mu_net", encoder.z_mu_net);
    add_stack(out, "encoder.z_log_var_net", encoder.z_log_var_net);
  }
  out.emplace_back("decoder.prior_mu", decoder.prior_mu);
  add_stack(out, "decoder.g_net", decoder.g_net);
  for (std::size_t d = 0; d < decoder.heads.size(); ++d) {
    add_stack(out, "decoder.head" + std::to_string(d) + ".location", decoder.heads[d].location);
    if (decoder.heads[d].scale)
      add_stack(out, "decoder.head" + std::to_string(d) + ".scale", *decoder.heads[d].scale);
  }
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors())
    if (t.requires_grad()) out.push_back(t);
  return out;
}

Model init_model(const Schema& schema, const TrainConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0));
  Model model;
  model.schema = schema;
  model.config = config;
  model.encoder = config.encoder == EncoderMode::Factorized
                      ? init_factorized_encoder(schema, config.dim_z, config.dim_s, config.layers,
                                                config.hidden, rng)
                      : init_input_dropout_encoder(schema, config.dim_z, config.dim_s,
                                                   config.layers, config.hidden, rng);
  model.decoder = init_generative(schema, config.dim_z, config.dim_s, config.dim_y, config.layers,
                                  config.hidden, rng);
  model.stats = NormalizationStats::identity(schema);
  return model;
}

void check_fingerprint(const Model& model, const Schema& schema) {
  if (model.fingerprint() != schema.fingerprint())
    throw FingerprintError("model schema (D=" + std::to_string(model.schema.size()) +
                           ") does not match the dataset schema (D=" +
                           std::to_string(schema.size()) + ")");
}

Tensor kl_gaussian(const Tensor& mu, const Tensor& log_var, const Tensor& prior_mean) {
  Tensor lv = clamp(log_var, kLogVarMin, kLogVarMax);
  Tensor terms = sub(add(exp(lv), square(sub(prior_mean, mu))), lv);
  return scale(add_scalar(sum_cols(terms), -static_cast<double>(mu.cols())), 0.5);
}

Tensor kl_categorical_uniform(const Tensor& logits) {
  Tensor log_q = log_softmax_rows(logits);
  Tensor neg_entropy = sum_cols(mul(softmax_rows(logits), log_q));
  return add_scalar(neg_entropy, std::log(static_cast<double>(logits.cols())));
}

namespace {

Tensor expected_kl_z_exact(const Model& model, const RecognitionInput& input,
                           const Tensor& s_logits) {
  const std::size_t n = input.x.rows(), dim_s = model.config.dim_s;
  Tensor q = softmax_rows(s_logits);
  Tensor total = Tensor::zeros({n, 1});
  for (std::size_t l = 0; l < dim_s; ++l) {
    std::vector<double> e(n * dim_s, 0.0);
    for (std::size_t i = 0; i < n; ++i) e[i * dim_s + l] = 1.0;
    Tensor s = Tensor::from({n, dim_s}, std::move(e));
    auto params = encode(model.encoder, input, s);
    Tensor kl = kl_gaussian(params.z_mu, params.z_log_var, prior_mean(model.decoder, s));
    total = add(total, mul(slice_cols(q, l, 1), kl));
  }
  return total;
}

}  // namespace

ElboTerms elbo_batch(const Model& model, const HeterogeneousTable& table, const MissingMask& mask,
                     std::span<const std::size_t> rows, double tau, Rng& rng,
                     const NormalizationStats& stats) {
  if (rows.empty()) throw ConfigError("elbo_batch needs at least one row");
  const auto& schema = table.schema();
  const std::size_t n = rows.size();
  auto batch = encode_inputs(table, mask, stats, rows);
  auto input = make_recognition_input(batch, mask, rows);
  auto latent = sample_latent(model.encoder, input, tau, rng);
  auto decoded = decode(model.decoder, schema, latent.z, latent.s, stats);

  Tensor recon = Tensor::zeros({n, 1});
  std::vector<double> values(n), observed(n);
  for (std::size_t d = 0; d < schema.size(); ++d) {
    for (std::size_t r = 0; r < n; ++r) {
      observed[r] = mask.observed(rows[r], d) ? 1.0 : 0.0;
      values[r] = observed[r] != 0.0 ? table.at(rows[r], d) : kMissingSentinel;
    }
    recon = add(recon, column_log_likelihood(decoded[d], values, observed));
  }

  ElboTerms terms;
  terms.reconstruction = recon;
  terms.kl_z = model.config.exact_kl_z
                   ? expected_kl_z_exact(model, input, latent.params.s_logits)
                   : kl_gaussian(latent.params.z_mu, latent.params.z_log_var,
                                 prior_mean(model.decoder, latent.s));
  terms.kl_s = kl_categorical_uniform(latent.params.s_logits);
  terms.per_row = sub(sub(recon, terms.kl_z), terms.kl_s);
  terms.elbo = sum(terms.per_row);
  return terms;
}

ElboTerms elbo_batch(const Model& model, const HeterogeneousTable& table, const MissingMask& mask,
                     std::span<const std::size_t> rows, double tau, Rng& rng) {
  return elbo_batch(model, table, mask, rows, tau, rng, model.stats);
}

Model train(const HeterogeneousTable& table, const MissingMask& mask, const TrainConfig& config,
            const EpochObserver& observer) {
  config.validate();
  if (table.rows() == 0) throw DataError("cannot train on an empty table");
  validate(table, mask);

  Model model = init_model(table.schema(), config);
  auto params = model.parameters();
  AdamState adam;
  adam.config = config.adam;
  Rng rng(derive_seed(config.seed, 1));
  auto rows = all_rows(table.rows());
  const auto identity = NormalizationStats::identity(table.schema());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double tau = config.temperature(epoch);
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    double epoch_elbo = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < rows.size(); begin += config.batch_size, ++batch_index) {
      std::span<const std::size_t> batch(rows.data() + begin,
                                         std::min(config.batch_size, rows.size() - begin));
      const auto stats =
          config.normalization ? fit_normalization(table, mask, batch) : identity;
      auto terms = elbo_batch(model, table, mask, batch, tau, rng, stats);
      const double elbo = terms.elbo.item();
      auto where = [&] {
        return " at epoch " + std::to_string(epoch + 1) + ", batch " +
               std::to_string(batch_index + 1);
      };
      if (!std::isfinite(elbo)) throw NumericalError("non-finite ELBO" + where());
      backward(scale(terms.elbo, -1.0 / static_cast<double>(batch.size())));
      for (const auto& p : params)
        for (double g : p.grad())
          if (!std::isfinite(g)) throw NumericalError("non-finite gradient" + where());
      adam_step(adam, params);
      epoch_elbo += elbo;
    }
    EpochRecord record{epoch + 1, tau, epoch_elbo / static_cast<double>(table.rows())};
    model.log.push_back(record);
    if (observer) observer(record);
  }
  model.stats = config.normalization ? fit_normalization(table, mask) : identity;
  return model;
}

}  // namespace hivae
