#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hivae/compute.hpp"
#include "hivae/tabular.hpp"

namespace hivae {

inline constexpr double kVarFloor = 1e-6;
inline constexpr double kRateFloor = 1e-6;
/// Smallest ordinal threshold gap; keeps thresholds strictly increasing in
/// floating point even when the gap logits saturate.
inline constexpr double kGapFloor = 1e-6;
/// Probability floor inside log for the ordinal likelihood.
inline constexpr double kProbFloor = 1e-12;

// --- likelihood parameters ---------------------------------------------------

struct NormalParams {
  double mean = 0.0;
  double var = 1.0;
};

/// Parameters of ln(x): mean and variance in the log domain.
struct LogNormalParams {
  double mean = 0.0;
  double var = 1.0;
};

struct PoissonParams {
  double rate = 1.0;
};

struct CategoricalParams {
  std::vector<double> probs;
};

struct OrdinalParams {
  std::vector<double> probs;
  double location = 0.0;
  std::vector<double> thresholds;  // R-1, strictly increasing
};

using LikelihoodParams =
    std::variant<NormalParams, LogNormalParams, PoissonParams, CategoricalParams, OrdinalParams>;

/// Exact log density (numeric kinds) or log mass (nominal kinds) of x.
/// Throws DomainError when x is outside the support.
double log_likelihood(const LikelihoodParams& params, double x);
/// Normal: mean; LogNormal: exp(m - v); Poisson: floor(rate);
/// nominal: argmax probability, ties to the lowest class.
double mode(const LikelihoodParams& params);
double sample(const LikelihoodParams& params, Rng& rng);
std::string describe(const LikelihoodParams& params);

/// Ordinal category probabilities from location h and thresholds:
/// P(x <= r) = sigmoid(theta_r - h), p(r) = P(x <= r) - P(x <= r - 1).
std::vector<double> ordinal_probs(double location, std::span<const double> thresholds);

// --- networks ----------------------------------------------------------------

/// h_d: the location part reads concat(y_d, s); scale / threshold outputs
/// read s alone.
struct HeadNets {
  DenseStack location;
  std::optional<DenseStack> scale;
};

struct GenerativeNets {
  Tensor prior_mu;  // L x K; frozen at zero when L = 1
  DenseStack g_net;  // K -> D * dim_y
  std::vector<HeadNets> heads;
  std::size_t dim_y = 0;

  std::size_t dim_s() const { return prior_mu.rows(); }
  std::size_t dim_z() const { return prior_mu.cols(); }
};

/// Width of each head's location / scale output for a column.
std::size_t location_width(const ColumnSpec& column);
std::size_t scale_width(const ColumnSpec& column);

/// Hidden width used by 2-layer stacks when none is configured.
std::size_t auto_hidden(std::size_t in, std::size_t out, std::size_t configured);

GenerativeNets init_generative(const Schema& schema, std::size_t dim_z, std::size_t dim_s,
                               std::size_t dim_y, std::size_t layers, std::size_t hidden, Rng& rng);

std::vector<Tensor> parameters(const GenerativeNets& nets);

/// s (n x L) times the prior mean table: n x K.
Tensor prior_mean(const GenerativeNets& nets, const Tensor& s);
/// log N(z | s * prior_mu, I) per row: n x 1.
Tensor prior_log_density(const GenerativeNets& nets, const Tensor& z, const Tensor& s);
double prior_log_density(const GenerativeNets& nets, std::span<const double> z,
                         std::span<const double> s);

/// Decoded likelihood parameters of one column for a batch of rows.
struct DecodedColumn {
  ColumnSpec column;
  Tensor mean;        // Real / PositiveReal: n x 1 (denormalized)
  Tensor var;         // Real / PositiveReal: n x 1 (denormalized)
  Tensor rate;        // Count: n x 1
  Tensor log_probs;   // Categorical: n x R
  Tensor probs;       // Ordinal: n x R
  Tensor location;    // Ordinal: n x 1
  Tensor thresholds;  // Ordinal: n x (R-1)
};

std::vector<DecodedColumn> decode(const GenerativeNets& nets, const Schema& schema,
                                  const Tensor& z, const Tensor& s,
                                  const NormalizationStats& stats);

/// Plain parameters of row r of a decoded column.
LikelihoodParams params_at(const DecodedColumn& decoded, std::size_t r);

/// Per-row log-likelihood (n x 1) of a column; rows with observed[r] == 0
/// contribute exactly zero and their value is never read.
Tensor column_log_likelihood(const DecodedColumn& decoded, std::span<const double> values,
                             std::span<const double> observed);

}  // namespace hivae
