#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hivae/imputation.hpp"
#include "hivae/tabular.hpp"
#include "hivae/training.hpp"

namespace hivae {

/// Each cell is masked independently with probability `fraction`.
MissingMask generate_mcar_mask(std::size_t rows, std::size_t cols, double fraction,
                               std::uint64_t seed);
MissingMask generate_mcar_mask(const HeterogeneousTable& table, double fraction,
                               std::uint64_t seed);

// --- metrics -----------------------------------------------------------------

/// max - min over a full column (all rows, or the observed ones when a mask
/// is given).
double column_range(const HeterogeneousTable& table, std::size_t col,
                    const MissingMask* truth_mask = nullptr);

/// sqrt(mean squared error) / range. Throws UndefinedMetricError when
/// range <= 0. An empty evaluation set scores 0.
double nrmse(std::span<const double> truth, std::span<const double> imputed, double range);
/// Fraction of mismatches; 0 on an empty set.
double accuracy_error(std::span<const double> truth, std::span<const double> imputed);
/// mean |x - x^| / R over 0-indexed classes; 0 on an empty set.
double displacement_error(std::span<const double> truth, std::span<const double> imputed,
                          std::size_t cardinality);

std::string_view metric_name(ColumnKind kind);  // "nrmse", "accuracy", "displacement"

/// Column mean (Count: rounded half-up) or modal class (ties to the lowest
/// index) of the observed cells. Throws DataError on a fully missing column.
ImputationResult mean_mode_impute(const HeterogeneousTable& table, const MissingMask& mask);

struct ColumnError {
  std::string name;
  ColumnKind kind = ColumnKind::Real;
  std::string metric;
  double error = 0.0;
  std::size_t cells = 0;  // evaluated cells; 0 = excluded from the averages
};

struct MetricsReport {
  std::string method;
  double fraction = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::vector<ColumnError> columns;
  double avg_err = 0.0;      // mean over evaluated columns
  double numeric_err = 0.0;  // mean over evaluated real/pos/count columns
  double nominal_err = 0.0;  // mean over evaluated categorical/ordinal columns
  std::size_t evaluated_cells = 0;
  std::vector<std::string> warnings;
};

/// Scores the cells flagged missing in `eval_mask` (and observed in
/// `truth_mask`, when given). Throws DataError if the imputed table differs
/// from the truth on any other known cell.
MetricsReport score_imputation(const HeterogeneousTable& truth, const HeterogeneousTable& imputed,
                               const MissingMask& eval_mask,
                               const MissingMask* truth_mask = nullptr);

// --- synthetic data ----------------------------------------------------------

/// Seven correlated mixed-type columns generated from a two-component
/// Gaussian mixture in four latent dimensions:
///   real_a, real_b   linear + tanh maps plus Gaussian noise
///   pos              exp of a linear map plus noise
///   count            Poisson with rate softplus(linear map)
///   cat_a, cat_b     argmax of three linear scores (R = 3)
///   ord              linear score cut at -1, 0, 1 (R = 4)
/// The maps are fixed; `seed` only drives the latent and noise draws.
Schema synthetic_schema();
Dataset generate_synthetic(std::size_t rows, std::uint64_t seed);

// --- experiment grid ---------------------------------------------------------

enum class Method { HivaeMap, HivaeSample, MeanMode };

std::string_view method_name(Method method);  // "hivae_map", "hivae_sample", "mean_mode"
std::optional<Method> parse_method(std::string_view text);

struct BenchmarkConfig {
  TrainConfig train;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t repeats = 10;
  std::vector<Method> methods{Method::HivaeMap, Method::HivaeSample, Method::MeanMode};
  std::uint64_t seed = 0;
};

/// Seed of the MCAR mask for one grid cell; training and sampling seeds are
/// derived from it.
std::uint64_t grid_seed(std::uint64_t master, std::size_t fraction_index, std::size_t repeat);

using ReportObserver = std::function<void(const MetricsReport&)>;

/// For each fraction and repeat: draws a fresh MCAR mask on top of
/// `base_mask`, runs every method and scores the newly masked cells.
/// Reports are ordered by (fraction, repeat, method).
std::vector<MetricsReport> run_benchmark(const HeterogeneousTable& table,
                                         const MissingMask& base_mask,
                                         const BenchmarkConfig& config,
                                         const ReportObserver& observer = {});

/// Fixed-width table: one line per report plus mean and stdev of AvgErr per
/// (method, fraction).
std::string format_reports(const std::vector<MetricsReport>& reports);
std::string reports_to_json(const std::vector<MetricsReport>& reports);

}  // namespace hivae
