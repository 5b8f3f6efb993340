#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "hivae/compute.hpp"
#include "hivae/generative.hpp"
#include "hivae/tabular.hpp"
#include "hivae/training.hpp"

namespace hivae {

enum class FillMethod { MapMode, Sample, MeanMode };

std::string_view fill_method_name(FillMethod method);  // "map_mode", "sample", "mean_mode"

/// How one masked cell was filled.
struct FillRecord {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
  LikelihoodParams params;  // decoded distribution (empty default for mean_mode)
  FillMethod method = FillMethod::MapMode;
};

struct ImputationResult {
  HeterogeneousTable completed;  // observed cells copied verbatim
  std::vector<FillRecord> fills;  // row-major order
};

/// Mode of the decoded likelihood at the MAP latent point (argmax s, then
/// the mean of q(z | x^o, s)). Deterministic.
ImputationResult impute_map(const Model& model, const HeterogeneousTable& table,
                            const MissingMask& mask);

/// One posterior draw of (s, z) at the final temperature, then one draw per
/// missing cell from its decoded likelihood.
ImputationResult impute_sample(const Model& model, const HeterogeneousTable& table,
                               const MissingMask& mask, Rng& rng);

/// Writes the per-cell fill records as CSV: row,column,name,method,value,params.
void write_fills(const std::filesystem::path& path, const Schema& schema,
                 const std::vector<FillRecord>& fills);

struct PredictionResult {
  std::vector<std::size_t> visible_rows;   // target label kept during training
  std::vector<std::size_t> held_out_rows;  // target label hidden and scored
  std::vector<double> truth;               // per held-out row
  std::vector<double> predictions;         // per held-out row
  double accuracy_error = 0.0;
  std::size_t majority_class = 0;  // most frequent visible label
  double baseline_error = 0.0;     // error of always predicting majority_class
};

/// Hides the target label on a random (1 - train_fraction) share of the rows,
/// trains on everything else and predicts the hidden labels by MAP imputation.
/// Exactly ceil(N * train_fraction) rows keep their label. Rows whose label is
/// already missing are neither used for training labels nor scored.
PredictionResult predict_target(const HeterogeneousTable& table, const MissingMask& mask,
                                std::size_t target_column, double train_fraction,
                                const TrainConfig& config, Rng& rng);

}  // namespace hivae
