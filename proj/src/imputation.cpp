#include "hivae/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hivae/errors.hpp"
#include "hivae/recognition.hpp"

namespace hivae {

std::string_view fill_method_name(FillMethod method) {
  switch (method) {
    case FillMethod::MapMode: return "map_mode";
    case FillMethod::Sample: return "sample";
    case FillMethod::MeanMode: return "mean_mode";
  }
  return "map_mode";
}

namespace {

// Rows are decoded in chunks to bound the size of the temporary graphs.
constexpr std::size_t kChunkRows = 512;

void check_inputs(const Model& model, const HeterogeneousTable& table, const MissingMask& mask) {
  check_fingerprint(model, table.schema());
  validate(table, mask);
}

template <class LatentFn, class ValueFn>
ImputationResult impute_with(const Model& model, const HeterogeneousTable& table,
                             const MissingMask& mask, FillMethod method, LatentFn latent_fn,
                             ValueFn value_fn) {
  check_inputs(model, table, mask);
  const auto& schema = table.schema();
  ImputationResult out{table, {}};

  std::vector<std::size_t> pending;
  for (std::size_t n = 0; n < table.rows(); ++n)
    for (std::size_t d = 0; d < schema.size(); ++d)
      if (mask.missing(n, d)) {
        pending.push_back(n);
        break;
      }

  for (std::size_t begin = 0; begin < pending.size(); begin += kChunkRows) {
    std::span<const std::size_t> rows(pending.data() + begin,
                                      std::min(kChunkRows, pending.size() - begin));
    auto batch = encode_inputs(table, mask, model.stats, rows);
    auto input = make_recognition_input(batch, mask, rows);
    LatentSample latent = latent_fn(input);
    auto decoded = decode(model.decoder, schema, latent.z, latent.s, model.stats);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t d = 0; d < schema.size(); ++d) {
        if (mask.observed(rows[r], d)) continue;
        FillRecord rec;
        rec.row = rows[r];
        rec.col = d;
        rec.params = params_at(decoded[d], r);
        rec.method = method;
        rec.value = value_fn(rec.params);
        out.completed.set(rec.row, d, rec.value);
        out.fills.push_back(std::move(rec));
      }
    }
  }
  return out;
}

}  // namespace

ImputationResult impute_map(const Model& model, const HeterogeneousTable& table,
                            const MissingMask& mask) {
  return impute_with(
      model, table, mask, FillMethod::MapMode,
      [&](const RecognitionInput& input) { return map_latent(model.encoder, input); },
      [](const LikelihoodParams& p) { return mode(p); });
}

ImputationResult impute_sample(const Model& model, const HeterogeneousTable& table,
                               const MissingMask& mask, Rng& rng) {
  const double tau = model.config.tau_end;
  return impute_with(
      model, table, mask, FillMethod::Sample,
      [&](const RecognitionInput& input) { return sample_latent(model.encoder, input, tau, rng); },
      [&](const LikelihoodParams& p) { return sample(p, rng); });
}

void write_fills(const std::filesystem::path& path, const Schema& schema,
                 const std::vector<FillRecord>& fills) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "row,column,name,method,value,params\n";
  for (const auto& f : fills) {
    out << f.row << ',' << f.col << ',' << schema[f.col].name << ',' << fill_method_name(f.method)
        << ',' << format_cell(schema[f.col], f.value) << ",\"";
    if (f.method != FillMethod::MeanMode) out << describe(f.params);
    out << "\"\n";
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

PredictionResult predict_target(const HeterogeneousTable& table, const MissingMask& mask,
                                std::size_t target_column, double train_fraction,
                                const TrainConfig& config, Rng& rng) {
  const auto& schema = table.schema();
  if (target_column >= schema.size()) throw ConfigError("target column out of range");
  if (schema[target_column].kind != ColumnKind::Categorical)
    throw ConfigError("target column '" + schema[target_column].name + "' is not categorical");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must lie strictly between 0 and 1");
  validate(table, mask);

  const std::size_t n = table.rows();
  auto order = all_rows(n);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto visible =
      static_cast<std::size_t>(std::ceil(static_cast<double>(n) * train_fraction));

  PredictionResult result;
  MissingMask train_mask = mask;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = order[i];
    if (i < visible) {
      result.visible_rows.push_back(row);
    } else {
      train_mask.set(row, target_column, false);
      if (mask.observed(row, target_column)) result.held_out_rows.push_back(row);
    }
  }
  std::sort(result.visible_rows.begin(), result.visible_rows.end());
  std::sort(result.held_out_rows.begin(), result.held_out_rows.end());

  std::vector<std::size_t> counts(schema[target_column].cardinality, 0);
  for (std::size_t row : result.visible_rows)
    if (mask.observed(row, target_column))
      ++counts[static_cast<std::size_t>(table.at(row, target_column))];
  result.majority_class = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());

  Model model = train(table, train_mask, config);
  auto imputed = impute_map(model, table, train_mask);

  std::size_t wrong = 0, baseline_wrong = 0;
  for (std::size_t row : result.held_out_rows) {
    const double truth = table.at(row, target_column);
    const double pred = imputed.completed.at(row, target_column);
    result.truth.push_back(truth);
    result.predictions.push_back(pred);
    wrong += pred != truth;
    baseline_wrong += static_cast<double>(result.majority_class) != truth;
  }
  if (!result.held_out_rows.empty()) {
    const auto m = static_cast<double>(result.held_out_rows.size());
    result.accuracy_error = static_cast<double>(wrong) / m;
    result.baseline_error = static_cast<double>(baseline_wrong) / m;
  }
  return result;
}

}  // namespace hivae
