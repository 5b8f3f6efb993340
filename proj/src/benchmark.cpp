#include "hivae/benchmark.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "hivae/errors.hpp"

namespace hivae {

MissingMask generate_mcar_mask(std::size_t rows, std::size_t cols, double fraction,
                               std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("missing fraction must lie in [0, 1)");
  MissingMask mask(rows, cols, true);
  Rng rng(seed);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t d = 0; d < cols; ++d)
      if (rng.uniform() < fraction) mask.set(n, d, false);
  return mask;
}

MissingMask generate_mcar_mask(const HeterogeneousTable& table, double fraction,
                               std::uint64_t seed) {
  return generate_mcar_mask(table.rows(), table.cols(), fraction, seed);
}

double column_range(const HeterogeneousTable& table, std::size_t col,
                    const MissingMask* truth_mask) {
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t n = 0; n < table.rows(); ++n) {
    if (truth_mask && truth_mask->missing(n, col)) continue;
    lo = std::min(lo, table.at(n, col));
    hi = std::max(hi, table.at(n, col));
  }
  return hi > lo ? hi - lo : 0.0;
}

namespace {

void check_sizes(std::span<const double> truth, std::span<const double> imputed) {
  if (truth.size() != imputed.size()) throw ShapeError("truth and imputed lengths differ");
}

}  // namespace

double nrmse(std::span<const double> truth, std::span<const double> imputed, double range) {
  check_sizes(truth, imputed);
  if (!(range > 0.0)) throw UndefinedMetricError("NRMSE is undefined for a zero-range column");
  if (truth.empty()) return 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sq += (truth[i] - imputed[i]) * (truth[i] - imputed[i]);
  return std::sqrt(sq / static_cast<double>(truth.size())) / range;
}

double accuracy_error(std::span<const double> truth, std::span<const double> imputed) {
  check_sizes(truth, imputed);
  if (truth.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += truth[i] != imputed[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

double displacement_error(std::span<const double> truth, std::span<const double> imputed,
                          std::size_t cardinality) {
  check_sizes(truth, imputed);
  if (cardinality == 0) throw ConfigError("displacement error needs R >= 1");
  if (truth.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    total += std::abs(truth[i] - imputed[i]) / static_cast<double>(cardinality);
  return total / static_cast<double>(truth.size());
}

std::string_view metric_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Categorical: return "accuracy";
    case ColumnKind::Ordinal: return "displacement";
    default: return "nrmse";
  }
}

ImputationResult mean_mode_impute(const HeterogeneousTable& table, const MissingMask& mask) {
  validate(table, mask);
  const auto& schema = table.schema();
  std::vector<double> fill(schema.size());
  for (std::size_t d = 0; d < schema.size(); ++d) {
    const auto& col = schema[d];
    std::vector<double> values;
    std::vector<std::size_t> counts(col.cardinality, 0);
    for (std::size_t n = 0; n < table.rows(); ++n) {
      if (mask.missing(n, d)) continue;
      values.push_back(table.at(n, d));
      if (is_nominal(col.kind)) ++counts[static_cast<std::size_t>(values.back())];
    }
    if (values.empty()) throw DataError("column '" + col.name + "' has no observed cells");
    if (is_nominal(col.kind)) {
      fill[d] = static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    } else {
      // Summing in sorted order makes the mean independent of row order.
      std::sort(values.begin(), values.end());
      const double mean =
          std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      fill[d] = col.kind == ColumnKind::Count ? std::floor(mean + 0.5) : mean;
    }
  }

  ImputationResult out{table, {}};
  for (std::size_t n = 0; n < table.rows(); ++n)
    for (std::size_t d = 0; d < schema.size(); ++d) {
      if (mask.observed(n, d)) continue;
      out.completed.set(n, d, fill[d]);
      FillRecord rec;
      rec.row = n;
      rec.col = d;
      rec.value = fill[d];
      rec.method = FillMethod::MeanMode;
      out.fills.push_back(std::move(rec));
    }
  return out;
}

MetricsReport score_imputation(const HeterogeneousTable& truth, const HeterogeneousTable& imputed,
                               const MissingMask& eval_mask, const MissingMask* truth_mask) {
  const auto& schema = truth.schema();
  if (imputed.schema() != schema) throw DataError("imputed table has a different schema");
  if (imputed.rows() != truth.rows() || eval_mask.rows() != truth.rows() ||
      eval_mask.cols() != truth.cols())
    throw DataError("truth, imputed table and mask shapes differ");
  if (truth_mask && (truth_mask->rows() != truth.rows() || truth_mask->cols() != truth.cols()))
    throw DataError("truth mask shape differs from the truth table");

  MetricsReport report;
  std::size_t numeric_cols = 0, nominal_cols = 0, scored_cols = 0;
  for (std::size_t d = 0; d < schema.size(); ++d) {
    const auto& col = schema[d];
    std::vector<double> t, p;
    for (std::size_t n = 0; n < truth.rows(); ++n) {
      if (truth_mask && truth_mask->missing(n, d)) continue;
      if (eval_mask.missing(n, d)) {
        t.push_back(truth.at(n, d));
        p.push_back(imputed.at(n, d));
      } else if (imputed.at(n, d) != truth.at(n, d)) {
        throw DataError("imputed table changes an observed cell", n, d);
      }
    }
    ColumnError ce{col.name, col.kind, std::string(metric_name(col.kind)), 0.0, t.size()};
    if (t.empty()) {
      report.warnings.push_back("column '" + col.name + "' has no evaluated cells");
      report.columns.push_back(std::move(ce));
      continue;
    }
    switch (col.kind) {
      case ColumnKind::Categorical: ce.error = accuracy_error(t, p); break;
      case ColumnKind::Ordinal: ce.error = displacement_error(t, p, col.cardinality); break;
      default: {
        const double range = column_range(truth, d, truth_mask);
        if (!(range > 0.0))
          throw UndefinedMetricError("column '" + col.name + "' has zero range; NRMSE is undefined");
        ce.error = nrmse(t, p, range);
      }
    }
    report.evaluated_cells += t.size();
    report.avg_err += ce.error;
    ++scored_cols;
    if (is_nominal(col.kind)) {
      report.nominal_err += ce.error;
      ++nominal_cols;
    } else {
      report.numeric_err += ce.error;
      ++numeric_cols;
    }
    report.columns.push_back(std::move(ce));
  }
  if (scored_cols > 0) report.avg_err /= static_cast<double>(scored_cols);
  if (numeric_cols > 0) report.numeric_err /= static_cast<double>(numeric_cols);
  if (nominal_cols > 0) report.nominal_err /= static_cast<double>(nominal_cols);
  if (report.evaluated_cells == 0) report.warnings.insert(report.warnings.begin(), "empty evaluation set");
  return report;
}

// --- synthetic data ----------------------------------------------------------

namespace {

constexpr std::uint64_t kSyntheticMapSeed = 0x5ca1ab1e;
constexpr std::size_t kLatentDims = 4;
using Vec4 = std::array<double, kLatentDims>;

constexpr Vec4 kComponentMeans[2] = {{1.5, -1.0, 1.0, 0.5}, {-1.5, 1.0, -1.0, -0.5}};
constexpr double kLatentStdev = 0.75;

struct SyntheticMaps {
  Vec4 real_a_lin, real_a_tanh, real_b_lin, real_b_tanh, pos, count, ord;
  std::array<Vec4, 3> cat_a, cat_b;
};

Vec4 unit_vector(Rng& rng) {
  Vec4 v;
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

const SyntheticMaps& synthetic_maps() {
  static const SyntheticMaps maps = [] {
    Rng rng(kSyntheticMapSeed);
    SyntheticMaps m;
    m.real_a_lin = unit_vector(rng);
    m.real_a_tanh = unit_vector(rng);
    m.real_b_lin = unit_vector(rng);
    m.real_b_tanh = unit_vector(rng);
    m.pos = unit_vector(rng);
    m.count = unit_vector(rng);
    m.ord = unit_vector(rng);
    for (auto& w : m.cat_a) w = unit_vector(rng);
    for (auto& w : m.cat_b) w = unit_vector(rng);
    return m;
  }();
  return maps;
}

double dot(const Vec4& a, const Vec4& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double argmax3(const std::array<Vec4, 3>& w, const Vec4& u) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < 3; ++k)
    if (dot(w[k], u) > dot(w[best], u)) best = k;
  return static_cast<double>(best);
}

}  // namespace

Schema synthetic_schema() {
  return Schema({{"real_a", ColumnKind::Real, 0},
                 {"real_b", ColumnKind::Real, 0},
                 {"pos", ColumnKind::PositiveReal, 0},
                 {"count", ColumnKind::Count, 0},
                 {"cat_a", ColumnKind::Categorical, 3},
                 {"cat_b", ColumnKind::Categorical, 3},
                 {"ord", ColumnKind::Ordinal, 4}});
}

Dataset generate_synthetic(std::size_t rows, std::uint64_t seed) {
  const auto& m = synthetic_maps();
  Dataset out{HeterogeneousTable(synthetic_schema(), rows), MissingMask(rows, 7, true)};
  Rng rng(seed);
  for (std::size_t n = 0; n < rows; ++n) {
    const auto& mean = kComponentMeans[rng.uniform() < 0.5 ? 0 : 1];
    Vec4 u;
    for (std::size_t k = 0; k < kLatentDims; ++k) u[k] = mean[k] + kLatentStdev * rng.normal();

    const double real_a = 2.0 * dot(m.real_a_lin, u) + std::tanh(dot(m.real_a_tanh, u)) + 0.2 * rng.normal();
    const double real_b = dot(m.real_b_lin, u) - 0.8 * std::tanh(2.0 * dot(m.real_b_tanh, u)) + 0.2 * rng.normal();
    const double pos = std::exp(0.5 * dot(m.pos, u) + 0.1 * rng.normal());
    std::poisson_distribution<long> poisson(softplus(dot(m.count, u) + 1.0));
    const auto count = static_cast<double>(poisson(rng.engine()));
    const double score = dot(m.ord, u);
    const double ord = score < -1.0 ? 0.0 : score < 0.0 ? 1.0 : score < 1.0 ? 2.0 : 3.0;

    const double cells[7] = {real_a, real_b, pos, count, argmax3(m.cat_a, u), argmax3(m.cat_b, u), ord};
    for (std::size_t d = 0; d < 7; ++d) out.table.set(n, d, cells[d]);
  }
  return out;
}

// --- experiment grid ---------------------------------------------------------

std::string_view method_name(Method method) {
  switch (method) {
    case Method::HivaeMap: return "hivae_map";
    case Method::HivaeSample: return "hivae_sample";
    case Method::MeanMode: return "mean_mode";
  }
  return "hivae_map";
}

std::optional<Method> parse_method(std::string_view text) {
  for (Method m : {Method::HivaeMap, Method::HivaeSample, Method::MeanMode})
    if (method_name(m) == text) return m;
  return std::nullopt;
}

std::uint64_t grid_seed(std::uint64_t master, std::size_t fraction_index, std::size_t repeat) {
  return derive_seed(derive_seed(master, fraction_index), repeat);
}

std::vector<MetricsReport> run_benchmark(const HeterogeneousTable& table,
                                         const MissingMask& base_mask,
                                         const BenchmarkConfig& config,
                                         const ReportObserver& observer) {
  if (config.methods.empty()) throw ConfigError("no benchmark methods selected");
  if (config.repeats == 0) throw ConfigError("repeats must be >= 1");
  validate(table, base_mask);
  const bool needs_model = std::any_of(config.methods.begin(), config.methods.end(),
                                       [](Method m) { return m != Method::MeanMode; });

  std::vector<MetricsReport> reports;
  for (std::size_t fi = 0; fi < config.fractions.size(); ++fi) {
    const double fraction = config.fractions[fi];
    for (std::size_t r = 0; r < config.repeats; ++r) {
      const std::uint64_t seed = grid_seed(config.seed, fi, r);
      const auto mcar = generate_mcar_mask(table, fraction, seed);
      MissingMask combined = base_mask;
      for (std::size_t n = 0; n < table.rows(); ++n)
        for (std::size_t d = 0; d < table.cols(); ++d)
          if (mcar.missing(n, d)) combined.set(n, d, false);

      std::optional<Model> model;
      if (needs_model) {
        TrainConfig tc = config.train;
        tc.seed = derive_seed(seed, 1);
        model = train(table, combined, tc);
      }
      for (Method method : config.methods) {
        ImputationResult result;
        switch (method) {
          case Method::HivaeMap: result = impute_map(*model, table, combined); break;
          case Method::HivaeSample: {
            Rng rng(derive_seed(seed, 2));
            result = impute_sample(*model, table, combined, rng);
            break;
          }
          case Method::MeanMode: result = mean_mode_impute(table, combined); break;
        }
        MetricsReport report = score_imputation(table, result.completed, mcar, &base_mask);
        report.method = std::string(method_name(method));
        report.fraction = fraction;
        report.repeat = r;
        report.seed = seed;
        if (observer) observer(report);
        reports.push_back(std::move(report));
      }
    }
  }
  return reports;
}

std::string format_reports(const std::vector<MetricsReport>& reports) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %8s %6s %10s %10s %10s\n", "method", "fraction", "repeat",
                "AvgErr", "numeric", "nominal");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-14s %8.3f %6zu %10.5f %10.5f %10.5f%s\n", r.method.c_str(),
                  r.fraction, r.repeat, r.avg_err, r.numeric_err, r.nominal_err,
                  r.warnings.empty() ? "" : "  (!)");
    out += line;
  }

  struct Acc {
    std::vector<double> avg;
  };
  std::map<std::pair<std::string, double>, Acc> groups;
  std::vector<std::pair<std::string, double>> order;
  for (const auto& r : reports) {
    auto key = std::make_pair(r.method, r.fraction);
    if (!groups.count(key)) order.push_back(key);
    groups[key].avg.push_back(r.avg_err);
  }
  out += "\nAvgErr over repeats (mean +- stdev)\n";
  for (const auto& key : order) {
    const auto& v = groups[key].avg;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    std::snprintf(line, sizeof line, "%-14s %8.3f %10.5f +- %.5f\n", key.first.c_str(), key.second,
                  mean, sd);
    out += line;
  }
  for (const auto& r : reports)
    for (const auto& w : r.warnings)
      out += "warning: " + r.method + " fraction " + std::to_string(r.fraction) + " repeat " +
             std::to_string(r.repeat) + ": " + w + "\n";
  return out;
}

std::string reports_to_json(const std::vector<MetricsReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : r.columns)
      cols.push_back({{"name", c.name},
                      {"kind", kind_name(c.kind)},
                      {"metric", c.metric},
                      {"error", c.error},
                      {"cells", c.cells}});
    arr.push_back({{"method", r.method},
                   {"fraction", r.fraction},
                   {"repeat", r.repeat},
                   {"seed", r.seed},
                   {"columns", cols},
                   {"avg_err", r.avg_err},
                   {"numeric_err", r.numeric_err},
                   {"nominal_err", r.nominal_err},
                   {"evaluated_cells", r.evaluated_cells},
                   {"warnings", r.warnings}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace hivae
