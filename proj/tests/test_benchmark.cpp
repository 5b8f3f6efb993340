#include <doctest.h>

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "hivae/benchmark.hpp"
#include "hivae/errors.hpp"
#include "support.hpp"

using namespace hivae;

namespace {

std::size_t masked_count(const MissingMask& m) {
  std::size_t k = 0;
  for (std::size_t n = 0; n < m.rows(); ++n)
    for (std::size_t d = 0; d < m.cols(); ++d) k += m.missing(n, d);
  return k;
}

BenchmarkConfig tiny_benchmark() {
  BenchmarkConfig c;
  c.train.dim_z = 2;
  c.train.dim_s = 2;
  c.train.dim_y = 2;
  c.train.epochs = 5;
  c.train.batch_size = 32;
  c.fractions = {0.2};
  c.repeats = 2;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("MCAR masks") {
  CHECK(masked_count(generate_mcar_mask(50, 4, 0.0, 1)) == 0);
  const auto m = generate_mcar_mask(1000, 100, 0.2, 7);
  CHECK(std::abs(double(masked_count(m)) / 1e5 - 0.2) <= 0.005);
  CHECK(generate_mcar_mask(30, 5, 0.3, 9) == generate_mcar_mask(30, 5, 0.3, 9));
  CHECK_FALSE(generate_mcar_mask(30, 5, 0.3, 9) == generate_mcar_mask(30, 5, 0.3, 10));
  CHECK_THROWS_AS(generate_mcar_mask(3, 3, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(generate_mcar_mask(3, 3, -0.1, 0), ConfigError);

  Rng rng(1);
  auto t = testing::random_table(testing::mixed_schema(), 12, rng);
  const auto tm = generate_mcar_mask(t, 0.5, 3);
  CHECK(tm.rows() == 12);
  CHECK(tm.cols() == 6);
  CHECK(tm == generate_mcar_mask(12, 6, 0.5, 3));
}

TEST_CASE("NRMSE") {
  const std::vector<double> a{0.0, 2.0}, b{2.0, 0.0};
  CHECK(nrmse(a, a, 2.0) == 0.0);
  CHECK(nrmse(a, b, 2.0) == doctest::Approx(1.0));
  CHECK(nrmse(std::vector<double>{1.0}, std::vector<double>{4.0}, 3.0) == doctest::Approx(1.0));
  CHECK(nrmse({}, {}, 1.0) == 0.0);
  CHECK_THROWS_AS(nrmse(a, b, 0.0), UndefinedMetricError);
  CHECK_THROWS_AS(nrmse(std::vector<double>{1.0}, a, 1.0), ShapeError);
}

TEST_CASE("accuracy error") {
  const std::vector<double> t{0, 1, 2, 1};
  CHECK(accuracy_error(t, t) == 0.0);
  CHECK(accuracy_error(t, std::vector<double>{1, 0, 0, 0}) == 1.0);
  CHECK(accuracy_error(t, std::vector<double>{0, 1, 2, 2}) == doctest::Approx(0.25));
  CHECK(accuracy_error({}, {}) == 0.0);
}

TEST_CASE("displacement error") {
  const std::vector<double> t{0, 1, 2, 3};
  CHECK(displacement_error(t, t, 5) == 0.0);
  CHECK(displacement_error(t, std::vector<double>{1, 2, 3, 4}, 5) == doctest::Approx(0.2));
  CHECK(displacement_error(std::vector<double>{1, 3}, std::vector<double>{1, 1}, 4) ==
        doctest::Approx(0.25));
  CHECK(displacement_error({}, {}, 3) == 0.0);
}

TEST_CASE("metric names follow the column kind") {
  CHECK(metric_name(ColumnKind::Real) == "nrmse");
  CHECK(metric_name(ColumnKind::PositiveReal) == "nrmse");
  CHECK(metric_name(ColumnKind::Count) == "nrmse");
  CHECK(metric_name(ColumnKind::Categorical) == "accuracy");
  CHECK(metric_name(ColumnKind::Ordinal) == "displacement");
}

TEST_CASE("mean and mode imputation") {
  Schema schema({{"r", ColumnKind::Real, 0},
                 {"k", ColumnKind::Categorical, 2},
                 {"c", ColumnKind::Count, 0},
                 {"t", ColumnKind::Categorical, 3}});
  HeterogeneousTable t(schema, 4);
  const double rows[4][4] = {{1, 0, 1, 2}, {3, 0, 2, 1}, {0, 1, 0, 1}, {0, 0, 0, 2}};
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t d = 0; d < 4; ++d) t.set(n, d, rows[n][d]);
  MissingMask m(4, 4);
  m.set(2, 0, false);
  m.set(3, 0, false);
  m.set(3, 1, false);
  m.set(2, 2, false);
  m.set(3, 2, false);
  m.set(0, 3, false);
  m.set(3, 3, false);  // observed {1, 1}
  auto out = mean_mode_impute(t, m);
  CHECK(out.completed.at(2, 0) == 2.0);
  CHECK(out.completed.at(3, 1) == 0.0);
  CHECK(out.completed.at(2, 2) == 2.0);  // 1.5 rounds up
  CHECK(out.completed.at(0, 3) == 1.0);
  CHECK(out.fills.size() == 7);
  for (const auto& f : out.fills) CHECK(f.method == FillMethod::MeanMode);

  SUBCASE("ties go to the lowest class") {
    m.set(2, 1, false);  // observed {0, 0, ...}: rows 0, 1 are 0
    m.set(0, 1, false);  // observed {0 (row 1), 1 (row 2)} minus row 2 -> {0}
    auto o = mean_mode_impute(t, m);
    CHECK(o.completed.at(0, 1) == 0.0);
    MissingMask tie(4, 4);
    tie.set(0, 1, false);
    tie.set(3, 1, false);  // observed {0, 1}
    CHECK(mean_mode_impute(t, tie).completed.at(0, 1) == 0.0);
  }
  SUBCASE("a fully missing column is an error") {
    for (std::size_t n = 0; n < 4; ++n) m.set(n, 1, false);
    CHECK_THROWS_AS(mean_mode_impute(t, m), DataError);
  }
}

TEST_CASE("mean and mode imputation ignores row order") {
  const auto schema = testing::mixed_schema();
  Rng rng(2);
  auto t = testing::random_table(schema, 40, rng);
  auto m = testing::random_mask(40, schema.size(), 0.3, rng);
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  HeterogeneousTable pt(schema, 40);
  MissingMask pm(40, schema.size());
  for (std::size_t n = 0; n < 40; ++n)
    for (std::size_t d = 0; d < schema.size(); ++d) {
      pt.set(n, d, t.at(perm[n], d));
      pm.set(n, d, m.observed(perm[n], d));
    }
  auto a = mean_mode_impute(t, m).completed;
  auto b = mean_mode_impute(pt, pm).completed;
  for (std::size_t n = 0; n < 40; ++n)
    for (std::size_t d = 0; d < schema.size(); ++d) CHECK(b.at(n, d) == a.at(perm[n], d));
}

TEST_CASE("scoring covers only the artificially masked cells") {
  Schema schema({{"x", ColumnKind::Real, 0},
                 {"k", ColumnKind::Categorical, 3},
                 {"o", ColumnKind::Ordinal, 4}});
  HeterogeneousTable truth(schema, 4);
  const double rows[4][3] = {{0, 0, 0}, {2, 1, 1}, {4, 2, 3}, {1, 1, 2}};
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t d = 0; d < 3; ++d) truth.set(n, d, rows[n][d]);
  MissingMask eval(4, 3);
  eval.set(0, 0, false);
  eval.set(1, 0, false);
  eval.set(1, 1, false);
  eval.set(2, 2, false);
  auto imputed = truth;
  imputed.set(0, 0, 4.0);   // error 4, range 4
  imputed.set(1, 0, 2.0);   // exact
  imputed.set(1, 1, 0.0);   // wrong class
  imputed.set(2, 2, 1.0);   // off by 2 of R = 4

  auto r = score_imputation(truth, imputed, eval);
  REQUIRE(r.columns.size() == 3);
  CHECK(r.columns[0].metric == "nrmse");
  CHECK(r.columns[0].error == doctest::Approx(std::sqrt(8.0) / 4.0));
  CHECK(r.columns[1].error == 1.0);
  CHECK(r.columns[2].error == doctest::Approx(0.5));
  CHECK(r.avg_err == doctest::Approx((std::sqrt(8.0) / 4.0 + 1.0 + 0.5) / 3.0));
  CHECK(r.numeric_err == doctest::Approx(std::sqrt(8.0) / 4.0));
  CHECK(r.nominal_err == doctest::Approx(0.75));
  CHECK(r.evaluated_cells == 4);
  CHECK(r.warnings.empty());

  SUBCASE("changing an observed cell trips the guard") {
    imputed.set(3, 0, 9.0);
    CHECK_THROWS_AS(score_imputation(truth, imputed, eval), DataError);
  }
  SUBCASE("cells unknown in the ground truth are skipped") {
    MissingMask known(4, 3);
    known.set(1, 1, false);
    auto k = score_imputation(truth, imputed, eval, &known);
    CHECK(k.evaluated_cells == 3);
    CHECK(k.columns[1].cells == 0);
    CHECK(k.avg_err == doctest::Approx((std::sqrt(8.0) / 4.0 + 0.5) / 2.0));
    CHECK_FALSE(k.warnings.empty());
  }
  SUBCASE("a constant numeric column has no defined error") {
    for (std::size_t n = 0; n < 4; ++n) {
      truth.set(n, 0, 1.0);
      if (n > 0) imputed.set(n, 0, 1.0);
    }
    CHECK_THROWS_AS(score_imputation(truth, imputed, eval), UndefinedMetricError);
  }
}

TEST_CASE("errors stay within their ranges") {
  const auto schema = testing::mixed_schema();
  Rng rng(3);
  auto t = testing::random_table(schema, 100, rng);
  auto m = generate_mcar_mask(t, 0.3, 4);
  auto r = score_imputation(t, mean_mode_impute(t, m).completed, m);
  for (const auto& c : r.columns) {
    CHECK(c.error >= 0.0);
    if (is_nominal(c.kind)) CHECK(c.error <= 1.0);
  }
  double mean = 0.0;
  for (const auto& c : r.columns) mean += c.error / double(r.columns.size());
  CHECK(r.avg_err == doctest::Approx(mean));
}

TEST_CASE("synthetic data is valid and reproducible") {
  auto a = generate_synthetic(300, 1);
  auto b = generate_synthetic(300, 1);
  auto c = generate_synthetic(300, 2);
  CHECK(a.table.schema() == synthetic_schema());
  CHECK(a.table == b.table);
  CHECK_FALSE(a.table == c.table);
  CHECK(masked_count(a.mask) == 0);
  CHECK_NOTHROW(validate(a.table, a.mask));
  // Every class of every nominal column appears.
  for (std::size_t d = 4; d < 7; ++d) {
    std::vector<int> seen(synthetic_schema()[d].cardinality, 0);
    for (std::size_t n = 0; n < 300; ++n) seen[static_cast<std::size_t>(a.table.at(n, d))] = 1;
    CHECK(std::accumulate(seen.begin(), seen.end(), 0) == int(seen.size()));
  }
}

TEST_CASE("method names round-trip") {
  for (auto m : {Method::HivaeMap, Method::HivaeSample, Method::MeanMode})
    CHECK(parse_method(method_name(m)) == m);
  CHECK_FALSE(parse_method("median").has_value());
}

TEST_CASE("a zero missing rate yields an empty evaluation warning") {
  auto ds = generate_synthetic(50, 3);
  BenchmarkConfig c = tiny_benchmark();
  c.fractions = {0.0};
  c.repeats = 1;
  c.methods = {Method::MeanMode};
  auto reports = run_benchmark(ds.table, ds.mask, c);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].evaluated_cells == 0);
  CHECK(reports[0].avg_err == 0.0);
  CHECK_FALSE(reports[0].warnings.empty());
}

TEST_CASE("benchmark runs are reproducible and ordered") {
  auto ds = generate_synthetic(80, 4);
  auto c = tiny_benchmark();
  c.fractions = {0.1, 0.3};
  std::size_t seen = 0;
  auto a = run_benchmark(ds.table, ds.mask, c, [&](const MetricsReport&) { ++seen; });
  auto b = run_benchmark(ds.table, ds.mask, c);
  CHECK(seen == 12);
  REQUIRE(a.size() == 12);
  CHECK(reports_to_json(a) == reports_to_json(b));
  CHECK(format_reports(a) == format_reports(b));
  CHECK(a[0].fraction == 0.1);
  CHECK(a[0].repeat == 0);
  CHECK(a[0].method == "hivae_map");
  CHECK(a[1].method == "hivae_sample");
  CHECK(a[2].method == "mean_mode");
  CHECK(a[3].repeat == 1);
  CHECK(a[6].fraction == 0.3);
  CHECK(a[0].seed == grid_seed(5, 0, 0));
  CHECK(a[0].seed != a[3].seed);

  auto doc = nlohmann::json::parse(reports_to_json(a));
  REQUIRE(doc.size() == 12);
  CHECK(doc[0]["method"] == "hivae_map");
  CHECK(doc[0]["columns"].size() == 7);
  CHECK(doc[0]["avg_err"].get<double>() == a[0].avg_err);
  CHECK(format_reports(a).find("mean_mode") != std::string::npos);
}

TEST_CASE("originally missing cells are never scored") {
  auto ds = generate_synthetic(60, 5);
  ds.mask = generate_mcar_mask(ds.table, 0.2, 11);
  auto c = tiny_benchmark();
  c.repeats = 1;
  c.methods = {Method::MeanMode};
  auto base_missing = masked_count(ds.mask);
  // Perturbing the originally missing cells must not change the scores.
  auto reports = run_benchmark(ds.table, ds.mask, c);
  auto perturbed = run_benchmark(testing::perturb_masked(ds.table, ds.mask), ds.mask, c);
  CHECK(base_missing > 0);
  CHECK(reports_to_json(reports) == reports_to_json(perturbed));
  const auto mcar = generate_mcar_mask(ds.table, 0.2, grid_seed(c.seed, 0, 0));
  std::size_t expected = 0;
  for (std::size_t n = 0; n < 60; ++n)
    for (std::size_t d = 0; d < 7; ++d) expected += mcar.missing(n, d) && ds.mask.observed(n, d);
  CHECK(reports[0].evaluated_cells == expected);
}
