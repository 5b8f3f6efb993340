#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hivae/errors.hpp"
#include "hivae/generative.hpp"
#include "support.hpp"

using namespace hivae;
using testing::max_gradient_error;
using testing::random_tensor;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double inv_softplus(double y) { return std::log(std::expm1(y)); }

void zero_stack(DenseStack& s) {
  for (auto& l : s.layers) {
    for (auto& w : l.weights.mutable_values()) w = 0.0;
    for (auto& b : l.bias.mutable_values()) b = 0.0;
  }
}

GenerativeNets zero_nets(const Schema& schema, std::size_t k, std::size_t l) {
  Rng rng(0);
  auto nets = init_generative(schema, k, l, 2, 1, 0, rng);
  for (auto& v : nets.prior_mu.mutable_values()) v = 0.0;
  zero_stack(nets.g_net);
  for (auto& h : nets.heads) {
    zero_stack(h.location);
    if (h.scale) zero_stack(*h.scale);
  }
  return nets;
}

// Trapezoid rule on [lo, hi] with n intervals.
template <class F>
double trapezoid(F f, double lo, double hi, std::size_t n) {
  const double h = (hi - lo) / double(n);
  double total = 0.5 * (f(lo) + f(hi));
  for (std::size_t i = 1; i < n; ++i) total += f(lo + h * double(i));
  return total * h;
}

double sum_probs(const std::vector<double>& p) {
  double t = 0.0;
  for (double x : p) t += x;
  return t;
}

}  // namespace

TEST_CASE("log_likelihood examples") {
  CHECK(log_likelihood(NormalParams{0.0, 1.0}, 0.0) == doctest::Approx(-kHalfLog2Pi));
  CHECK(log_likelihood(NormalParams{0.0, 1.0}, 0.0) == doctest::Approx(-0.9189).epsilon(1e-4));
  CHECK(log_likelihood(PoissonParams{1.0}, 0.0) == doctest::Approx(-1.0));

  const std::vector<double> th{-1.0, 1.0};
  auto p = ordinal_probs(0.0, th);
  const double s1 = 1.0 / (1.0 + std::exp(1.0));  // sigmoid(-1)
  const double s2 = 1.0 / (1.0 + std::exp(-1.0));  // sigmoid(1)
  CHECK(p[0] == doctest::Approx(s1));
  CHECK(p[1] == doctest::Approx(s2 - s1));
  CHECK(p[2] == doctest::Approx(1.0 - s2));
  CHECK(p[0] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.4621).epsilon(1e-4));
  CHECK(sum_probs(p) == doctest::Approx(1.0));
  CHECK(log_likelihood(OrdinalParams{p, 0.0, th}, 1.0) == doctest::Approx(std::log(s2 - s1)));

  // log-normal includes the 1/x Jacobian
  const double x = 2.5;
  CHECK(log_likelihood(LogNormalParams{0.3, 0.7}, x) ==
        doctest::Approx(log_likelihood(NormalParams{0.3, 0.7}, std::log(x)) - std::log(x)));
  // Poisson includes -log x!
  CHECK(log_likelihood(PoissonParams{2.0}, 3.0) ==
        doctest::Approx(3.0 * std::log(2.0) - 2.0 - std::log(6.0)));
}

TEST_CASE("log_likelihood domain errors") {
  CHECK_THROWS_AS(log_likelihood(LogNormalParams{0.0, 1.0}, 0.0), DomainError);
  CHECK_THROWS_AS(log_likelihood(LogNormalParams{0.0, 1.0}, -1.0), DomainError);
  CHECK_THROWS_AS(log_likelihood(PoissonParams{1.0}, 1.5), DomainError);
  CHECK_THROWS_AS(log_likelihood(PoissonParams{1.0}, -1.0), DomainError);
  CHECK_THROWS_AS(log_likelihood(CategoricalParams{{0.5, 0.5}}, 2.0), DomainError);
  CHECK_THROWS_AS(log_likelihood(CategoricalParams{{0.5, 0.5}}, 0.5), DomainError);
}

TEST_CASE("every likelihood normalizes against an independent oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const double m = 4.0 * rng.uniform() - 2.0;
    const double v = 0.05 + 3.0 * rng.uniform();
    const double sd = std::sqrt(v);

    const double normal = trapezoid(
        [&](double x) { return std::exp(log_likelihood(NormalParams{m, v}, x)); }, m - 14 * sd,
        m + 14 * sd, 200000);
    CHECK(std::abs(normal - 1.0) < 1e-4);

    // Density of x integrated over u = ln x: p(e^u) e^u du.
    const double lognormal = trapezoid(
        [&](double u) {
          const double x = std::exp(u);
          return std::exp(log_likelihood(LogNormalParams{m, v}, x)) * x;
        },
        m - 14 * sd, m + 14 * sd, 200000);
    CHECK(std::abs(lognormal - 1.0) < 1e-4);

    const double rate = 0.01 + 50.0 * rng.uniform();
    double poisson = 0.0;
    for (int k = 0; k <= 10000; ++k) poisson += std::exp(log_likelihood(PoissonParams{rate}, k));
    CHECK(std::abs(poisson - 1.0) < 1e-4);
  }
}

TEST_CASE("decoded nominal distributions sum to one for any head output") {
  Rng rng(41);
  Schema schema({{"k", ColumnKind::Categorical, 4}, {"o", ColumnKind::Ordinal, 5}});
  for (double spread : {1.0, 10.0, 50.0}) {
    auto nets = init_generative(schema, 3, 2, 2, 1, 0, rng);
    for (auto& h : nets.heads) {
      for (auto& b : h.location.layers[0].bias.mutable_values()) b = spread * (2 * rng.uniform() - 1);
      if (h.scale)
        for (auto& b : h.scale->layers[0].bias.mutable_values()) b = spread * (2 * rng.uniform() - 1);
    }
    auto z = random_tensor({20, 3}, rng, -spread, spread, false);
    auto s = Tensor::from({20, 2}, std::vector<double>(40, 0.5));
    auto dec = decode(nets, schema, z, s, NormalizationStats::identity(schema));
    for (std::size_t r = 0; r < 20; ++r) {
      for (std::size_t d = 0; d < 2; ++d) {
        auto params = params_at(dec[d], r);
        const auto& probs = d == 0 ? std::get<CategoricalParams>(params).probs
                                   : std::get<OrdinalParams>(params).probs;
        for (double p : probs) CHECK(p >= 0.0);
        CHECK(std::abs(sum_probs(probs) - 1.0) < 1e-9);
        double exhaustive = 0.0;
        for (std::size_t c = 0; c < probs.size(); ++c)
          exhaustive += std::exp(log_likelihood(params, double(c)));
        CHECK(std::abs(exhaustive - 1.0) < 1e-4);
      }
      const auto th = std::get<OrdinalParams>(params_at(dec[1], r)).thresholds;
      for (std::size_t i = 1; i < th.size(); ++i) CHECK(th[i] > th[i - 1]);
    }
  }
}

TEST_CASE("mode examples") {
  CHECK(mode(NormalParams{1.25, 3.0}) == 1.25);
  CHECK(mode(LogNormalParams{0.0, 1.0}) == doctest::Approx(std::exp(-1.0)));
  CHECK(mode(LogNormalParams{0.0, 1.0}) == doctest::Approx(0.3679).epsilon(1e-4));
  CHECK(mode(PoissonParams{2.7}) == 2.0);
  CHECK(mode(PoissonParams{3.0}) == 3.0);
  CHECK(mode(CategoricalParams{{0.2, 0.5, 0.3}}) == 1.0);
  CHECK(mode(CategoricalParams{{0.4, 0.4, 0.2}}) == 0.0);
  CHECK(mode(OrdinalParams{{0.1, 0.2, 0.7}, 0.0, {0.0, 1.0}}) == 2.0);
}

TEST_CASE("sample examples") {
  Rng rng(5);
  CHECK(sample(NormalParams{3.0, kVarFloor}, rng) == doctest::Approx(3.0).epsilon(0.01));
  for (int i = 0; i < 100; ++i) CHECK(sample(CategoricalParams{{1.0, 0.0, 0.0}}, rng) == 0.0);
  double total = 0.0;
  for (int i = 0; i < 100000; ++i) total += sample(PoissonParams{4.0}, rng);
  CHECK(std::abs(total / 100000.0 - 4.0) < 0.05);
  for (int i = 0; i < 100; ++i) CHECK(sample(LogNormalParams{0.0, 4.0}, rng) > 0.0);
}

TEST_CASE("prior_log_density examples") {
  Schema schema({{"x", ColumnKind::Real, 0}});
  SUBCASE("peak of a unit Gaussian") {
    auto nets = zero_nets(schema, 1, 2);
    nets.prior_mu.mutable_values()[1] = 0.7;
    std::vector<double> z{0.7}, s{0.0, 1.0};
    CHECK(prior_log_density(nets, z, s) == doctest::Approx(-kHalfLog2Pi));
  }
  SUBCASE("L = 1 reduces to the standard normal prior") {
    Rng rng(1);
    auto nets = init_generative(schema, 3, 1, 2, 1, 0, rng);
    CHECK_FALSE(nets.prior_mu.requires_grad());
    std::vector<double> z{0.3, -1.2, 2.0}, s{1.0};
    double expect = 0.0;
    for (double v : z) expect += -kHalfLog2Pi - 0.5 * v * v;
    CHECK(prior_log_density(nets, z, s) == doctest::Approx(expect));
  }
  SUBCASE("soft s interpolates the component means") {
    auto nets = zero_nets(schema, 2, 2);
    auto table = nets.prior_mu.mutable_values();
    table[0] = 1.5, table[1] = -0.5, table[2] = -1.5, table[3] = 0.5;
    auto mean = prior_mean(nets, Tensor::from({1, 2}, {0.5, 0.5}));
    CHECK(mean.at(0, 0) == 0.0);
    CHECK(mean.at(0, 1) == 0.0);
    auto t = prior_log_density(nets, Tensor::from({1, 2}, {0.0, 0.0}), Tensor::from({1, 2}, {0.5, 0.5}));
    CHECK(t.item() == doctest::Approx(-2.0 * kHalfLog2Pi));
  }
}

TEST_CASE("decode examples") {
  SUBCASE("zero categorical head gives uniform probabilities") {
    Schema schema({{"k", ColumnKind::Categorical, 3}});
    auto nets = zero_nets(schema, 2, 1);
    auto dec = decode(nets, schema, Tensor::zeros({1, 2}), Tensor::filled({1, 1}, 1.0),
                      NormalizationStats::identity(schema));
    auto probs = std::get<CategoricalParams>(params_at(dec[0], 0)).probs;
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("ordinal gaps (1, 2) give thresholds (1, 3)") {
    Schema schema({{"o", ColumnKind::Ordinal, 3}});
    auto nets = zero_nets(schema, 2, 1);
    auto bias = nets.heads[0].scale->layers[0].bias.mutable_values();
    bias[0] = inv_softplus(1.0);
    bias[1] = inv_softplus(2.0);
    auto dec = decode(nets, schema, Tensor::zeros({1, 2}), Tensor::filled({1, 1}, 1.0),
                      NormalizationStats::identity(schema));
    auto p = std::get<OrdinalParams>(params_at(dec[0], 0));
    CHECK(p.thresholds[0] == doctest::Approx(1.0));
    CHECK(p.thresholds[1] == doctest::Approx(3.0));
    auto expect = ordinal_probs(0.0, p.thresholds);
    for (std::size_t r = 0; r < 3; ++r) CHECK(p.probs[r] == doctest::Approx(expect[r]));
  }
  SUBCASE("normal head (0, 1) with stats (10, 2) denormalizes to Normal(10, 4)") {
    Schema schema({{"x", ColumnKind::Real, 0}});
    auto nets = zero_nets(schema, 2, 1);
    nets.heads[0].scale->layers[0].bias.mutable_values()[0] = inv_softplus(1.0);
    NormalizationStats stats;
    stats.columns = {ColumnStats{10.0, 2.0, StatDomain::Raw}};
    auto dec = decode(nets, schema, Tensor::zeros({1, 2}), Tensor::filled({1, 1}, 1.0), stats);
    auto p = std::get<NormalParams>(params_at(dec[0], 0));
    CHECK(p.mean == doctest::Approx(10.0));
    CHECK(p.var == doctest::Approx(4.0));
  }
  SUBCASE("log-normal parameters denormalize in the log domain") {
    Schema schema({{"p", ColumnKind::PositiveReal, 0}});
    auto nets = zero_nets(schema, 2, 1);
    nets.heads[0].location.layers[0].bias.mutable_values()[0] = 0.5;
    nets.heads[0].scale->layers[0].bias.mutable_values()[0] = inv_softplus(0.25);
    NormalizationStats stats;
    stats.columns = {ColumnStats{1.0, 3.0, StatDomain::Log}};
    auto dec = decode(nets, schema, Tensor::zeros({1, 2}), Tensor::filled({1, 1}, 1.0), stats);
    auto p = std::get<LogNormalParams>(params_at(dec[0], 0));
    CHECK(p.mean == doctest::Approx(2.5));
    CHECK(p.var == doctest::Approx(2.25));
  }
  SUBCASE("Poisson rate ignores normalization stats") {
    Schema schema({{"c", ColumnKind::Count, 0}});
    auto nets = zero_nets(schema, 2, 1);
    nets.heads[0].location.layers[0].bias.mutable_values()[0] = inv_softplus(3.0);
    NormalizationStats stats;
    stats.columns = {ColumnStats{5.0, 7.0, StatDomain::Log1p}};
    auto dec = decode(nets, schema, Tensor::zeros({1, 2}), Tensor::filled({1, 1}, 1.0), stats);
    CHECK(std::get<PoissonParams>(params_at(dec[0], 0)).rate == doctest::Approx(3.0));
  }
  SUBCASE("floors engage for collapsing variance and rate") {
    Schema schema({{"x", ColumnKind::Real, 0}, {"c", ColumnKind::Count, 0}});
    auto nets = zero_nets(schema, 2, 1);
    nets.heads[0].scale->layers[0].bias.mutable_values()[0] = -800.0;
    nets.heads[1].location.layers[0].bias.mutable_values()[0] = -800.0;
    auto dec = decode(nets, schema, Tensor::zeros({1, 2}), Tensor::filled({1, 1}, 1.0),
                      NormalizationStats::identity(schema));
    CHECK(std::get<NormalParams>(params_at(dec[0], 0)).var == kVarFloor);
    CHECK(std::get<PoissonParams>(params_at(dec[1], 0)).rate == kRateFloor);
  }
}

TEST_CASE("scale and threshold outputs depend on s alone") {
  Rng rng(9);
  Schema schema({{"x", ColumnKind::Real, 0}, {"o", ColumnKind::Ordinal, 4}});
  auto nets = init_generative(schema, 3, 2, 2, 1, 0, rng);
  auto s = Tensor::from({1, 2}, {0.3, 0.7});
  auto stats = NormalizationStats::identity(schema);
  auto a = decode(nets, schema, random_tensor({1, 3}, rng, -1, 1, false), s, stats);
  auto b = decode(nets, schema, random_tensor({1, 3}, rng, -1, 1, false), s, stats);
  CHECK(a[0].var.item() == b[0].var.item());
  CHECK(a[0].mean.item() != b[0].mean.item());
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[1].thresholds.values()[i] == b[1].thresholds.values()[i]);
}

TEST_CASE("denormalization inverts normalization") {
  Rng rng(17);
  Schema schema({{"x", ColumnKind::Real, 0}});
  auto nets = zero_nets(schema, 2, 1);
  for (int i = 0; i < 50; ++i) {
    const double x = 1000.0 * (rng.uniform() - 0.5);
    const ColumnStats cs{100.0 * rng.normal(), 0.01 + 50.0 * rng.uniform(), StatDomain::Raw};
    nets.heads[0].location.layers[0].bias.mutable_values()[0] = (x - cs.shift) / cs.scale;
    NormalizationStats stats;
    stats.columns = {cs};
    auto dec = decode(nets, schema, Tensor::zeros({1, 2}), Tensor::filled({1, 1}, 1.0), stats);
    CHECK(std::abs(dec[0].mean.item() - x) < 1e-9);
  }
}

TEST_CASE("column_log_likelihood agrees with the scalar densities and masks rows") {
  Rng rng(23);
  const auto schema = testing::mixed_schema();
  auto nets = init_generative(schema, 3, 2, 2, 1, 0, rng);
  const std::size_t n = 12;
  auto table = testing::random_table(schema, n, rng);
  auto mask = testing::random_mask(n, schema.size(), 0.3, rng);
  auto stats = fit_normalization(table, mask);
  auto z = random_tensor({n, 3}, rng, -1, 1, false);
  auto s = softmax_rows(random_tensor({n, 2}, rng, -1, 1, false));
  auto dec = decode(nets, schema, z, s, stats);
  for (std::size_t d = 0; d < schema.size(); ++d) {
    std::vector<double> values(n), observed(n);
    for (std::size_t r = 0; r < n; ++r) {
      values[r] = table.at(r, d);
      observed[r] = mask.observed(r, d);
    }
    auto ll = column_log_likelihood(dec[d], values, observed);
    for (std::size_t r = 0; r < n; ++r) {
      if (observed[r] == 0.0) {
        CHECK(ll.at(r, 0) == 0.0);
      } else {
        CHECK(ll.at(r, 0) == doctest::Approx(log_likelihood(params_at(dec[d], r), values[r])));
      }
    }
    // Stored values of unobserved rows are never read, even when invalid.
    for (std::size_t r = 0; r < n; ++r)
      if (observed[r] == 0.0) values[r] = -12345.5;
    auto ll2 = column_log_likelihood(dec[d], values, observed);
    for (std::size_t r = 0; r < n; ++r) CHECK(ll2.at(r, 0) == ll.at(r, 0));
  }
}

TEST_CASE("likelihood terms are differentiable in every decoder parameter") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    const auto schema = testing::mixed_schema();
    auto nets = init_generative(schema, 3, 2, 2, 1, 0, rng);
    for (auto& p : parameters(nets))
      for (auto& v : p.mutable_values()) v += 0.3 * (rng.uniform() - 0.5);
    const std::size_t n = 6;
    auto table = testing::random_table(schema, n, rng);
    auto mask = testing::random_mask(n, schema.size(), 0.2, rng);
    auto stats = fit_normalization(table, mask);
    auto z = random_tensor({n, 3}, rng, -1, 1, true);
    auto s = random_tensor({n, 2}, rng, 0.1, 1.0, true);
    auto loss = [&] {
      auto dec = decode(nets, schema, z, s, stats);
      Tensor total = Tensor::zeros({1, 1});
      for (std::size_t d = 0; d < schema.size(); ++d) {
        std::vector<double> values(n), observed(n);
        for (std::size_t r = 0; r < n; ++r) {
          values[r] = table.at(r, d);
          observed[r] = mask.observed(r, d);
        }
        total = add(total, sum(column_log_likelihood(dec[d], values, observed)));
      }
      return add(total, sum(prior_log_density(nets, z, s)));
    };
    auto params = parameters(nets);
    params.push_back(z);
    params.push_back(s);
    CHECK(max_gradient_error(params, loss) < 1e-4);
  }
}

TEST_CASE("head widths follow the column kind") {
  CHECK(location_width({"k", ColumnKind::Categorical, 5}) == 4);
  CHECK(location_width({"o", ColumnKind::Ordinal, 5}) == 1);
  CHECK(scale_width({"o", ColumnKind::Ordinal, 5}) == 4);
  CHECK(scale_width({"x", ColumnKind::Real, 0}) == 1);
  CHECK(scale_width({"c", ColumnKind::Count, 0}) == 0);
  CHECK(scale_width({"k", ColumnKind::Categorical, 3}) == 0);
  CHECK(auto_hidden(4, 9, 0) == 9);
  CHECK(auto_hidden(4, 9, 32) == 32);
}

TEST_CASE("describe names the distribution") {
  CHECK(describe(NormalParams{1.0, 2.0}).rfind("normal", 0) == 0);
  CHECK(describe(PoissonParams{1.0}).rfind("poisson", 0) == 0);
  CHECK(describe(OrdinalParams{{0.5, 0.5}, 0.0, {0.0}}).rfind("ordinal", 0) == 0);
}
