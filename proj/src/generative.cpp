#include "hivae/generative.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hivae/errors.hpp"

namespace hivae {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t class_index(double x, std::size_t classes) {
  if (!(x >= 0.0) || x != std::floor(x) || x >= static_cast<double>(classes))
    throw DomainError("class index " + std::to_string(x) + " outside {0.." +
                      std::to_string(classes - 1) + "}");
  return static_cast<std::size_t>(x);
}

std::size_t draw_class(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t r = 0; r < probs.size(); ++r) {
    acc += probs[r];
    if (u < acc) return r;
  }
  // Round-off left u above the final cumulative sum: take the last class with mass.
  for (std::size_t r = probs.size(); r-- > 0;)
    if (probs[r] > 0.0) return r;
  return 0;
}

Tensor floored(const Tensor& t, double floor) { return clamp(t, floor, kInf); }

}  // namespace

// --- scalar distributions ----------------------------------------------------

std::vector<double> ordinal_probs(double location, std::span<const double> thresholds) {
  const std::size_t classes = thresholds.size() + 1;
  std::vector<double> p(classes);
  double prev = 0.0;
  for (std::size_t r = 0; r + 1 < classes; ++r) {
    const double cum = sigmoid(thresholds[r] - location);
    p[r] = cum - prev;
    prev = cum;
  }
  p[classes - 1] = 1.0 - prev;
  return p;
}

double log_likelihood(const LikelihoodParams& params, double x) {
  return std::visit(
      overloaded{
          [x](const NormalParams& p) {
            const double dev = x - p.mean;
            return -0.5 * (kLog2Pi + std::log(p.var)) - dev * dev / (2.0 * p.var);
          },
          [x](const LogNormalParams& p) {
            if (!(x > 0.0)) throw DomainError("log-normal value must be > 0");
            const double lx = std::log(x);
            const double dev = lx - p.mean;
            return -lx - 0.5 * (kLog2Pi + std::log(p.var)) - dev * dev / (2.0 * p.var);
          },
          [x](const PoissonParams& p) {
            if (!(x >= 0.0) || x != std::floor(x))
              throw DomainError("Poisson value must be an integer >= 0");
            return x * std::log(p.rate) - p.rate - std::lgamma(x + 1.0);
          },
          [x](const CategoricalParams& p) {
            return std::log(p.probs[class_index(x, p.probs.size())]);
          },
          [x](const OrdinalParams& p) {
            return std::log(p.probs[class_index(x, p.probs.size())]);
          },
      },
      params);
}

double mode(const LikelihoodParams& params) {
  return std::visit(overloaded{
                        [](const NormalParams& p) { return p.mean; },
                        [](const LogNormalParams& p) { return std::exp(p.mean - p.var); },
                        [](const PoissonParams& p) { return std::floor(p.rate); },
                        [](const CategoricalParams& p) { return double(argmax(p.probs)); },
                        [](const OrdinalParams& p) { return double(argmax(p.probs)); },
                    },
                    params);
}

double sample(const LikelihoodParams& params, Rng& rng) {
  return std::visit(
      overloaded{
          [&rng](const NormalParams& p) { return p.mean + std::sqrt(p.var) * rng.normal(); },
          [&rng](const LogNormalParams& p) {
            return std::exp(p.mean + std::sqrt(p.var) * rng.normal());
          },
          [&rng](const PoissonParams& p) {
            return static_cast<double>(std::poisson_distribution<long long>(p.rate)(rng.engine()));
          },
          [&rng](const CategoricalParams& p) { return double(draw_class(p.probs, rng)); },
          [&rng](const OrdinalParams& p) { return double(draw_class(p.probs, rng)); },
      },
      params);
}

std::string describe(const LikelihoodParams& params) {
  std::ostringstream os;
  os.precision(17);
  auto list = [&os](std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  };
  std::visit(overloaded{
                 [&](const NormalParams& p) { os << "normal mean=" << p.mean << " var=" << p.var; },
                 [&](const LogNormalParams& p) {
                   os << "lognormal mean=" << p.mean << " var=" << p.var;
                 },
                 [&](const PoissonParams& p) { os << "poisson rate=" << p.rate; },
                 [&](const CategoricalParams& p) {
                   os << "categorical probs=";
                   list(p.probs);
                 },
                 [&](const OrdinalParams& p) {
                   os << "ordinal probs=";
                   list(p.probs);
                 },
             },
             params);
  return os.str();
}

// --- networks ----------------------------------------------------------------

std::size_t location_width(const ColumnSpec& column) {
  return column.kind == ColumnKind::Categorical ? column.cardinality - 1 : 1;
}

std::size_t scale_width(const ColumnSpec& column) {
  switch (column.kind) {
    case ColumnKind::Real:
    case ColumnKind::PositiveReal: return 1;
    case ColumnKind::Ordinal: return column.cardinality - 1;
    default: return 0;
  }
}

std::size_t auto_hidden(std::size_t in, std::size_t out, std::size_t configured) {
  return configured ? configured : std::max(in, out);
}

GenerativeNets init_generative(const Schema& schema, std::size_t dim_z, std::size_t dim_s,
                               std::size_t dim_y, std::size_t layers, std::size_t hidden,
                               Rng& rng) {
  GenerativeNets nets;
  nets.dim_y = dim_y;
  if (dim_s == 1) {
    nets.prior_mu = Tensor::zeros({1, dim_z}, false);
  } else {
    nets.prior_mu = DenseLayer::init(dim_s, dim_z, Activation::Identity, rng).weights;
  }
  const std::size_t y_width = schema.size() * dim_y;
  nets.g_net = DenseStack::init(dim_z, y_width, layers, auto_hidden(dim_z, y_width, hidden),
                                Activation::Identity, rng);
  for (const auto& column : schema.columns()) {
    HeadNets head;
    const std::size_t lw = location_width(column);
    head.location = DenseStack::init(dim_y + dim_s, lw, layers,
                                     auto_hidden(dim_y + dim_s, lw, hidden), Activation::Identity,
                                     rng);
    if (const std::size_t sw = scale_width(column))
      head.scale = DenseStack::init(dim_s, sw, layers, auto_hidden(dim_s, sw, hidden),
                                    Activation::Identity, rng);
    nets.heads.push_back(std::move(head));
  }
  return nets;
}

std::vector<Tensor> parameters(const GenerativeNets& nets) {
  std::vector<Tensor> out;
  if (nets.prior_mu.requires_grad()) out.push_back(nets.prior_mu);
  auto add_stack = [&out](const DenseStack& s) {
    for (const auto& l : s.layers) {
      out.push_back(l.weights);
      out.push_back(l.bias);
    }
  };
  add_stack(nets.g_net);
  for (const auto& h : nets.heads) {
    add_stack(h.location);
    if (h.scale) add_stack(*h.scale);
  }
  return out;
}

Tensor prior_mean(const GenerativeNets& nets, const Tensor& s) { return matmul(s, nets.prior_mu); }

Tensor prior_log_density(const GenerativeNets& nets, const Tensor& z, const Tensor& s) {
  const double k = static_cast<double>(z.cols());
  Tensor dev = sub(z, prior_mean(nets, s));
  return add_scalar(scale(sum_cols(square(dev)), -0.5), -0.5 * k * kLog2Pi);
}

double prior_log_density(const GenerativeNets& nets, std::span<const double> z,
                         std::span<const double> s) {
  const std::size_t dim_z = nets.dim_z();
  if (z.size() != dim_z || s.size() != nets.dim_s())
    throw ShapeError("prior_log_density: latent dimensions do not match the prior");
  const auto table = nets.prior_mu.values();
  double ss = 0.0;
  for (std::size_t k = 0; k < dim_z; ++k) {
    double mu = 0.0;
    for (std::size_t l = 0; l < s.size(); ++l) mu += s[l] * table[l * dim_z + k];
    ss += (z[k] - mu) * (z[k] - mu);
  }
  return -0.5 * ss - 0.5 * static_cast<double>(dim_z) * kLog2Pi;
}

std::vector<DecodedColumn> decode(const GenerativeNets& nets, const Schema& schema,
                                  const Tensor& z, const Tensor& s,
                                  const NormalizationStats& stats) {
  if (z.cols() != nets.dim_z() || s.cols() != nets.dim_s() || z.rows() != s.rows())
    throw ShapeError("decode: latent shapes " + to_string(z.shape()) + ", " +
                     to_string(s.shape()) + " do not match the networks");
  const std::size_t n = z.rows();
  Tensor y = forward(nets.g_net, z);
  std::vector<DecodedColumn> out;
  out.reserve(schema.size());
  for (std::size_t d = 0; d < schema.size(); ++d) {
    const auto& column = schema[d];
    const auto& head = nets.heads[d];
    DecodedColumn dc;
    dc.column = column;
    Tensor loc = forward(head.location, concat_cols({slice_cols(y, d * nets.dim_y, nets.dim_y), s}));
    switch (column.kind) {
      case ColumnKind::Real:
      case ColumnKind::PositiveReal: {
        const auto& cs = *stats.columns.at(d);
        Tensor var = floored(softplus(forward(*head.scale, s)), kVarFloor);
        dc.mean = add_scalar(scale(loc, cs.scale), cs.shift);
        dc.var = scale(var, cs.scale * cs.scale);
        break;
      }
      case ColumnKind::Count:
        dc.rate = floored(softplus(loc), kRateFloor);
        break;
      case ColumnKind::Categorical:
        dc.log_probs = log_softmax_rows(concat_cols({Tensor::zeros({n, 1}), loc}));
        break;
      case ColumnKind::Ordinal: {
        Tensor gaps = floored(softplus(forward(*head.scale, s)), kGapFloor);
        dc.location = loc;
        dc.thresholds = cumsum_cols(gaps);
        Tensor cum = sigmoid(sub(dc.thresholds, loc));
        dc.probs = sub(concat_cols({cum, Tensor::filled({n, 1}, 1.0)}),
                       concat_cols({Tensor::zeros({n, 1}), cum}));
        break;
      }
    }
    out.push_back(std::move(dc));
  }
  return out;
}

LikelihoodParams params_at(const DecodedColumn& dc, std::size_t r) {
  auto row = [r](const Tensor& t) {
    const auto v = t.values();
    return std::vector<double>(v.begin() + r * t.cols(), v.begin() + (r + 1) * t.cols());
  };
  switch (dc.column.kind) {
    case ColumnKind::Real: return NormalParams{dc.mean.at(r, 0), dc.var.at(r, 0)};
    case ColumnKind::PositiveReal: return LogNormalParams{dc.mean.at(r, 0), dc.var.at(r, 0)};
    case ColumnKind::Count: return PoissonParams{dc.rate.at(r, 0)};
    case ColumnKind::Categorical: {
      auto lp = row(dc.log_probs);
      for (auto& x : lp) x = std::exp(x);
      return CategoricalParams{std::move(lp)};
    }
    case ColumnKind::Ordinal:
      return OrdinalParams{row(dc.probs), dc.location.at(r, 0), row(dc.thresholds)};
  }
  throw DomainError("unknown column kind");
}

Tensor column_log_likelihood(const DecodedColumn& dc, std::span<const double> values,
                             std::span<const double> observed) {
  const std::size_t n = values.size();
  if (observed.size() != n) throw ShapeError("column_log_likelihood: values/observed size differ");
  const Tensor weight = Tensor::from({n, 1}, std::vector<double>(observed.begin(), observed.end()));

  // Unobserved rows read a neutral in-support value instead of the stored one.
  auto column_of = [&](double neutral, auto transform) {
    std::vector<double> v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = observed[r] != 0.0 ? transform(values[r]) : neutral;
    return Tensor::from({n, 1}, std::move(v));
  };
  auto one_hot = [&](std::size_t classes) {
    std::vector<double> v(n * classes, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      if (observed[r] != 0.0) v[r * classes + class_index(values[r], classes)] = 1.0;
    return Tensor::from({n, classes}, std::move(v));
  };

  Tensor ll;
  switch (dc.column.kind) {
    case ColumnKind::Real:
    case ColumnKind::PositiveReal: {
      const bool lognormal = dc.column.kind == ColumnKind::PositiveReal;
      std::vector<double> jac(n, 0.0);
      Tensor x;
      if (lognormal) {
        for (std::size_t r = 0; r < n; ++r) {
          if (observed[r] == 0.0) continue;
          if (!(values[r] > 0.0)) throw DomainError("log-normal value must be > 0");
          jac[r] = -std::log(values[r]);
        }
        x = column_of(0.0, [](double v) { return std::log(v); });
      } else {
        x = column_of(0.0, [](double v) { return v; });
      }
      Tensor sq = div(square(sub(x, dc.mean)), dc.var);
      ll = add(scale(add(log(dc.var), sq), -0.5), Tensor::filled({n, 1}, -0.5 * kLog2Pi));
      if (lognormal) ll = add(ll, Tensor::from({n, 1}, std::move(jac)));
      break;
    }
    case ColumnKind::Count: {
      std::vector<double> lfact(n, 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        if (observed[r] == 0.0) continue;
        if (!(values[r] >= 0.0) || values[r] != std::floor(values[r]))
          throw DomainError("Poisson value must be an integer >= 0");
        lfact[r] = -std::lgamma(values[r] + 1.0);
      }
      Tensor x = column_of(0.0, [](double v) { return v; });
      ll = add(sub(mul(x, log(dc.rate)), dc.rate), Tensor::from({n, 1}, std::move(lfact)));
      break;
    }
    case ColumnKind::Categorical:
      ll = sum_cols(mul(dc.log_probs, one_hot(dc.column.cardinality)));
      break;
    case ColumnKind::Ordinal:
      ll = log(floored(sum_cols(mul(dc.probs, one_hot(dc.column.cardinality))), kProbFloor));
      break;
  }
  return mul(ll, weight);
}

}  // namespace hivae
