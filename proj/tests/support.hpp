#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hivae/compute.hpp"
#include "hivae/tabular.hpp"

namespace testing {

/// Scratch directory removed when the object goes out of scope.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("hivae_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Largest relative error between backward() gradients and central finite
/// differences of `loss` with respect to every entry of every parameter.
inline double max_gradient_error(const std::vector<hivae::Tensor>& params,
                                 const std::function<hivae::Tensor()>& loss, double step = 1e-4) {
  for (auto p : params) p.zero_grad();
  hivae::backward(loss());
  double worst = 0.0;
  for (auto p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + step;
      const double up = loss().item();
      values[i] = orig - step;
      const double down = loss().item();
      values[i] = orig;
      worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

inline hivae::Tensor random_tensor(hivae::Shape shape, hivae::Rng& rng, double lo = -1.0,
                                   double hi = 1.0, bool requires_grad = true) {
  std::vector<double> v(shape.size());
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return hivae::Tensor::from(shape, std::move(v), requires_grad);
}

/// Six columns, one of each kind plus a second categorical.
inline hivae::Schema mixed_schema() {
  using hivae::ColumnKind;
  return hivae::Schema({{"r", ColumnKind::Real, 0},
                        {"p", ColumnKind::PositiveReal, 0},
                        {"c", ColumnKind::Count, 0},
                        {"k", ColumnKind::Categorical, 3},
                        {"o", ColumnKind::Ordinal, 4},
                        {"k2", ColumnKind::Categorical, 2}});
}

/// Random type-valid table for `schema`.
inline hivae::HeterogeneousTable random_table(const hivae::Schema& schema, std::size_t rows,
                                              hivae::Rng& rng) {
  using hivae::ColumnKind;
  hivae::HeterogeneousTable t(schema, rows);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t d = 0; d < schema.size(); ++d) {
      const auto& c = schema[d];
      double v = 0.0;
      switch (c.kind) {
        case ColumnKind::Real: v = 3.0 * rng.normal() + 1.0; break;
        case ColumnKind::PositiveReal: v = std::exp(rng.normal()); break;
        case ColumnKind::Count: v = static_cast<double>(rng.below(8)); break;
        default: v = static_cast<double>(rng.below(c.cardinality)); break;
      }
      t.set(n, d, v);
    }
  return t;
}

inline hivae::MissingMask random_mask(std::size_t rows, std::size_t cols, double fraction,
                                      hivae::Rng& rng) {
  hivae::MissingMask m(rows, cols);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t d = 0; d < cols; ++d)
      if (rng.uniform() < fraction) m.set(n, d, false);
  return m;
}

/// Overwrites every masked cell with a different type-valid value.
inline hivae::HeterogeneousTable perturb_masked(const hivae::HeterogeneousTable& table,
                                                const hivae::MissingMask& mask) {
  auto out = table;
  for (std::size_t n = 0; n < table.rows(); ++n)
    for (std::size_t d = 0; d < table.cols(); ++d) {
      if (mask.observed(n, d)) continue;
      const auto& c = table.schema()[d];
      const double v = table.at(n, d);
      out.set(n, d, hivae::is_nominal(c.kind) ? std::fmod(v + 1.0, double(c.cardinality))
                                              : v * 7.0 + 13.0);
    }
  return out;
}

}  // namespace testing
