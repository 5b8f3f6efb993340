#include "hivae/tabular.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "hivae/errors.hpp"

namespace hivae {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_double(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

// Non-empty lines of a text file, with their 0-based line numbers.
std::vector<std::pair<std::size_t, std::string>> read_lines(const std::filesystem::path& path,
                                                            const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " file '" + path.string() + "'");
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.emplace_back(number, line);
    ++number;
  }
  return lines;
}

void write_double(std::ostream& out, double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.write(buf.data(), ptr - buf.data());
}

}  // namespace

std::string_view kind_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Real: return "real";
    case ColumnKind::PositiveReal: return "pos";
    case ColumnKind::Count: return "count";
    case ColumnKind::Categorical: return "cat";
    case ColumnKind::Ordinal: return "ordinal";
  }
  return "?";
}

std::optional<ColumnKind> parse_kind(std::string_view text) {
  for (auto kind : {ColumnKind::Real, ColumnKind::PositiveReal, ColumnKind::Count,
                    ColumnKind::Categorical, ColumnKind::Ordinal}) {
    if (text == kind_name(kind)) return kind;
  }
  return std::nullopt;
}

bool is_nominal(ColumnKind kind) {
  return kind == ColumnKind::Categorical || kind == ColumnKind::Ordinal;
}

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw DataError("schema has no columns");
  std::unordered_set<std::string> names;
  for (const auto& c : columns_) {
    if (is_nominal(c.kind) && c.cardinality < 2)
      throw DataError("column '" + c.name + "' is nominal but has cardinality < 2");
    if (!is_nominal(c.kind) && c.cardinality != 0)
      throw DataError("column '" + c.name + "' is numeric but has nonzero cardinality");
    if (!names.insert(c.name).second)
      throw DataError("duplicate column name '" + c.name + "'");
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t d = 0; d < columns_.size(); ++d)
    if (columns_[d].name == name) return d;
  return std::nullopt;
}

std::uint64_t Schema::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : columns_) {
    mix(c.name);
    mix(",");
    mix(kind_name(c.kind));
    mix(",");
    mix(std::to_string(c.cardinality));
    mix("\n");
  }
  return h;
}

std::size_t MissingMask::count_missing() const {
  return static_cast<std::size_t>(std::count(observed_.begin(), observed_.end(), 0));
}

std::string cell_violation(const ColumnSpec& column, double value) {
  if (!std::isfinite(value)) return "non-finite value";
  switch (column.kind) {
    case ColumnKind::Real: return {};
    case ColumnKind::PositiveReal:
      return value > 0.0 ? std::string() : "positive-real cell must be > 0";
    case ColumnKind::Count:
      if (value < 0.0 || value != std::floor(value)) return "count cell must be an integer >= 0";
      return {};
    case ColumnKind::Categorical:
    case ColumnKind::Ordinal:
      if (value < 0.0 || value != std::floor(value) ||
          value >= static_cast<double>(column.cardinality))
        return "class index must be an integer in {0.." + std::to_string(column.cardinality - 1) +
               "}";
      return {};
  }
  return "unknown kind";
}

void validate(const HeterogeneousTable& table, const MissingMask& mask) {
  if (mask.rows() != table.rows() || mask.cols() != table.cols())
    throw DataError("mask shape does not match table shape");
  for (std::size_t n = 0; n < table.rows(); ++n)
    for (std::size_t d = 0; d < table.cols(); ++d) {
      if (!mask.observed(n, d)) continue;
      auto why = cell_violation(table.schema()[d], table.at(n, d));
      if (!why.empty()) throw DataError(why, n, d);
    }
}

Schema load_types(const std::filesystem::path& types_file) {
  std::vector<ColumnSpec> columns;
  for (const auto& [lineno, line] : read_lines(types_file, "types")) {
    auto fields = split_fields(line);
    if (fields.size() < 2 || fields.size() > 3)
      throw DataError("types file line " + std::to_string(lineno + 1) +
                      ": expected name,kind[,cardinality]");
    ColumnSpec spec;
    spec.name = std::string(fields[0]);
    auto kind = parse_kind(fields[1]);
    if (!kind)
      throw DataError("types file line " + std::to_string(lineno + 1) + ": unknown kind '" +
                      std::string(fields[1]) + "'");
    spec.kind = *kind;
    if (fields.size() == 3 && !fields[2].empty()) {
      std::size_t r = 0;
      auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), r);
      if (ec != std::errc() || ptr != fields[2].data() + fields[2].size())
        throw DataError("types file line " + std::to_string(lineno + 1) + ": bad cardinality '" +
                        std::string(fields[2]) + "'");
      spec.cardinality = r;
    }
    columns.push_back(std::move(spec));
  }
  return Schema(std::move(columns));
}

MissingMask load_mask(const std::filesystem::path& mask_file, std::size_t rows, std::size_t cols) {
  MissingMask mask(rows, cols);
  auto lines = read_lines(mask_file, "mask");
  if (lines.size() != rows)
    throw DataError("mask file has " + std::to_string(lines.size()) + " rows, data has " +
                    std::to_string(rows));
  for (std::size_t n = 0; n < rows; ++n) {
    auto fields = split_fields(lines[n].second);
    if (fields.size() != cols)
      throw DataError("ragged mask row: expected " + std::to_string(cols) + " fields, got " +
                          std::to_string(fields.size()),
                      n, 0);
    for (std::size_t d = 0; d < cols; ++d) {
      if (fields[d] == "1") {
        mask.set(n, d, true);
      } else if (fields[d] == "0") {
        mask.set(n, d, false);
      } else {
        throw DataError("mask entries must be 0 or 1", n, d);
      }
    }
  }
  return mask;
}

Dataset load_data(const std::filesystem::path& data_file, const Schema& schema,
                  const std::optional<std::filesystem::path>& mask_file) {
  auto lines = read_lines(data_file, "data");
  const std::size_t cols = schema.size();
  HeterogeneousTable table(schema, lines.size());
  MissingMask mask(lines.size(), cols);
  std::optional<MissingMask> given;
  if (mask_file) given = load_mask(*mask_file, lines.size(), cols);

  for (std::size_t n = 0; n < lines.size(); ++n) {
    auto fields = split_fields(lines[n].second);
    if (fields.size() != cols)
      throw DataError("ragged row: expected " + std::to_string(cols) + " fields, got " +
                          std::to_string(fields.size()),
                      n, 0);
    for (std::size_t d = 0; d < cols; ++d) {
      const bool empty = fields[d].empty();
      bool observed = !empty;
      if (given) {
        observed = given->observed(n, d);
        if (observed && empty) throw DataError("mask marks an empty cell as observed", n, d);
      }
      mask.set(n, d, observed);
      if (!observed) {
        table.set(n, d, kMissingSentinel);
        continue;
      }
      auto value = parse_double(fields[d]);
      if (!value) throw DataError("unparseable cell '" + std::string(fields[d]) + "'", n, d);
      auto why = cell_violation(schema[d], *value);
      if (!why.empty())
        throw DataError(why + ", got '" + std::string(fields[d]) + "' in column '" +
                            schema[d].name + "'",
                        n, d);
      table.set(n, d, *value);
    }
  }
  return {std::move(table), std::move(mask)};
}

Dataset load_dataset(const std::filesystem::path& data_file,
                     const std::filesystem::path& types_file,
                     const std::optional<std::filesystem::path>& mask_file) {
  return load_data(data_file, load_types(types_file), mask_file);
}

std::string format_cell(const ColumnSpec& column, double value) {
  if (column.kind == ColumnKind::Real || column.kind == ColumnKind::PositiveReal) {
    std::ostringstream os;
    write_double(os, value);
    return os.str();
  }
  return std::to_string(static_cast<long long>(value));
}

void write_table(const std::filesystem::path& path, const HeterogeneousTable& table,
                 const MissingMask* mask) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (std::size_t n = 0; n < table.rows(); ++n) {
    for (std::size_t d = 0; d < table.cols(); ++d) {
      if (d) out << ',';
      if (mask && mask->missing(n, d)) continue;
      out << format_cell(table.schema()[d], table.at(n, d));
    }
    out << '\n';
  }
}

void write_types(const std::filesystem::path& path, const Schema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& c : schema.columns())
    out << c.name << ',' << kind_name(c.kind) << ',' << c.cardinality << '\n';
}

void write_mask(const std::filesystem::path& path, const MissingMask& mask) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (std::size_t n = 0; n < mask.rows(); ++n) {
    for (std::size_t d = 0; d < mask.cols(); ++d) {
      if (d) out << ',';
      out << (mask.observed(n, d) ? '1' : '0');
    }
    out << '\n';
  }
}

NormalizationStats NormalizationStats::identity(const Schema& schema) {
  NormalizationStats stats;
  for (const auto& c : schema.columns()) {
    if (is_nominal(c.kind)) {
      stats.columns.emplace_back();
    } else {
      stats.columns.emplace_back(ColumnStats{0.0, 1.0, stat_domain(c.kind)});
    }
  }
  return stats;
}

StatDomain stat_domain(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::PositiveReal: return StatDomain::Log;
    case ColumnKind::Count: return StatDomain::Log1p;
    default: return StatDomain::Raw;
  }
}

double to_stat_domain(StatDomain domain, double value) {
  switch (domain) {
    case StatDomain::Raw: return value;
    case StatDomain::Log: return std::log(value);
    case StatDomain::Log1p: return std::log1p(value);
  }
  return value;
}

NormalizationStats fit_normalization(const HeterogeneousTable& table, const MissingMask& mask,
                                     std::span<const std::size_t> rows) {
  if (rows.empty()) throw ConfigError("fit_normalization needs at least one row");
  NormalizationStats stats;
  const auto& schema = table.schema();
  for (std::size_t d = 0; d < schema.size(); ++d) {
    if (is_nominal(schema[d].kind)) {
      stats.columns.emplace_back();
      continue;
    }
    const auto domain = stat_domain(schema[d].kind);
    double sum = 0.0;
    std::size_t count = 0;
    for (auto n : rows)
      if (mask.observed(n, d)) {
        sum += to_stat_domain(domain, table.at(n, d));
        ++count;
      }
    ColumnStats cs{0.0, 1.0, domain};
    if (count > 0) {
      const double mean = sum / static_cast<double>(count);
      double ss = 0.0;
      for (auto n : rows)
        if (mask.observed(n, d)) {
          const double dev = to_stat_domain(domain, table.at(n, d)) - mean;
          ss += dev * dev;
        }
      cs.shift = mean;
      cs.scale = std::max(std::sqrt(ss / static_cast<double>(count)), kScaleFloor);
    }
    stats.columns.emplace_back(cs);
  }
  return stats;
}

NormalizationStats fit_normalization(const HeterogeneousTable& table, const MissingMask& mask) {
  auto rows = all_rows(table.rows());
  return fit_normalization(table, mask, rows);
}

EncodedLayout::EncodedLayout(const Schema& schema) {
  for (const auto& c : schema.columns()) {
    const std::size_t w = is_nominal(c.kind) ? c.cardinality : 1;
    ranges_.push_back({width_, w});
    width_ += w;
  }
}

EncodedBatch encode_inputs(const HeterogeneousTable& table, const MissingMask& mask,
                           const NormalizationStats& stats, std::span<const std::size_t> rows) {
  const auto& schema = table.schema();
  EncodedLayout layout(schema);
  EncodedBatch batch;
  batch.rows = rows.size();
  batch.width = layout.width();
  batch.values.assign(batch.rows * batch.width, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto n = rows[r];
    double* out = batch.values.data() + r * batch.width;
    for (std::size_t d = 0; d < schema.size(); ++d) {
      if (!mask.observed(n, d)) continue;
      const auto& slot = layout[d];
      const double x = table.at(n, d);
      switch (schema[d].kind) {
        case ColumnKind::Real:
        case ColumnKind::PositiveReal:
        case ColumnKind::Count: {
          const auto& cs = *stats.columns.at(d);
          out[slot.offset] = (to_stat_domain(cs.domain, x) - cs.shift) / cs.scale;
          break;
        }
        case ColumnKind::Categorical:
          out[slot.offset + static_cast<std::size_t>(x)] = 1.0;
          break;
        case ColumnKind::Ordinal:
          for (std::size_t k = 0; k <= static_cast<std::size_t>(x); ++k) out[slot.offset + k] = 1.0;
          break;
      }
    }
  }
  return batch;
}

std::size_t decode_nominal_slots(ColumnKind kind, std::span<const double> slots) {
  if (kind == ColumnKind::Categorical)
    return static_cast<std::size_t>(std::max_element(slots.begin(), slots.end()) - slots.begin());
  const auto ones = static_cast<std::size_t>(std::count(slots.begin(), slots.end(), 1.0));
  return ones == 0 ? 0 : ones - 1;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace hivae
