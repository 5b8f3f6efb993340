#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hivae {

enum class ColumnKind { Real, PositiveReal, Count, Categorical, Ordinal };

std::string_view kind_name(ColumnKind kind);          // "real", "pos", ...
std::optional<ColumnKind> parse_kind(std::string_view text);
bool is_nominal(ColumnKind kind);
inline bool is_numeric(ColumnKind kind) { return !is_nominal(kind); }

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Real;
  std::size_t cardinality = 0;  // R for nominal kinds, 0 otherwise

  bool operator==(const ColumnSpec&) const = default;
};

/// Ordered attribute list; the column order is the canonical attribute index.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSpec> columns);  // validates

  std::size_t size() const { return columns_.size(); }
  const ColumnSpec& operator[](std::size_t d) const { return columns_[d]; }
  const std::vector<ColumnSpec>& columns() const { return columns_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// FNV-1a over the canonical "name,kind,R" lines.
  std::uint64_t fingerprint() const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<ColumnSpec> columns_;
};

/// Per-cell observed flags (true = observed). O_n and M_n partition row n.
class MissingMask {
 public:
  MissingMask() = default;
  MissingMask(std::size_t rows, std::size_t cols, bool observed = true)
      : rows_(rows), cols_(cols), observed_(rows * cols, observed ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool observed(std::size_t n, std::size_t d) const { return observed_[n * cols_ + d] != 0; }
  bool missing(std::size_t n, std::size_t d) const { return !observed(n, d); }
  void set(std::size_t n, std::size_t d, bool observed) {
    observed_[n * cols_ + d] = observed ? 1 : 0;
  }
  std::size_t count_missing() const;

  bool operator==(const MissingMask&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> observed_;
};

/// N x D cells stored as doubles; nominal cells hold integral class indices.
/// Cells flagged missing by a companion mask hold an unspecified value that
/// must only be read through that mask.
class HeterogeneousTable {
 public:
  HeterogeneousTable() = default;
  HeterogeneousTable(Schema schema, std::size_t rows)
      : schema_(std::move(schema)), rows_(rows), cells_(rows_ * schema_.size(), 0.0) {}

  const Schema& schema() const { return schema_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return schema_.size(); }
  double at(std::size_t n, std::size_t d) const { return cells_[n * cols() + d]; }
  void set(std::size_t n, std::size_t d, double v) { cells_[n * cols() + d] = v; }
  std::span<const double> row(std::size_t n) const {
    return {cells_.data() + n * cols(), cols()};
  }

  bool operator==(const HeterogeneousTable&) const = default;

 private:
  Schema schema_;
  std::size_t rows_ = 0;
  std::vector<double> cells_;
};

/// Checks one observed cell against its column kind; empty string if valid.
std::string cell_violation(const ColumnSpec& column, double value);

/// Throws DataError naming the first observed cell that violates its kind.
void validate(const HeterogeneousTable& table, const MissingMask& mask);

/// Value stored in masked cells on load.
inline constexpr double kMissingSentinel = 0.0;

struct Dataset {
  HeterogeneousTable table;
  MissingMask mask;
};

Schema load_types(const std::filesystem::path& types_file);
Dataset load_dataset(const std::filesystem::path& data_file,
                     const std::filesystem::path& types_file,
                     const std::optional<std::filesystem::path>& mask_file = std::nullopt);
/// Same as load_dataset but against an already-known schema.
Dataset load_data(const std::filesystem::path& data_file, const Schema& schema,
                  const std::optional<std::filesystem::path>& mask_file = std::nullopt);
MissingMask load_mask(const std::filesystem::path& mask_file, std::size_t rows, std::size_t cols);

/// Shortest round-trip decimal text of a cell (integers for Count/nominal).
std::string format_cell(const ColumnSpec& column, double value);
/// Writes the data CSV; masked cells (when a mask is given) become empty fields.
void write_table(const std::filesystem::path& path, const HeterogeneousTable& table,
                 const MissingMask* mask = nullptr);
void write_types(const std::filesystem::path& path, const Schema& schema);
void write_mask(const std::filesystem::path& path, const MissingMask& mask);

// --- normalization -----------------------------------------------------------

/// Domain the shift/scale apply to.
enum class StatDomain { Raw, Log, Log1p };

inline constexpr double kScaleFloor = 1e-3;

struct ColumnStats {
  double shift = 0.0;
  double scale = 1.0;
  StatDomain domain = StatDomain::Raw;

  bool operator==(const ColumnStats&) const = default;
};

/// Shift/scale per numeric column; nominal columns carry no stats.
struct NormalizationStats {
  std::vector<std::optional<ColumnStats>> columns;

  /// (0, 1) for every numeric column: the "normalization off" setting.
  static NormalizationStats identity(const Schema& schema);

  bool operator==(const NormalizationStats&) const = default;
};

StatDomain stat_domain(ColumnKind kind);
/// Encoder-side transform of a numeric value: x, ln x or ln(1+x).
double to_stat_domain(StatDomain domain, double value);

NormalizationStats fit_normalization(const HeterogeneousTable& table, const MissingMask& mask,
                                     std::span<const std::size_t> rows);
/// fit_normalization over every row.
NormalizationStats fit_normalization(const HeterogeneousTable& table, const MissingMask& mask);

// --- encoder input -----------------------------------------------------------

struct SlotRange {
  std::size_t offset = 0;
  std::size_t width = 0;
};

/// Column -> slot range of the encoder input.
class EncodedLayout {
 public:
  EncodedLayout() = default;
  explicit EncodedLayout(const Schema& schema);
  std::size_t width() const { return width_; }
  const SlotRange& operator[](std::size_t d) const { return ranges_[d]; }
  std::size_t size() const { return ranges_.size(); }

 private:
  std::vector<SlotRange> ranges_;
  std::size_t width_ = 0;
};

/// Zero-filled normalized encoder input for a set of rows (row-major).
struct EncodedBatch {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  bool operator==(const EncodedBatch&) const = default;
};

EncodedBatch encode_inputs(const HeterogeneousTable& table, const MissingMask& mask,
                           const NormalizationStats& stats, std::span<const std::size_t> rows);

/// Inverse of the one-hot / thermometer slot encoding of an observed nominal cell.
std::size_t decode_nominal_slots(ColumnKind kind, std::span<const double> slots);

std::vector<std::size_t> all_rows(std::size_t n);

}  // namespace hivae
