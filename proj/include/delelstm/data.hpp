#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "delelstm/error.hpp"
#include "delelstm/format.hpp"
#include "delelstm/interpretation.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

struct CsvSchema {
  std::string target;
  std::string timestamp;  // empty: auto-detect date/time/timestamp/datetime headers
  std::vector<std::string> drop_columns;
};

struct RawTable {
  std::vector<std::string> column_names;
  Tensor rows;  // [N x C]
  std::vector<std::string> timestamps;
  std::string target;
  std::size_t target_index = 0;
  std::size_t dropped_rows = 0;
  // Labels of integer-encoded text columns, code = position.
  std::map<std::string, std::vector<std::string>> categories;

  std::size_t row_count() const { return rows.empty() ? 0 : rows.dim(0); }
  std::size_t column_count() const { return column_names.size(); }
  double value(std::size_t r, const std::string& column) const;
  std::size_t column_index(const std::string& column) const {
    const auto it = std::find(column_names.begin(), column_names.end(), column);
    if (it == column_names.end()) fail(ErrorCode::MissingTarget, "no column named '" + column + "'");
    return static_cast<std::size_t>(it - column_names.begin());
  }
};

inline double RawTable::value(std::size_t r, const std::string& column) const {
  return rows.at(r, column_index(column));
}

namespace detail {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool is_missing(std::string_view s) {
  const std::string t = lower(std::string(trim(s)));
  return t.empty() || t == "na" || t == "nan" || t == "null" || t == "n/a" || t == "?";
}

}  // namespace detail

inline RawTable parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorCode::EmptyTable, "no header row");
  for (auto& h : header) h = std::string(trim(h));

  const auto target_it = std::find(header.begin(), header.end(), schema.target);
  if (schema.target.empty() || target_it == header.end()) {
    fail(ErrorCode::MissingTarget, "target column '" + schema.target + "' not found in header");
  }
  for (const auto& d : schema.drop_columns) {
    if (std::find(header.begin(), header.end(), d) == header.end()) {
      fail(ErrorCode::MissingTarget, "drop column '" + d + "' not found in header");
    }
  }

  std::optional<std::size_t> ts_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string h = detail::lower(header[c]);
    const bool named = !schema.timestamp.empty() && header[c] == schema.timestamp;
    const bool guessed = schema.timestamp.empty() &&
                         (h == "date" || h == "time" || h == "timestamp" || h == "datetime");
    if ((named || guessed) && header[c] != schema.target) {
      ts_col = c;
      break;
    }
  }
  if (!schema.timestamp.empty() && !ts_col) {
    fail(ErrorCode::MissingTarget, "timestamp column '" + schema.timestamp + "' not found in header");
  }

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (ts_col && c == *ts_col) continue;
    if (std::find(schema.drop_columns.begin(), schema.drop_columns.end(), header[c]) != schema.drop_columns.end()) continue;
    keep.push_back(c);
  }

  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                      " fields, found " + std::to_string(fields.size()));
    }
    records.push_back(std::move(fields));
    record_lines.push_back(line_no);
  }
  if (records.empty()) fail(ErrorCode::EmptyTable, "no data rows");

  // A column whose first present value is not numeric is treated as text and
  // integer-encoded by order of first appearance.
  std::vector<bool> text(header.size(), false);
  for (std::size_t c : keep) {
    for (const auto& r : records) {
      if (detail::is_missing(r[c])) continue;
      text[c] = !parse_double(r[c]).has_value();
      break;
    }
  }
  const std::size_t target_col = static_cast<std::size_t>(target_it - header.begin());
  if (text[target_col]) fail(ErrorCode::ParseError, "target column '" + schema.target + "' is not numeric");

  RawTable table;
  table.target = schema.target;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    table.column_names.push_back(header[keep[i]]);
    if (keep[i] == target_col) table.target_index = i;
  }
  std::vector<double> values;
  std::size_t kept = 0;
  std::map<std::size_t, std::map<std::string, double>> codes;
  for (const auto& r : records) {
    std::vector<double> row;
    row.reserve(keep.size());
    bool ok = true;
    for (std::size_t c : keep) {
      if (detail::is_missing(r[c])) {
        ok = false;
        break;
      }
      if (text[c]) {
        row.push_back(std::nan(""));  // resolved below so dropped rows do not allocate codes
        continue;
      }
      const auto v = parse_double(r[c]);
      if (!v || !std::isfinite(*v)) {
        ok = false;
        break;
      }
      row.push_back(*v);
    }
    if (!ok) {
      ++table.dropped_rows;
      continue;
    }
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const std::size_t c = keep[i];
      if (!text[c]) continue;
      const std::string label(trim(r[c]));
      auto& map = codes[c];
      auto [it, inserted] = map.emplace(label, static_cast<double>(map.size()));
      if (inserted) table.categories[header[c]].push_back(label);
      row[i] = it->second;
    }
    values.insert(values.end(), row.begin(), row.end());
    if (ts_col) table.timestamps.emplace_back(trim(r[*ts_col]));
    ++kept;
  }
  if (kept == 0) fail(ErrorCode::EmptyTable, "every row was dropped");
  table.rows = Tensor({kept, keep.size()}, std::move(values));
  return table;
}

inline RawTable load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  return parse_csv(in, schema);
}

inline void write_table_csv(std::ostream& out, const RawTable& table) {
  const bool ts = !table.timestamps.empty();
  if (ts) out << "timestamp,";
  for (std::size_t c = 0; c < table.column_count(); ++c) out << (c ? "," : "") << table.column_names[c];
  out << '\n';
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    if (ts) out << table.timestamps[r] << ',';
    for (std::size_t c = 0; c < table.column_count(); ++c) out << (c ? "," : "") << format_double(table.rows.at(r, c));
    out << '\n';
  }
}

// --- windows -----------------------------------------------------------------

struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;
  double target_mean = 0.0;
  double target_std = 1.0;

  bool operator==(const Scaler&) const = default;
};

struct WindowedDataset {
  Tensor x;  // [N x D x T]
  Tensor y;  // [N x T]; y(n, t) is the target one row after x(n, ., t)
  std::vector<std::string> names;
  std::string target;
  std::size_t window = 0;
  std::size_t stride = 0;
  std::vector<std::size_t> starts;  // table row of each window's first step
  std::optional<Scaler> scaler;     // set once standardized

  std::size_t samples() const { return x.empty() ? 0 : x.dim(0); }
  std::size_t variables() const { return names.size(); }
  std::size_t steps() const { return window; }
};

inline std::size_t window_count(std::size_t rows, std::size_t window, std::size_t stride) {
  return rows < window + 1 ? 0 : (rows - window - 1) / stride + 1;
}

inline WindowedDataset make_windows(const RawTable& table, std::size_t window, std::size_t stride,
                                    bool include_target = true) {
  if (window < 2) fail(ErrorCode::InvalidConfig, "window length must be at least 2");
  if (stride < 1) fail(ErrorCode::InvalidConfig, "stride must be at least 1");
  const std::size_t rows = table.row_count();
  if (rows < window + 1) {
    fail(ErrorCode::TooShort, std::to_string(rows) + " rows cannot fill a window of " + std::to_string(window) +
                                  " plus one target step");
  }
  std::vector<std::size_t> cols;
  WindowedDataset ds;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (c == table.target_index && !include_target) continue;
    cols.push_back(c);
    ds.names.push_back(table.column_names[c]);
  }
  if (cols.empty()) fail(ErrorCode::InvalidConfig, "no input variables left");
  const std::size_t n = window_count(rows, window, stride), d = cols.size();
  ds.target = table.target;
  ds.window = window;
  ds.stride = stride;
  ds.x = Tensor({n, d, window});
  ds.y = Tensor({n, window});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = i * stride;
    ds.starts.push_back(s);
    for (std::size_t t = 0; t < window; ++t) {
      for (std::size_t v = 0; v < d; ++v) ds.x.at(i, v, t) = table.rows.at(s + t, cols[v]);
      ds.y.at(i, t) = table.rows.at(s + t + 1, table.target_index);
    }
  }
  return ds;
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Chronological split by window index: floor(train*N), floor(val*N), rest.
inline Split chronological_split(std::size_t n, double train_fraction = 0.75, double val_fraction = 0.15) {
  if (train_fraction <= 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0 + 1e-12) {
    fail(ErrorCode::InvalidConfig, "split fractions must be positive and sum to at most 1");
  }
  const auto count = [n](double f) {
    return std::min(n, static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t a = count(train_fraction), b = std::min(n - a, count(val_fraction));
  Split s;
  for (std::size_t i = 0; i < n; ++i) (i < a ? s.train : i < a + b ? s.val : s.test).push_back(i);
  return s;
}

/// Population mean/std per input variable and for the target, from the
/// given windows only.
inline Scaler fit_scaler(const WindowedDataset& ds, std::span<const std::size_t> rows) {
  if (rows.empty()) fail(ErrorCode::EmptyTable, "cannot fit a scaler on zero windows");
  const std::size_t d = ds.variables(), steps = ds.steps();
  const double count = static_cast<double>(rows.size() * steps);
  Scaler s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (std::size_t v = 0; v < d; ++v) {
    double m = 0.0;
    for (std::size_t i : rows)
      for (std::size_t t = 0; t < steps; ++t) m += ds.x.at(i, v, t);
    m /= count;
    double var = 0.0;
    for (std::size_t i : rows)
      for (std::size_t t = 0; t < steps; ++t) var += (ds.x.at(i, v, t) - m) * (ds.x.at(i, v, t) - m);
    s.mean[v] = m;
    s.std[v] = std::sqrt(var / count);
    if (!(s.std[v] > 1e-12 * std::max(1.0, std::abs(m)))) {
      fail(ErrorCode::ZeroVariance, "variable '" + ds.names[v] + "' is constant on the training split");
    }
  }
  double m = 0.0, var = 0.0;
  for (std::size_t i : rows)
    for (std::size_t t = 0; t < steps; ++t) m += ds.y.at(i, t);
  m /= count;
  for (std::size_t i : rows)
    for (std::size_t t = 0; t < steps; ++t) var += (ds.y.at(i, t) - m) * (ds.y.at(i, t) - m);
  s.target_mean = m;
  s.target_std = std::sqrt(var / count);
  if (!(s.target_std > 1e-12 * std::max(1.0, std::abs(m)))) {
    fail(ErrorCode::ZeroVariance, "target '" + ds.target + "' is constant on the training split");
  }
  return s;
}

inline WindowedDataset standardize(WindowedDataset ds, const Scaler& s) {
  if (ds.scaler) fail(ErrorCode::InvalidConfig, "dataset is already standardized");
  if (s.mean.size() != ds.variables()) fail(ErrorCode::DimensionMismatch, "scaler does not match the dataset");
  for (std::size_t i = 0; i < ds.samples(); ++i)
    for (std::size_t v = 0; v < ds.variables(); ++v)
      for (std::size_t t = 0; t < ds.steps(); ++t) ds.x.at(i, v, t) = (ds.x.at(i, v, t) - s.mean[v]) / s.std[v];
  for (auto& y : ds.y.data()) y = (y - s.target_mean) / s.target_std;
  ds.scaler = s;
  return ds;
}

inline double inverse_target(double z, const Scaler& s) { return z * s.target_std + s.target_mean; }

inline Tensor inverse_target(Tensor z, const Scaler& s) {
  for (auto& v : z.data()) v = inverse_target(v, s);
  return z;
}

inline WindowedDataset inverse(WindowedDataset ds) {
  if (!ds.scaler) fail(ErrorCode::InvalidConfig, "dataset is not standardized");
  const Scaler& s = *ds.scaler;
  for (std::size_t i = 0; i < ds.samples(); ++i)
    for (std::size_t v = 0; v < ds.variables(); ++v)
      for (std::size_t t = 0; t < ds.steps(); ++t) ds.x.at(i, v, t) = ds.x.at(i, v, t) * s.std[v] + s.mean[v];
  ds.y = inverse_target(std::move(ds.y), s);
  ds.scaler.reset();
  return ds;
}

// --- synthetic oracles ---------------------------------------------------------

enum class SynthKind { Instant, LongMemory };

inline std::string to_string(SynthKind k) { return k == SynthKind::Instant ? "instant" : "longmem"; }

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "instant") return SynthKind::Instant;
  if (s == "longmem") return SynthKind::LongMemory;
  fail(ErrorCode::InvalidConfig, "unknown synthetic dataset '" + s + "'");
}

/// Flat table of N*T+1 rows: D white-noise inputs x1..xD and a target y.
/// Row r+1 of y depends on inputs up to row r. For LongMemory the running
/// mean restarts every T rows so each stride-T window sees its own history.
inline RawTable synth_table(SynthKind kind, std::uint64_t seed, std::size_t n, std::size_t d, std::size_t t,
                            std::size_t driver) {
  if (d == 0 || t < 2 || n == 0) fail(ErrorCode::InvalidConfig, "synthetic data needs N >= 1, D >= 1, T >= 2");
  if (driver >= d) fail(ErrorCode::InvalidConfig, "driver index out of range");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t rows = n * t + 1;
  RawTable table;
  for (std::size_t v = 0; v < d; ++v) table.column_names.push_back("x" + std::to_string(v + 1));
  table.column_names.push_back("y");
  table.target = "y";
  table.target_index = d;
  table.rows = Tensor({rows, d + 1});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t v = 0; v < d; ++v) table.rows.at(r, v) = normal(rng);
  double running = 0.0;
  table.rows.at(0, d) = 0.1 * normal(rng);
  for (std::size_t r = 0; r + 1 < rows; ++r) {
    const double x = table.rows.at(r, driver);
    double signal = x;
    if (kind == SynthKind::LongMemory) {
      const std::size_t k = r % t;
      if (k == 0) running = 0.0;
      running += x;
      signal = running / static_cast<double>(k + 1);
    }
    table.rows.at(r + 1, d) = 0.9 * signal + 0.1 * normal(rng);
  }
  return table;
}

/// Windowed synthetic dataset; the target column is not one of the inputs.
inline WindowedDataset synth_dataset(SynthKind kind, std::uint64_t seed, std::size_t n, std::size_t d,
                                     std::size_t t, std::size_t driver) {
  return make_windows(synth_table(kind, seed, n, d, t, driver), t, t, false);
}

inline WindowedDataset synth_instant(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t t,
                                     std::size_t driver) {
  return synth_dataset(SynthKind::Instant, seed, n, d, t, driver);
}

inline WindowedDataset synth_longmem(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t t,
                                     std::size_t driver) {
  return synth_dataset(SynthKind::LongMemory, seed, n, d, t, driver);
}

// --- report export ---------------------------------------------------------------

/// One row per timestep: "time,<names...>". Undefined entries are written as nan.
inline void write_measure_csv(std::ostream& out, const Tensor& measure, const std::vector<std::string>& names) {
  if (measure.rank() != 2 || measure.dim(1) != names.size()) {
    fail(ErrorCode::DimensionMismatch, "measure columns do not match variable names");
  }
  out << "time";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < measure.dim(0); ++t) {
    out << t + 1;
    for (std::size_t d = 0; d < names.size(); ++d) out << ',' << format_double(measure.at(t, d));
    out << '\n';
  }
}

inline void write_summary(std::ostream& out, const ImportanceReport& report) {
  out << "name,global_importance,rank\n";
  const auto order = report.ranking();
  std::vector<std::size_t> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  for (std::size_t d = 0; d < report.variables(); ++d) {
    out << report.variable_names[d] << ',' << format_double(report.global[d]) << ',' << rank[d] << '\n';
  }
}

}  // namespace delelstm
