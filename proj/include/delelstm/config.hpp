#pragma once

// Flat key=value configuration. Blank lines and lines starting with '#' are
// ignored. List values are comma-separated.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "delelstm/checkpoint.hpp"
#include "delelstm/error.hpp"
#include "delelstm/format.hpp"
#include "delelstm/training.hpp"

namespace delelstm {

struct RunConfig {
  TrainConfig train;
  // data
  std::string target;
  std::string timestamp;
  std::vector<std::string> drop_columns;
  std::size_t window = 24;
  std::size_t stride = 0;  // 0: same as window
  bool include_target = true;
  // ablation
  double keep_fraction = 0.5;
  // synthetic data
  std::string synth_kind = "instant";
  std::size_t synth_samples = 500;
  std::size_t synth_variables = 4;
  std::size_t synth_driver = 0;

  std::size_t effective_stride() const { return stride ? stride : window; }
};

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::InvalidConfig, "config line " + std::to_string(n) + ": expected key=value");
    }
    out.emplace_back(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))));
  }
  return out;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidConfig, "cannot open config '" + path + "'");
  return parse_key_values(in);
}

namespace detail {

inline double config_double(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) fail(ErrorCode::InvalidConfig, key + ": '" + v + "' is not a number");
  return *d;
}

inline std::uint64_t config_uint(const std::string& key, const std::string& v) {
  const double d = config_double(key, v);
  if (d < 0.0 || d != std::floor(d) || d > 9.007199254740992e15) {
    fail(ErrorCode::InvalidConfig, key + ": '" + v + "' is not a non-negative integer");
  }
  return static_cast<std::uint64_t>(d);
}

inline bool config_bool(const std::string& key, const std::string& v) {
  const std::string l = lower(v);
  if (l == "true" || l == "1" || l == "yes") return true;
  if (l == "false" || l == "0" || l == "no") return false;
  fail(ErrorCode::InvalidConfig, key + ": '" + v + "' is not a boolean");
}

inline std::vector<std::string> config_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  for (const auto& f : split_csv_line(v)) out.emplace_back(trim(f));
  return out;
}

template <class T, class Parse>
std::vector<T> config_list_of(const std::string& key, const std::string& v, Parse parse) {
  std::vector<T> out;
  for (const auto& item : config_list(v)) out.push_back(static_cast<T>(parse(key, item)));
  if (out.empty()) fail(ErrorCode::InvalidConfig, key + ": empty list");
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      s += xs[i];
    } else if constexpr (std::is_floating_point_v<T>) {
      s += format_double(xs[i]);
    } else {
      s += std::to_string(xs[i]);
    }
  }
  return s;
}

}  // namespace detail

inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  TrainConfig& t = c.train;
  if (key == "model") t.model = parse_model_kind(value);
  else if (key == "hidden") t.hidden = config_uint(key, value);
  else if (key == "batch_size") t.batch_size = config_uint(key, value);
  else if (key == "learning_rate") t.learning_rate = config_double(key, value);
  else if (key == "epochs") t.epochs = config_uint(key, value);
  else if (key == "lambda") t.lambda = config_double(key, value);
  else if (key == "seed") t.seed = config_uint(key, value);
  else if (key == "warmup_steps") t.warmup_steps = config_uint(key, value);
  else if (key == "clip_norm") t.clip_norm = config_double(key, value);
  else if (key == "train_fraction") t.train_fraction = config_double(key, value);
  else if (key == "val_fraction") t.val_fraction = config_double(key, value);
  else if (key == "repeats") t.repeats = config_uint(key, value);
  else if (key == "threads") t.threads = config_uint(key, value);
  else if (key == "grid.batch_size") t.grid.batch_sizes = config_list_of<std::size_t>(key, value, config_uint);
  else if (key == "grid.learning_rate") t.grid.learning_rates = config_list_of<double>(key, value, config_double);
  else if (key == "grid.hidden") t.grid.hidden_sizes = config_list_of<std::size_t>(key, value, config_uint);
  else if (key == "target") c.target = value;
  else if (key == "timestamp") c.timestamp = value;
  else if (key == "drop_columns") c.drop_columns = config_list(value);
  else if (key == "window") c.window = config_uint(key, value);
  else if (key == "stride") c.stride = config_uint(key, value);
  else if (key == "include_target") c.include_target = config_bool(key, value);
  else if (key == "keep_fraction") c.keep_fraction = config_double(key, value);
  else if (key == "synth.kind") c.synth_kind = value;
  else if (key == "synth.samples") c.synth_samples = config_uint(key, value);
  else if (key == "synth.variables") c.synth_variables = config_uint(key, value);
  else if (key == "synth.driver") c.synth_driver = config_uint(key, value);
  else fail(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
}

inline void apply_settings(RunConfig& c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) apply_setting(c, k, v);
}

/// Every setting, in a fixed order; apply_settings on the result reproduces c.
inline KeyValues to_key_values(const RunConfig& c) {
  using detail::join;
  const TrainConfig& t = c.train;
  return {
      {"model", to_string(t.model)},
      {"hidden", std::to_string(t.hidden)},
      {"batch_size", std::to_string(t.batch_size)},
      {"learning_rate", format_double(t.learning_rate)},
      {"epochs", std::to_string(t.epochs)},
      {"lambda", format_double(t.lambda)},
      {"seed", std::to_string(t.seed)},
      {"warmup_steps", std::to_string(t.warmup_steps)},
      {"clip_norm", format_double(t.clip_norm)},
      {"train_fraction", format_double(t.train_fraction)},
      {"val_fraction", format_double(t.val_fraction)},
      {"repeats", std::to_string(t.repeats)},
      {"grid.batch_size", join(t.grid.batch_sizes)},
      {"grid.learning_rate", join(t.grid.learning_rates)},
      {"grid.hidden", join(t.grid.hidden_sizes)},
      {"target", c.target},
      {"timestamp", c.timestamp},
      {"drop_columns", join(c.drop_columns)},
      {"window", std::to_string(c.window)},
      {"stride", std::to_string(c.stride)},
      {"include_target", c.include_target ? "true" : "false"},
      {"keep_fraction", format_double(c.keep_fraction)},
  };
}

inline void validate(const RunConfig& c) {
  c.train.validate(c.window);
  if (c.window < 2) fail(ErrorCode::InvalidConfig, "window must be at least 2");
  if (!(c.keep_fraction > 0.0 && c.keep_fraction <= 1.0)) {
    fail(ErrorCode::InvalidConfig, "keep_fraction must lie in (0, 1]");
  }
}

}  // namespace delelstm
