#pragma once

// Importance measures derived from the decomposition weights.
//
// Per timestep the 2D raw coefficients are made absolute and L1-normalized
// jointly, so that sum_d (alpha~_t^d + beta~_t^d) = 1. From the normalized
// pair of each variable:
//   instantaneous importance  In_t^d = beta~ / (alpha~ + beta~)
//   long-term effect          1 - In_t^d
//   temporal weight           sqrt(alpha~^2 + beta~^2)
//   global importance         Gl^d = mean over t of the temporal weight
// Timesteps whose raw weights are all zero carry no information and are
// left out of the Gl average.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "delelstm/decomposition.hpp"
#include "delelstm/error.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

inline constexpr double kDegenerateThreshold = 1e-12;

struct NormalizedWeights {
  Tensor alpha;  // [T x D]
  Tensor beta;   // [T x D]
  std::vector<bool> valid;  // false for skipped all-zero timesteps

  std::size_t steps() const { return alpha.dim(0); }
  std::size_t variables() const { return alpha.dim(1); }
};

/// L1-normalizes |alpha|, |beta| jointly per timestep. With skip_degenerate,
/// all-zero timesteps are zero-filled and marked invalid instead of raising
/// DegenerateWeights.
inline NormalizedWeights normalize_weights(std::span<const DecompositionWeights> raw,
                                           bool skip_degenerate = false) {
  if (raw.empty()) fail(ErrorCode::EmptySequence, "no timesteps to normalize");
  const std::size_t steps = raw.size(), vars = raw.front().alpha.size();
  NormalizedWeights out{Tensor::zeros({steps, vars}), Tensor::zeros({steps, vars}),
                        std::vector<bool>(steps, true)};
  for (std::size_t t = 0; t < steps; ++t) {
    const auto& w = raw[t];
    if (w.alpha.size() != vars || w.beta.size() != vars) {
      fail(ErrorCode::ShapeMismatch, "timestep " + std::to_string(t) + " has inconsistent weight length");
    }
    double total = 0.0;
    for (std::size_t d = 0; d < vars; ++d) total += std::abs(w.alpha[d]) + std::abs(w.beta[d]);
    if (!(total >= kDegenerateThreshold)) {
      if (!skip_degenerate) {
        fail(ErrorCode::DegenerateWeights, "all weights vanish at timestep " + std::to_string(t));
      }
      out.valid[t] = false;
      continue;
    }
    for (std::size_t d = 0; d < vars; ++d) {
      out.alpha.at(t, d) = std::abs(w.alpha[d]) / total;
      out.beta.at(t, d) = std::abs(w.beta[d]) / total;
    }
  }
  return out;
}

inline double instantaneous_importance(double alpha_tilde, double beta_tilde) {
  if (alpha_tilde < 0.0 || beta_tilde < 0.0) {
    fail(ErrorCode::InvalidConfig, "normalized weights must be non-negative");
  }
  const double total = alpha_tilde + beta_tilde;
  if (!(total > kDegenerateThreshold)) {
    fail(ErrorCode::DegeneratePair, "variable contributed nothing at this timestep");
  }
  return beta_tilde / total;
}

inline double long_term_effect(double alpha_tilde, double beta_tilde) {
  return 1.0 - instantaneous_importance(alpha_tilde, beta_tilde);
}

inline Tensor temporal_weight(const NormalizedWeights& norm) {
  Tensor out({norm.steps(), norm.variables()});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(norm.alpha[i], norm.beta[i]);
  return out;
}

/// Mean temporal weight over valid timesteps, per variable.
inline Tensor global_importance(const NormalizedWeights& norm) {
  const std::size_t steps = norm.steps(), vars = norm.variables();
  if (steps == 0) fail(ErrorCode::EmptySequence, "no timesteps");
  Tensor gl({vars});
  std::size_t used = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!norm.valid[t]) continue;
    ++used;
    for (std::size_t d = 0; d < vars; ++d) gl[d] += std::hypot(norm.alpha.at(t, d), norm.beta.at(t, d));
  }
  if (used > 0)
    for (auto& v : gl.data()) v /= static_cast<double>(used);
  return gl;
}

struct ImportanceReport {
  Tensor instantaneous;    // [T x D]; NaN where a variable's pair is degenerate
  Tensor long_term;        // [T x D]
  Tensor temporal_weight;  // [T x D]
  Tensor global;           // [D]
  std::vector<std::string> variable_names;
  std::size_t degenerate_steps = 0;
  std::size_t samples = 1;

  std::size_t steps() const { return instantaneous.dim(0); }
  std::size_t variables() const { return global.size(); }

  /// Variable indices ordered by descending global importance (ties keep
  /// the original order).
  std::vector<std::size_t> ranking() const {
    std::vector<std::size_t> idx(global.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return global[a] > global[b]; });
    return idx;
  }

  /// Mean In_t^d over timesteps t >= from_step, ignoring undefined entries.
  double mean_instantaneous(std::size_t variable, std::size_t from_step = 0) const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t t = from_step; t < steps(); ++t) {
      const double v = instantaneous.at(t, variable);
      if (std::isnan(v)) continue;
      s += v;
      ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }
};

inline std::vector<std::string> default_variable_names(std::size_t vars) {
  std::vector<std::string> names;
  for (std::size_t d = 0; d < vars; ++d) names.push_back("var" + std::to_string(d + 1));
  return names;
}

inline ImportanceReport build_report(std::span<const DecompositionWeights> raw,
                                     std::vector<std::string> variable_names = {}) {
  const NormalizedWeights norm = normalize_weights(raw, true);
  const std::size_t steps = norm.steps(), vars = norm.variables();
  if (variable_names.empty()) variable_names = default_variable_names(vars);
  if (variable_names.size() != vars) {
    fail(ErrorCode::DimensionMismatch, std::to_string(variable_names.size()) + " names for " +
                                           std::to_string(vars) + " variables");
  }
  ImportanceReport r;
  r.variable_names = std::move(variable_names);
  r.instantaneous = Tensor({steps, vars});
  r.long_term = Tensor({steps, vars});
  r.temporal_weight = temporal_weight(norm);
  r.global = global_importance(norm);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t t = 0; t < steps; ++t) {
    if (!norm.valid[t]) ++r.degenerate_steps;
    for (std::size_t d = 0; d < vars; ++d) {
      const double a = norm.alpha.at(t, d), b = norm.beta.at(t, d);
      if (!norm.valid[t] || !(a + b > kDegenerateThreshold)) {
        r.instantaneous.at(t, d) = nan;
        r.long_term.at(t, d) = nan;
        continue;
      }
      r.instantaneous.at(t, d) = instantaneous_importance(a, b);
      r.long_term.at(t, d) = 1.0 - r.instantaneous.at(t, d);
    }
  }
  return r;
}

/// Averages per-sample reports elementwise; undefined (NaN) entries are
/// skipped, so a cell is NaN only if it is undefined in every sample.
inline ImportanceReport aggregate_reports(std::span<const ImportanceReport> reports) {
  if (reports.empty()) fail(ErrorCode::EmptySequence, "no reports to aggregate");
  const auto& first = reports.front();
  ImportanceReport out;
  out.variable_names = first.variable_names;
  out.samples = 0;
  auto mean_of = [&](auto member) {
    Tensor acc((first.*member).shape());
    std::vector<std::size_t> counts(acc.size(), 0);
    for (const auto& r : reports) {
      const Tensor& t = r.*member;
      require_same_shape(acc, t, "aggregate_reports");
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::isnan(t[i])) continue;
        acc[i] += t[i];
        ++counts[i];
      }
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc[i] = counts[i] ? acc[i] / static_cast<double>(counts[i]) : std::numeric_limits<double>::quiet_NaN();
    return acc;
  };
  out.instantaneous = mean_of(&ImportanceReport::instantaneous);
  out.long_term = out.instantaneous;
  for (auto& v : out.long_term.data()) v = 1.0 - v;
  out.temporal_weight = mean_of(&ImportanceReport::temporal_weight);
  out.global = mean_of(&ImportanceReport::global);
  for (const auto& r : reports) {
    out.degenerate_steps += r.degenerate_steps;
    out.samples += r.samples;
  }
  return out;
}

}  // namespace delelstm
