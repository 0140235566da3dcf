#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "delelstm/data.hpp"
#include "delelstm/error.hpp"
#include "delelstm/format.hpp"
#include "delelstm/graph.hpp"
#include "delelstm/inference.hpp"
#include "delelstm/model.hpp"
#include "delelstm/ops.hpp"

namespace delelstm {

struct GridSpec {
  std::vector<std::size_t> batch_sizes{32, 64, 128};
  std::vector<double> learning_rates{0.05, 0.01, 0.001};
  std::vector<std::size_t> hidden_sizes{32, 64, 128};

  std::size_t cells() const { return batch_sizes.size() * learning_rates.size() * hidden_sizes.size(); }
};

struct TrainConfig {
  ModelKind model = ModelKind::Delelstm;
  std::size_t hidden = 32;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  double lambda = kDefaultRidgeLambda;
  std::uint64_t seed = 0;
  std::size_t warmup_steps = 1;
  double clip_norm = 5.0;
  double train_fraction = 0.75;
  double val_fraction = 0.15;
  std::size_t repeats = 5;
  std::size_t threads = 1;
  GridSpec grid;

  void validate(std::size_t window = 0) const {
    if (hidden < 1) fail(ErrorCode::InvalidConfig, "hidden size must be at least 1");
    if (batch_size < 1) fail(ErrorCode::InvalidConfig, "batch size must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail(ErrorCode::InvalidConfig, "learning rate must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorCode::InvalidConfig, "lambda must be non-negative");
    if (!(clip_norm > 0.0)) fail(ErrorCode::InvalidConfig, "clip norm must be positive");
    if (repeats < 1) fail(ErrorCode::InvalidConfig, "repeats must be at least 1");
    if (train_fraction <= 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0 + 1e-12) {
      fail(ErrorCode::InvalidConfig, "split fractions must be positive and sum to at most 1");
    }
    if (window && warmup_steps >= window) fail(ErrorCode::InvalidConfig, "warmup must leave at least one step");
  }
};

// --- loss and metrics --------------------------------------------------------------

inline double mse_loss(std::span<const double> y_hat, std::span<const double> y) {
  if (y_hat.size() != y.size()) fail(ErrorCode::ShapeMismatch, "prediction and target lengths differ");
  if (y.empty()) fail(ErrorCode::EmptySequence, "no predicted timesteps");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
  return s / static_cast<double>(y.size());
}

/// MSE over timesteps t >= warmup of a batch; y is [B x T].
inline Var sequence_loss(Graph& g, const std::vector<Var>& predictions, const Tensor& y, std::size_t warmup) {
  if (warmup >= predictions.size()) fail(ErrorCode::EmptySequence, "warmup covers the whole sequence");
  const std::size_t batch = y.dim(0), steps = y.dim(1);
  if (steps != predictions.size()) fail(ErrorCode::ShapeMismatch, "target steps do not match predictions");
  const std::vector<Var> kept(predictions.begin() + static_cast<std::ptrdiff_t>(warmup), predictions.end());
  Tensor target({batch, steps - warmup});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = warmup; t < steps; ++t) target.at(b, t - warmup) = y.at(b, t);
  return mean(square(sub(concat(kept, 1), g.constant(std::move(target)))));
}

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent, over nonzero targets
  std::size_t count = 0;
  std::size_t mape_excluded = 0;
};

inline Metrics evaluate(std::span<const double> y_hat, std::span<const double> y) {
  if (y_hat.size() != y.size()) fail(ErrorCode::ShapeMismatch, "prediction and target lengths differ");
  if (y.empty()) fail(ErrorCode::EmptySequence, "nothing to evaluate");
  Metrics m;
  m.count = y.size();
  double sq = 0.0, ab = 0.0, pct = 0.0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_hat[i];
    sq += e * e;
    ab += std::abs(e);
    if (y[i] == 0.0) {
      ++m.mape_excluded;
      continue;
    }
    pct += std::abs(e / y[i]);
    ++pct_n;
  }
  if (pct_n == 0) fail(ErrorCode::AllZeroTargets, "MAPE is undefined when every target is zero");
  const double n = static_cast<double>(y.size());
  m.rmse = std::sqrt(sq / n);
  m.mae = ab / n;
  m.mape = 100.0 * pct / static_cast<double>(pct_n);
  return m;
}

// --- optimizer ---------------------------------------------------------------------

/// Scales gradients in place so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g.data()) v *= k;
  }
  return norm;
}

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) fail(ErrorCode::ShapeMismatch, "parameter/gradient count differs");
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros(p->shape()));
        v_.push_back(Tensor::zeros(p->shape()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      require_same_shape(p, grads[k], "adam");
      auto m = m_[k].data(), v = v_[k].data();
      const auto g = grads[k].data();
      auto w = p.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

inline std::vector<Tensor*> parameter_tensors(DelelstmParams& p) {
  std::vector<Tensor*> out;
  for_each_param(p, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

// --- fitting -----------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the initialization
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  DelelstmParams params;  // selected by best validation RMSE
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<Metrics> val_metrics;
};

/// Predictions and targets over steps t >= warmup, in original units.
inline std::pair<std::vector<double>, std::vector<double>> collect_predictions(
    const DelelstmParams& params, const WindowedDataset& ds, std::span<const std::size_t> rows,
    const ForwardOptions& options, std::size_t warmup) {
  const InferenceResult r = run_inference(params, ds.x, rows, options);
  std::vector<double> pred, truth;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t t = warmup; t < ds.steps(); ++t) {
      double p = r.predictions.at(i, t), y = ds.y.at(rows[i], t);
      if (ds.scaler) {
        p = inverse_target(p, *ds.scaler);
        y = inverse_target(y, *ds.scaler);
      }
      pred.push_back(p);
      truth.push_back(y);
    }
  }
  return {std::move(pred), std::move(truth)};
}

inline Metrics evaluate_split(const DelelstmParams& params, const WindowedDataset& ds,
                              std::span<const std::size_t> rows, const TrainConfig& cfg) {
  if (rows.empty()) fail(ErrorCode::EmptyTable, "evaluation split is empty");
  ForwardOptions opt;
  opt.lambda = cfg.lambda;
  const auto [pred, truth] = collect_predictions(params, ds, rows, opt, cfg.warmup_steps);
  for (double p : pred) {
    if (!std::isfinite(p)) fail(ErrorCode::NonFiniteLoss, "model produced a non-finite prediction");
  }
  return evaluate(pred, truth);
}

/// Mean loss and gradients of one minibatch.
inline std::pair<double, std::vector<Tensor>> batch_gradients(const DelelstmParams& params, const WindowedDataset& ds,
                                                              std::span<const std::size_t> rows,
                                                              const TrainConfig& cfg) {
  Graph g;
  const BoundModel model = bind(g, params);
  ForwardOptions opt;
  opt.lambda = cfg.lambda;
  const SequenceVars seq = forward_sequence(g, model, gather_batch(ds.x, rows), opt);
  Tensor y({rows.size(), ds.steps()});
  for (std::size_t b = 0; b < rows.size(); ++b)
    for (std::size_t t = 0; t < ds.steps(); ++t) y.at(b, t) = ds.y.at(rows[b], t);
  const Var loss = sequence_loss(g, seq.predictions, y, cfg.warmup_steps);
  const double value = loss.value().item();
  if (!std::isfinite(value)) fail(ErrorCode::NonFiniteLoss, "training loss became non-finite");
  g.backward(loss);
  std::vector<Tensor> grads;
  for (const Var& v : parameter_vars(model)) grads.push_back(g.grad(v));
  return {value, std::move(grads)};
}

/// Trains on split.train with Adam; the returned parameters are those with
/// the lowest validation RMSE seen (initialization included). Without a
/// validation split the last epoch is returned.
inline FitResult fit(const WindowedDataset& ds, const Split& split, const TrainConfig& cfg) {
  cfg.validate(ds.steps());
  if (split.train.empty()) fail(ErrorCode::EmptyTable, "training split is empty");
  FitResult out;
  DelelstmParams params = init_params(cfg.model, ds.variables(), cfg.hidden, cfg.seed);
  const bool has_val = !split.val.empty();
  auto record = [&](std::size_t epoch, double loss) {
    EpochRecord r{epoch, loss, std::numeric_limits<double>::quiet_NaN()};
    std::optional<Metrics> m;
    if (has_val) {
      m = evaluate_split(params, ds, split.val, cfg);
      r.val_rmse = m->rmse;
    }
    out.history.push_back(r);
    if (epoch == 0 || !has_val || r.val_rmse < out.history[out.best_epoch].val_rmse) {
      out.best_epoch = epoch;
      out.params = params;
      out.val_metrics = m;
    }
  };
  record(0, std::numeric_limits<double>::quiet_NaN());

  Adam adam(cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = split.train;
  const std::vector<Tensor*> tensors = parameter_tensors(params);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      auto [loss, grads] = batch_gradients(params, ds, rows, cfg);
      clip_global_norm(grads, cfg.clip_norm);
      adam.step(tensors, grads);
      total += loss * static_cast<double>(rows.size());
    }
    for (const Tensor* t : tensors) {
      if (!t->all_finite()) fail(ErrorCode::NonFiniteLoss, "parameters became non-finite");
    }
    record(epoch, total / static_cast<double>(order.size()));
  }
  return out;
}

// --- parallel jobs, grid search and repeats -------------------------------------------------

/// Runs job(i) for i in [0, n) on up to `threads` workers. Results must be
/// written by index; ordering is therefore independent of scheduling.
inline void run_jobs(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

inline Summary summarize(std::span<const double> xs) {
  if (xs.empty()) fail(ErrorCode::EmptySequence, "nothing to summarize");
  Summary s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(v / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct RunResult {
  std::uint64_t seed = 0;
  FitResult fit;
  Metrics test;
};

struct RepeatReport {
  std::vector<RunResult> runs;
  Summary rmse, mae, mape;
};

/// Fits `cfg.repeats` models with seeds cfg.seed, cfg.seed+1, ... and
/// evaluates each on split.test.
inline RepeatReport repeat_fits(const WindowedDataset& ds, const Split& split, const TrainConfig& cfg) {
  if (split.test.empty()) fail(ErrorCode::EmptyTable, "test split is empty");
  RepeatReport rep;
  rep.runs.resize(cfg.repeats);
  std::vector<std::optional<Error>> errors(cfg.repeats);
  run_jobs(cfg.repeats, cfg.threads, [&](std::size_t i) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + i;
    try {
      rep.runs[i].seed = c.seed;
      rep.runs[i].fit = fit(ds, split, c);
      rep.runs[i].test = evaluate_split(rep.runs[i].fit.params, ds, split.test, c);
    } catch (const Error& e) {
      errors[i] = e;
    }
  });
  for (const auto& e : errors)
    if (e) throw *e;
  std::vector<double> r, a, p;
  for (const auto& run : rep.runs) {
    r.push_back(run.test.rmse);
    a.push_back(run.test.mae);
    p.push_back(run.test.mape);
  }
  rep.rmse = summarize(r);
  rep.mae = summarize(a);
  rep.mape = summarize(p);
  return rep;
}

struct GridCell {
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  std::size_t hidden = 0;
  std::optional<Metrics> val;  // empty when the cell failed
  std::optional<ErrorCode> error;
  std::string message;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  TrainConfig best_config;
};

/// Trains every grid cell with cfg.seed and ranks by validation RMSE.
/// Failed cells (for example NonFiniteLoss) are flagged, not fatal.
inline GridResult grid_search(const WindowedDataset& ds, const Split& split, const TrainConfig& cfg) {
  const GridSpec& grid = cfg.grid;
  if (grid.cells() == 0) fail(ErrorCode::InvalidConfig, "grid is empty");
  if (split.val.empty()) fail(ErrorCode::InvalidConfig, "grid search needs a validation split");
  GridResult res;
  for (std::size_t b : grid.batch_sizes)
    for (double lr : grid.learning_rates)
      for (std::size_t h : grid.hidden_sizes) res.cells.push_back({b, lr, h, std::nullopt, std::nullopt, {}});
  run_jobs(res.cells.size(), cfg.threads, [&](std::size_t i) {
    GridCell& cell = res.cells[i];
    TrainConfig c = cfg;
    c.batch_size = cell.batch_size;
    c.learning_rate = cell.learning_rate;
    c.hidden = cell.hidden;
    try {
      cell.val = fit(ds, split, c).val_metrics;
    } catch (const Error& e) {
      cell.error = e.code();
      cell.message = e.what();
    }
  });
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    if (!res.cells[i].val) continue;
    if (!best || res.cells[i].val->rmse < res.cells[*best].val->rmse) best = i;
  }
  if (!best) fail(ErrorCode::NonFiniteLoss, "every grid cell failed");
  res.best = *best;
  res.best_config = cfg;
  res.best_config.batch_size = res.cells[*best].batch_size;
  res.best_config.learning_rate = res.cells[*best].learning_rate;
  res.best_config.hidden = res.cells[*best].hidden;
  return res;
}

}  // namespace delelstm
