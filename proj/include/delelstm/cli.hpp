#pragma once

// Command-line front end: synth, train, evaluate, explain, ablate.
// run_cli returns the process exit code: 0 success, 1 configuration error,
// 2 data error, 3 training divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "delelstm/checkpoint.hpp"
#include "delelstm/config.hpp"
#include "delelstm/data.hpp"
#include "delelstm/error.hpp"
#include "delelstm/inference.hpp"
#include "delelstm/interpretation.hpp"
#include "delelstm/training.hpp"

namespace delelstm {

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnderdeterminedWithoutRidge:
      return 1;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::SolveFailure:
      return 3;
    default:
      return 2;
  }
}

/// Number of variables kept by the ablation: ceil(fraction * D), at least 1.
inline std::size_t kept_variable_count(std::size_t vars, double fraction) {
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(vars) - 1e-9));
  return std::clamp<std::size_t>(k, 1, vars);
}

/// Restricts a dataset to the given input variables (in the given order).
inline WindowedDataset select_variables(const WindowedDataset& ds, const std::vector<std::size_t>& keep) {
  if (ds.scaler) fail(ErrorCode::InvalidConfig, "select variables before standardizing");
  WindowedDataset out = ds;
  out.names.clear();
  out.x = Tensor({ds.samples(), keep.size(), ds.steps()});
  for (std::size_t v = 0; v < keep.size(); ++v) {
    if (keep[v] >= ds.variables()) fail(ErrorCode::DimensionMismatch, "variable index out of range");
    out.names.push_back(ds.names[keep[v]]);
    for (std::size_t i = 0; i < ds.samples(); ++i)
      for (std::size_t t = 0; t < ds.steps(); ++t) out.x.at(i, v, t) = ds.x.at(i, keep[v], t);
  }
  return out;
}

struct PreparedData {
  WindowedDataset raw;
  Split split;
  Scaler scaler;
  WindowedDataset scaled;
};

inline PreparedData prepare_data(const RunConfig& c, const std::string& path,
                                 const std::optional<Scaler>& fixed_scaler = std::nullopt) {
  if (c.target.empty()) fail(ErrorCode::MissingTarget, "no target column given (use --target)");
  const RawTable table = load_csv(path, {c.target, c.timestamp, c.drop_columns});
  PreparedData p;
  p.raw = make_windows(table, c.window, c.effective_stride(), c.include_target);
  p.split = chronological_split(p.raw.samples(), c.train.train_fraction, c.train.val_fraction);
  p.scaler = fixed_scaler ? *fixed_scaler : fit_scaler(p.raw, p.split.train);
  p.scaled = standardize(p.raw, p.scaler);
  return p;
}

inline ImportanceReport explain_split(const DelelstmParams& params, const WindowedDataset& ds,
                                      std::span<const std::size_t> rows, double lambda) {
  if (params.kind != ModelKind::Delelstm) fail(ErrorCode::InvalidConfig, "a plain LSTM has no decomposition to explain");
  if (rows.empty()) fail(ErrorCode::EmptyTable, "no windows to explain");
  ForwardOptions opt;
  opt.lambda = lambda;
  const InferenceResult r = run_inference(params, ds.x, rows, opt);
  std::vector<ImportanceReport> reports;
  reports.reserve(rows.size());
  for (const auto& w : r.weights) reports.push_back(build_report(w, ds.names));
  return aggregate_reports(reports);
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  body(out);
  if (!out) fail(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create '" + dir + "': " + ec.message());
  return dir;
}

inline void write_repeat_tables(const std::filesystem::path& dir, const RepeatReport& rep) {
  write_file(dir / "metrics.csv", [&](std::ostream& o) {
    o << "seed,best_epoch,rmse,mae,mape\n";
    for (const auto& r : rep.runs) {
      o << r.seed << ',' << r.fit.best_epoch << ',' << format_double(r.test.rmse) << ','
        << format_double(r.test.mae) << ',' << format_double(r.test.mape) << '\n';
    }
  });
  write_file(dir / "summary.csv", [&](std::ostream& o) {
    o << "metric,mean,std\n";
    o << "rmse," << format_double(rep.rmse.mean) << ',' << format_double(rep.rmse.std) << '\n';
    o << "mae," << format_double(rep.mae.mean) << ',' << format_double(rep.mae.std) << '\n';
    o << "mape," << format_double(rep.mape.mean) << ',' << format_double(rep.mape.std) << '\n';
  });
}

inline void print_repeat_summary(std::ostream& out, const RepeatReport& rep) {
  out << "test RMSE " << format_double(rep.rmse.mean) << " +- " << format_double(rep.rmse.std) << '\n';
  out << "test MAE  " << format_double(rep.mae.mean) << " +- " << format_double(rep.mae.std) << '\n';
  out << "test MAPE " << format_double(rep.mape.mean) << "% +- " << format_double(rep.mape.std) << '\n';
}

inline Checkpoint make_checkpoint(const FitResult& fit, const RunConfig& cfg, const PreparedData& data) {
  Checkpoint ck;
  ck.params = fit.params;
  ck.names = data.raw.names;
  ck.target = data.raw.target;
  ck.window = data.raw.window;
  ck.scaler = data.scaler;
  ck.config = to_key_values(cfg);
  ck.history = fit.history;
  return ck;
}

}  // namespace detail

struct CliOptions {
  std::string config;
  std::string data;
  std::string target;
  std::string checkpoint;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  bool grid = false;
  std::optional<double> keep_fraction;
  std::optional<std::size_t> window;
  std::optional<std::size_t> stride;
  std::optional<double> lambda;
  std::vector<std::string> overrides;
};

/// Builds the effective configuration: defaults, then the checkpoint's
/// echo (if any), then --config, then flags, then key=value overrides.
inline RunConfig resolve_config(const CliOptions& o, const Checkpoint* ck) {
  RunConfig c;
  c.train.threads = std::max(1u, std::thread::hardware_concurrency());
  if (ck) apply_settings(c, ck->config);
  if (!o.config.empty()) apply_settings(c, load_key_values(o.config));
  if (!o.target.empty()) c.target = o.target;
  if (o.seed) c.train.seed = *o.seed;
  if (o.window) c.window = *o.window;
  if (o.stride) c.stride = *o.stride;
  if (o.lambda) c.train.lambda = *o.lambda;
  if (o.keep_fraction) c.keep_fraction = *o.keep_fraction;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "override '" + kv + "' is not key=value");
    apply_setting(c, std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
  }
  validate(c);
  return c;
}

inline void require_path(const std::string& path, const std::string& flag) {
  if (path.empty()) fail(ErrorCode::InvalidConfig, flag + " is required");
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, flag + " '" + path + "' does not exist");
}

inline void cmd_synth(const CliOptions& o, std::ostream& out) {
  const RunConfig c = resolve_config(o, nullptr);
  const SynthKind kind = parse_synth_kind(c.synth_kind);
  const RawTable table =
      synth_table(kind, c.train.seed, c.synth_samples, c.synth_variables, c.window, c.synth_driver);
  const auto dir = detail::ensure_dir(o.out);
  detail::write_file(dir / "data.csv", [&](std::ostream& f) { write_table_csv(f, table); });
  detail::write_file(dir / "synth.conf", [&](std::ostream& f) {
    f << "# " << to_string(kind) << " data, driver x" << c.synth_driver + 1 << '\n';
    f << "target=y\ninclude_target=false\nwindow=" << c.window << "\nstride=" << c.window << '\n';
  });
  out << "wrote " << table.row_count() << " rows to " << (dir / "data.csv").string() << '\n';
}

inline void cmd_train(const CliOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig c = resolve_config(o, nullptr);
  require_path(o.data, "--data");
  const PreparedData data = prepare_data(c, o.data);
  const std::size_t vars = data.raw.variables();
  const auto dir = detail::ensure_dir(o.out);
  if (o.grid) {
    const GridResult g = grid_search(data.scaled, data.split, c.train);
    detail::write_file(dir / "grid.csv", [&](std::ostream& f) {
      f << "batch_size,learning_rate,hidden,val_rmse,val_mae,val_mape,status\n";
      for (const auto& cell : g.cells) {
        f << cell.batch_size << ',' << format_double(cell.learning_rate) << ',' << cell.hidden << ',';
        if (cell.val) {
          f << format_double(cell.val->rmse) << ',' << format_double(cell.val->mae) << ','
            << format_double(cell.val->mape) << ",ok\n";
        } else {
          f << "nan,nan,nan," << to_string(*cell.error) << '\n';
        }
      }
    });
    for (const auto& cell : g.cells) {
      out << "grid batch=" << cell.batch_size << " lr=" << format_double(cell.learning_rate)
          << " hidden=" << cell.hidden << " val_rmse="
          << (cell.val ? format_double(cell.val->rmse) : to_string(*cell.error)) << '\n';
    }
    c.train = g.best_config;
    out << "best batch=" << c.train.batch_size << " lr=" << format_double(c.train.learning_rate)
        << " hidden=" << c.train.hidden << '\n';
  }
  if (c.train.model == ModelKind::Delelstm && c.train.hidden < 2 * vars) {
    err << "warning: hidden size " << c.train.hidden << " < 2 x " << vars
        << " variables; decomposition weights are minimum-norm solutions\n";
  }
  const RepeatReport rep = repeat_fits(data.scaled, data.split, c.train);
  const FitResult& first = rep.runs.front().fit;
  save_checkpoint((dir / "model.ckpt").string(), detail::make_checkpoint(first, c, data));
  detail::write_repeat_tables(dir, rep);
  detail::write_file(dir / "history.csv", [&](std::ostream& f) {
    f << "epoch,train_loss,val_rmse\n";
    for (const auto& h : first.history) {
      f << h.epoch << ',' << format_double(h.train_loss) << ',' << format_double(h.val_rmse) << '\n';
    }
  });
  detail::print_repeat_summary(out, rep);
  out << "checkpoint " << (dir / "model.ckpt").string() << '\n';
}

inline void cmd_evaluate(const CliOptions& o, std::ostream& out) {
  require_path(o.checkpoint, "--checkpoint");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const RunConfig c = resolve_config(o, &ck);
  require_path(o.data, "--data");
  const PreparedData data = prepare_data(c, o.data, ck.scaler);
  if (data.raw.variables() != ck.params.variables) {
    fail(ErrorCode::DimensionMismatch, "checkpoint expects " + std::to_string(ck.params.variables) +
                                           " variables, data has " + std::to_string(data.raw.variables()));
  }
  const Metrics m = evaluate_split(ck.params, data.scaled, data.split.test, c.train);
  const auto dir = detail::ensure_dir(o.out);
  detail::write_file(dir / "evaluation.csv", [&](std::ostream& f) {
    f << "rmse,mae,mape,count,mape_excluded\n"
      << format_double(m.rmse) << ',' << format_double(m.mae) << ',' << format_double(m.mape) << ',' << m.count
      << ',' << m.mape_excluded << '\n';
  });
  out << "test RMSE " << format_double(m.rmse) << " MAE " << format_double(m.mae) << " MAPE "
      << format_double(m.mape) << "%\n";
}

inline std::pair<Checkpoint, PreparedData> load_for_explain(const CliOptions& o, RunConfig& c) {
  require_path(o.checkpoint, "--checkpoint");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  c = resolve_config(o, &ck);
  require_path(o.data, "--data");
  PreparedData data = prepare_data(c, o.data, ck.scaler);
  if (data.raw.variables() != ck.params.variables) {
    fail(ErrorCode::DimensionMismatch, "checkpoint expects " + std::to_string(ck.params.variables) +
                                           " variables, data has " + std::to_string(data.raw.variables()));
  }
  return {std::move(ck), std::move(data)};
}

inline void cmd_explain(const CliOptions& o, std::ostream& out) {
  RunConfig c;
  const auto [ck, data] = load_for_explain(o, c);
  const ImportanceReport r = explain_split(ck.params, data.scaled, data.split.test, c.train.lambda);
  const auto dir = detail::ensure_dir(o.out);
  detail::write_file(dir / "instantaneous.csv", [&](std::ostream& f) { write_measure_csv(f, r.instantaneous, r.variable_names); });
  detail::write_file(dir / "long_term.csv", [&](std::ostream& f) { write_measure_csv(f, r.long_term, r.variable_names); });
  detail::write_file(dir / "temporal_weight.csv", [&](std::ostream& f) { write_measure_csv(f, r.temporal_weight, r.variable_names); });
  detail::write_file(dir / "importance.csv", [&](std::ostream& f) { write_summary(f, r); });
  std::size_t rank = 1;
  for (std::size_t d : r.ranking()) {
    out << rank++ << ". " << r.variable_names[d] << " Gl=" << format_double(r.global[d]) << '\n';
  }
  if (r.degenerate_steps) out << "skipped " << r.degenerate_steps << " degenerate timesteps\n";
}

inline void cmd_ablate(const CliOptions& o, std::ostream& out) {
  RunConfig c;
  const auto [ck, data] = load_for_explain(o, c);
  const ImportanceReport r = explain_split(ck.params, data.scaled, data.split.test, c.train.lambda);
  const std::size_t k = kept_variable_count(data.raw.variables(), c.keep_fraction);
  const auto order = r.ranking();
  std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(keep.begin(), keep.end());
  const WindowedDataset reduced = select_variables(data.raw, keep);
  const Scaler scaler = fit_scaler(reduced, data.split.train);
  const WindowedDataset scaled = standardize(reduced, scaler);
  TrainConfig t = c.train;
  t.model = ModelKind::Lstm;
  const RepeatReport rep = repeat_fits(scaled, data.split, t);
  const auto dir = detail::ensure_dir(o.out);
  detail::write_file(dir / "selected.csv", [&](std::ostream& f) {
    f << "name,global_importance\n";
    for (std::size_t d : keep) f << data.raw.names[d] << ',' << format_double(r.global[d]) << '\n';
  });
  detail::write_repeat_tables(dir, rep);
  out << "kept " << k << " of " << data.raw.variables() << ":";
  for (std::size_t d : keep) out << ' ' << data.raw.names[d];
  out << '\n';
  detail::print_repeat_summary(out, rep);
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DeLELSTM forecaster with decomposition-based variable importance", "delelstm"};
  app.require_subcommand(1, 1);
  CliOptions o;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "key=value configuration file");
    s->add_option("--seed", o.seed, "random seed");
    s->add_option("--out", o.out, "output directory")->capture_default_str();
    s->add_option("overrides", o.overrides, "key=value settings that override the config file");
  };
  auto data_flags = [&](CLI::App* s) {
    s->add_option("--data", o.data, "input CSV");
    s->add_option("--target", o.target, "target column");
    s->add_option("--window", o.window, "window length T");
    s->add_option("--stride", o.stride, "window stride (default: T)");
    s->add_option("--lambda", o.lambda, "ridge regularization of the decomposition");
  };
  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset with a known driver");
  common(synth);
  synth->add_option("--window", o.window, "window length T");
  CLI::App* train = app.add_subcommand("train", "fit models and write a checkpoint");
  common(train);
  data_flags(train);
  train->add_flag("--grid", o.grid, "grid search over batch size, learning rate and hidden size");
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "test-split metrics of a checkpoint");
  CLI::App* explain = app.add_subcommand("explain", "importance tables on the test split");
  CLI::App* ablate = app.add_subcommand("ablate", "retrain a plain LSTM on the top-ranked variables");
  for (CLI::App* s : {evaluate_cmd, explain, ablate}) {
    common(s);
    data_flags(s);
    s->add_option("--checkpoint", o.checkpoint, "checkpoint from train");
  }
  ablate->add_option("--keep-fraction", o.keep_fraction, "fraction of variables kept (rounded up)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help_out, error_out;
    const int code = app.exit(e, help_out, error_out);
    out << help_out.str();
    err << error_out.str();
    return code == 0 ? 0 : 1;
  }
  try {
    if (synth->parsed()) cmd_synth(o, out);
    else if (train->parsed()) cmd_train(o, out, err);
    else if (evaluate_cmd->parsed()) cmd_evaluate(o, out);
    else if (explain->parsed()) cmd_explain(o, out);
    else if (ablate->parsed()) cmd_ablate(o, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace delelstm
