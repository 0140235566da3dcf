#pragma once

// Text checkpoint, one record per line:
//
//   delelstm-checkpoint 1
//   model <delelstm|lstm>
//   variables <D>
//   hidden <M>
//   window <T>
//   target <name>
//   name <variable name>                 (D lines, input order)
//   scaler <mean> <std>                  (D lines, optional block)
//   scaler_target <mean> <std>
//   config <key> <value>                 (any number)
//   history <epoch> <train_loss> <val_rmse>
//   param <name> <d0>x<d1>...            followed by one line of values
//   end
//
// Numbers use the shortest round-trip decimal form, so parameters reload
// bit for bit.

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "delelstm/data.hpp"
#include "delelstm/error.hpp"
#include "delelstm/format.hpp"
#include "delelstm/model.hpp"
#include "delelstm/training.hpp"

namespace delelstm {

inline constexpr int kCheckpointVersion = 1;

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
  DelelstmParams params;
  std::vector<std::string> names;
  std::string target;
  std::size_t window = 0;
  std::optional<Scaler> scaler;
  KeyValues config;
  std::vector<EpochRecord> history;
};

inline void save_checkpoint(std::ostream& out, const Checkpoint& ck) {
  const auto& p = ck.params;
  out << "delelstm-checkpoint " << kCheckpointVersion << '\n';
  out << "model " << to_string(p.kind) << '\n';
  out << "variables " << p.variables << '\n';
  out << "hidden " << p.hidden << '\n';
  out << "window " << ck.window << '\n';
  out << "target " << ck.target << '\n';
  for (const auto& n : ck.names) out << "name " << n << '\n';
  if (ck.scaler) {
    for (std::size_t d = 0; d < ck.scaler->mean.size(); ++d) {
      out << "scaler " << format_double(ck.scaler->mean[d]) << ' ' << format_double(ck.scaler->std[d]) << '\n';
    }
    out << "scaler_target " << format_double(ck.scaler->target_mean) << ' '
        << format_double(ck.scaler->target_std) << '\n';
  }
  for (const auto& [k, v] : ck.config) out << "config " << k << ' ' << v << '\n';
  for (const auto& h : ck.history) {
    out << "history " << h.epoch << ' ' << format_double(h.train_loss) << ' ' << format_double(h.val_rmse) << '\n';
  }
  for_each_param(p, [&](const std::string& name, const Tensor& t) {
    out << "param " << name << ' ';
    for (std::size_t i = 0; i < t.rank(); ++i) out << (i ? "x" : "") << t.dim(i);
    out << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << format_double(t[i]);
    out << '\n';
  });
  out << "end\n";
}

inline std::string checkpoint_string(const Checkpoint& ck) {
  std::ostringstream os;
  save_checkpoint(os, ck);
  return os.str();
}

namespace detail {

inline double parse_number(const std::string& token, std::size_t line) {
  const std::string t = lower(token);
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  const auto v = parse_double(token);
  if (!v) fail(ErrorCode::ParseError, "checkpoint line " + std::to_string(line) + ": bad number '" + token + "'");
  return *v;
}

inline std::size_t parse_count(const std::string& token, std::size_t line) {
  const double v = parse_number(token, line);
  if (!(v >= 0.0) || v != std::floor(v)) {
    fail(ErrorCode::ParseError, "checkpoint line " + std::to_string(line) + ": bad count '" + token + "'");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace detail

inline Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  auto bad = [&](const std::string& why) -> void {
    fail(ErrorCode::ParseError, "checkpoint line " + std::to_string(line_no) + ": " + why);
  };
  if (!next() || line != "delelstm-checkpoint " + std::to_string(kCheckpointVersion)) {
    fail(ErrorCode::ParseError, "not a version " + std::to_string(kCheckpointVersion) + " checkpoint");
  }
  Checkpoint ck;
  ModelKind kind = ModelKind::Delelstm;
  std::size_t vars = 0, hidden = 0;
  std::vector<std::pair<double, double>> scaler_rows;
  std::optional<std::pair<double, double>> scaler_target;
  std::map<std::string, Tensor> blocks;
  bool ended = false;
  while (next()) {
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    std::istringstream fields(rest);
    if (key == "end") {
      ended = true;
      break;
    } else if (key == "model") {
      kind = parse_model_kind(rest);
    } else if (key == "variables") {
      vars = detail::parse_count(rest, line_no);
    } else if (key == "hidden") {
      hidden = detail::parse_count(rest, line_no);
    } else if (key == "window") {
      ck.window = detail::parse_count(rest, line_no);
    } else if (key == "target") {
      ck.target = rest;
    } else if (key == "name") {
      ck.names.push_back(rest);
    } else if (key == "scaler" || key == "scaler_target") {
      std::string a, b;
      if (!(fields >> a >> b)) bad("expected mean and std");
      const std::pair<double, double> v{detail::parse_number(a, line_no), detail::parse_number(b, line_no)};
      if (key == "scaler") {
        scaler_rows.push_back(v);
      } else {
        scaler_target = v;
      }
    } else if (key == "config") {
      const auto s2 = rest.find(' ');
      ck.config.emplace_back(rest.substr(0, s2), s2 == std::string::npos ? "" : rest.substr(s2 + 1));
    } else if (key == "history") {
      std::string e, l, v;
      if (!(fields >> e >> l >> v)) bad("expected epoch, loss and rmse");
      ck.history.push_back({detail::parse_count(e, line_no), detail::parse_number(l, line_no),
                            detail::parse_number(v, line_no)});
    } else if (key == "param") {
      std::string name, shape_text;
      if (!(fields >> name >> shape_text)) bad("expected parameter name and shape");
      Shape shape;
      std::istringstream dims(shape_text);
      for (std::string dim; std::getline(dims, dim, 'x');) shape.push_back(detail::parse_count(dim, line_no));
      if (!next()) bad("missing values for '" + name + "'");
      std::istringstream vals(line);
      std::vector<double> data;
      for (std::string tok; vals >> tok;) data.push_back(detail::parse_number(tok, line_no));
      if (data.size() != element_count(shape)) bad("'" + name + "' has the wrong number of values");
      blocks.emplace(name, Tensor(std::move(shape), std::move(data)));
    } else {
      bad("unknown record '" + key + "'");
    }
  }
  if (!ended) fail(ErrorCode::ParseError, "checkpoint is truncated");
  if (vars == 0 || hidden == 0) fail(ErrorCode::ParseError, "checkpoint lacks model dimensions");
  if (ck.names.size() != vars) fail(ErrorCode::ParseError, "checkpoint names do not match its variable count");
  if (!scaler_rows.empty()) {
    if (scaler_rows.size() != vars || !scaler_target) fail(ErrorCode::ParseError, "incomplete scaler block");
    Scaler s;
    for (const auto& [m, sd] : scaler_rows) {
      s.mean.push_back(m);
      s.std.push_back(sd);
    }
    s.target_mean = scaler_target->first;
    s.target_std = scaler_target->second;
    ck.scaler = s;
  }
  ck.params = init_params(kind, vars, hidden, 0);
  std::size_t used = 0;
  for_each_param(ck.params, [&](const std::string& name, Tensor& t) {
    const auto it = blocks.find(name);
    if (it == blocks.end()) fail(ErrorCode::ParseError, "checkpoint lacks parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      fail(ErrorCode::ParseError, "parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                                      ", expected " + shape_string(t.shape()));
    }
    t = it->second;
    ++used;
  });
  if (used != blocks.size()) fail(ErrorCode::ParseError, "checkpoint has unexpected parameters");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  save_checkpoint(out, ck);
  if (!out) fail(ErrorCode::Io, "failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace delelstm
