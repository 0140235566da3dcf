#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "delelstm/cells.hpp"
#include "delelstm/decomposition.hpp"
#include "delelstm/graph.hpp"
#include "delelstm/ops.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

/// Delelstm: both encoders plus the decomposition. Lstm: the standard
/// encoder and head alone (the ablation forecaster).
enum class ModelKind { Delelstm, Lstm };

inline std::string to_string(ModelKind kind) {
  return kind == ModelKind::Delelstm ? "delelstm" : "lstm";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "delelstm") return ModelKind::Delelstm;
  if (s == "lstm") return ModelKind::Lstm;
  fail(ErrorCode::InvalidConfig, "unknown model kind '" + s + "'");
}

template <class T>
struct HeadWeights {
  T weight;  // [1 x M]
  T bias;    // [1]
};

template <class T>
struct ModelWeights {
  LstmWeights<T> standard;
  LstmWeights<T> tensorized;
  HeadWeights<T> head;
};

/// All trainable parameters plus the dimensions they were built for.
struct DelelstmParams {
  ModelKind kind = ModelKind::Delelstm;
  std::size_t variables = 0;
  std::size_t hidden = 0;
  ModelWeights<Tensor> weights;

  friend bool operator==(const DelelstmParams& a, const DelelstmParams& b) {
    if (a.kind != b.kind || a.variables != b.variables || a.hidden != b.hidden) return false;
    std::vector<const Tensor*> lhs, rhs;
    for_each_param(a, [&](const std::string&, const Tensor& t) { lhs.push_back(&t); });
    for_each_param(b, [&](const std::string&, const Tensor& t) { rhs.push_back(&t); });
    if (lhs.size() != rhs.size()) return false;
    for (std::size_t i = 0; i < lhs.size(); ++i)
      if (!(*lhs[i] == *rhs[i])) return false;
    return true;
  }

  /// Visits parameters in a fixed order as (name, tensor). The tensorized
  /// block only exists for ModelKind::Delelstm.
  template <class Self, class F>
  friend void for_each_param(Self& p, F&& f) {
    for_each_tensor(p.weights.standard, "standard", f);
    if (p.kind == ModelKind::Delelstm) for_each_tensor(p.weights.tensorized, "tensorized", f);
    f(std::string("head.weight"), p.weights.head.weight);
    f(std::string("head.bias"), p.weights.head.bias);
  }
};

inline std::size_t parameter_count(const DelelstmParams& p) {
  std::size_t n = 0;
  for_each_param(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

inline DelelstmParams init_params(ModelKind kind, std::size_t variables, std::size_t hidden,
                                  std::uint64_t seed) {
  if (variables == 0 || hidden == 0) {
    fail(ErrorCode::InvalidConfig, "model needs at least one variable and one hidden unit");
  }
  std::mt19937_64 rng(seed);
  DelelstmParams p;
  p.kind = kind;
  p.variables = variables;
  p.hidden = hidden;
  p.weights.standard = init_standard_lstm(hidden, variables, rng);
  if (kind == ModelKind::Delelstm) p.weights.tensorized = init_tensor_lstm(hidden, variables, rng);
  p.weights.head.weight = detail::uniform_tensor({1, hidden}, 1.0 / std::sqrt(double(hidden)), rng);
  p.weights.head.bias = Tensor::zeros({1});
  return p;
}

struct BoundModel {
  const DelelstmParams* params = nullptr;
  ModelWeights<Var> weights;
};

inline BoundModel bind(Graph& g, const DelelstmParams& p) {
  BoundModel m{&p, {}};
  m.weights.standard = bind(g, p.weights.standard);
  if (p.kind == ModelKind::Delelstm) m.weights.tensorized = bind(g, p.weights.tensorized);
  m.weights.head.weight = g.leaf(p.weights.head.weight);
  m.weights.head.bias = g.leaf(p.weights.head.bias);
  return m;
}

/// Leaf nodes of a bound model in for_each_param order.
inline std::vector<Var> parameter_vars(const BoundModel& m) {
  std::vector<Var> out;
  auto collect = [&](const std::string&, const Var& v) { out.push_back(v); };
  for_each_tensor(m.weights.standard, "standard", collect);
  if (m.params->kind == ModelKind::Delelstm) for_each_tensor(m.weights.tensorized, "tensorized", collect);
  out.push_back(m.weights.head.weight);
  out.push_back(m.weights.head.bias);
  return out;
}

inline Var predict_head(const HeadWeights<Var>& head, Var hidden) {
  return add_bias(linear(hidden, head.weight), head.bias);
}

struct ForwardOptions {
  double lambda = kDefaultRidgeLambda;
  /// Carry the approximation H_hat (rather than the raw H) into the next
  /// standard-LSTM step.
  bool recur_on_approximation = true;
};

/// Graph nodes produced by one DeLELSTM timestep.
struct StepVars {
  Var raw_hidden;     // H_t from the standard cell, [B x M]
  Var approximation;  // H_hat_t, [B x M]
  Var coefficients;   // [B x 2D]
  Var prediction;     // [B x 1]
  CellState standard_next;
  CellState tensor_next;
};

inline StepVars delelstm_step(Var x, const CellState& standard, const CellState& tensorized,
                              const BoundModel& model, const ForwardOptions& options) {
  const auto& w = model.weights;
  const CellStep s = step_standard(x, standard, w.standard);
  const CellStep t = step_tensorized(x, tensorized, w.tensorized);
  const Design design = build_design(tensorized.hidden, t.hidden);
  const Decomposition dec = decompose(s.hidden, design.matrix, options.lambda);
  StepVars out;
  out.raw_hidden = s.hidden;
  out.approximation = dec.approximation;
  out.coefficients = dec.coefficients;
  out.prediction = predict_head(w.head, dec.approximation);
  out.standard_next = {options.recur_on_approximation ? dec.approximation : s.hidden, s.cell};
  out.tensor_next = t.state();
  return out;
}

/// Inputs for one batch: x[t] is [B x D] for t = 0..T-1.
struct BatchSequence {
  std::vector<Tensor> inputs;
};

struct SequenceVars {
  std::vector<Var> predictions;   // per t, [B x 1]
  std::vector<Var> coefficients;  // per t, [B x 2D]; empty for the plain LSTM
  std::vector<Var> raw_hidden;    // per t
  std::vector<Var> approximation; // per t; empty for the plain LSTM
};

/// Unrolls the model over a batch from zero initial states.
inline SequenceVars forward_sequence(Graph& g, const BoundModel& model, const BatchSequence& seq,
                                     const ForwardOptions& options) {
  if (seq.inputs.empty()) fail(ErrorCode::EmptySequence, "sequence has no timesteps");
  const DelelstmParams& p = *model.params;
  const std::size_t batch = seq.inputs.front().dim(0);
  if (model.params->kind == ModelKind::Delelstm) check_well_posed(p.hidden, p.variables, options.lambda);
  CellState standard{g.constant(Tensor::zeros({batch, p.hidden})),
                     g.constant(Tensor::zeros({batch, p.hidden}))};
  CellState tensorized;
  if (p.kind == ModelKind::Delelstm) {
    tensorized = {g.constant(Tensor::zeros({batch, p.variables, p.hidden})),
                  g.constant(Tensor::zeros({batch, p.variables, p.hidden}))};
  }
  SequenceVars out;
  for (const Tensor& xt : seq.inputs) {
    if (xt.rank() != 2 || xt.dim(0) != batch || xt.dim(1) != p.variables) {
      fail(ErrorCode::DimensionMismatch, "input " + shape_string(xt.shape()) + " for a model with " +
                                             std::to_string(p.variables) + " variables");
    }
    const Var x = g.constant(xt);
    if (p.kind == ModelKind::Delelstm) {
      const StepVars s = delelstm_step(x, standard, tensorized, model, options);
      out.predictions.push_back(s.prediction);
      out.coefficients.push_back(s.coefficients);
      out.raw_hidden.push_back(s.raw_hidden);
      out.approximation.push_back(s.approximation);
      standard = s.standard_next;
      tensorized = s.tensor_next;
    } else {
      const CellStep s = step_standard(x, standard, model.weights.standard);
      out.predictions.push_back(predict_head(model.weights.head, s.hidden));
      out.raw_hidden.push_back(s.hidden);
      standard = s.state();
    }
  }
  return out;
}

// Single-sample value-level step.

struct StepOutput {
  Tensor approximation;  // H_hat, [M]
  DecompositionWeights weights;
  double prediction = 0.0;
};

struct DelelstmStepResult {
  StepOutput output;
  StandardLstmState standard;
  TensorLstmState tensorized;
};

inline DelelstmStepResult delelstm_step(const Tensor& x, const StandardLstmState& standard,
                                        const TensorLstmState& tensorized,
                                        const DelelstmParams& params, double lambda) {
  if (params.kind != ModelKind::Delelstm) fail(ErrorCode::InvalidConfig, "delelstm_step on a plain LSTM");
  const std::size_t m = params.hidden, d = params.variables;
  Graph g;
  const BoundModel model = bind(g, params);
  const CellState s{g.constant(standard.hidden.reshaped({1, m})), g.constant(standard.cell.reshaped({1, m}))};
  const CellState t{g.constant(tensorized.hidden.reshaped({1, d, m})),
                    g.constant(tensorized.cell.reshaped({1, d, m}))};
  ForwardOptions options;
  options.lambda = lambda;
  const StepVars out = delelstm_step(g.constant(x.reshaped({1, d})), s, t, model, options);
  DelelstmStepResult r;
  r.output.approximation = out.approximation.value().reshaped({m});
  r.output.weights = split_coefficients(out.coefficients.value(), 0,
                                        residual_norm(out.approximation.value(), out.raw_hidden.value(), 0));
  r.output.prediction = out.prediction.value().item();
  r.standard = {out.standard_next.hidden.value().reshaped({m}), out.standard_next.cell.value().reshaped({m})};
  r.tensorized = {out.tensor_next.hidden.value().reshaped({d, m}), out.tensor_next.cell.value().reshaped({d, m})};
  return r;
}

}  // namespace delelstm
