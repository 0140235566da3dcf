#pragma once

// The two recurrent encoders: a standard LSTM whose hidden state mixes all
// input variables, and a tensorized LSTM that keeps one hidden row per
// variable. Both run on a leading batch axis; single-sample helpers wrap B=1.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "delelstm/graph.hpp"
#include "delelstm/linalg.hpp"
#include "delelstm/ops.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

/// Weights of one gate. Standard cell: recurrent [M x M], input [M x D],
/// bias [M]. Tensorized cell: recurrent [D x M x M], input [D x M], bias [D x M].
template <class T>
struct GateWeights {
  T recurrent;
  T input;
  T bias;
};

template <class T>
struct LstmWeights {
  GateWeights<T> input_gate;
  GateWeights<T> forget_gate;
  GateWeights<T> output_gate;
  GateWeights<T> candidate;
};

template <class W, class F>
void for_each_gate(W& weights, F&& f) {
  f("input_gate", weights.input_gate);
  f("forget_gate", weights.forget_gate);
  f("output_gate", weights.output_gate);
  f("candidate", weights.candidate);
}

/// Visits every tensor of an LstmWeights as (qualified name, member).
template <class W, class F>
void for_each_tensor(W& weights, const std::string& prefix, F&& f) {
  for_each_gate(weights, [&](const char* gate, auto& gw) {
    const std::string base = prefix + "." + gate;
    f(base + ".recurrent", gw.recurrent);
    f(base + ".input", gw.input);
    f(base + ".bias", gw.bias);
  });
}

using StandardLstmParams = LstmWeights<Tensor>;
using TensorLstmParams = LstmWeights<Tensor>;

namespace detail {

inline Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace detail

/// Weights ~ U(-1/sqrt(M), 1/sqrt(M)); biases zero.
inline StandardLstmParams init_standard_lstm(std::size_t hidden, std::size_t inputs,
                                             std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  StandardLstmParams p;
  for_each_gate(p, [&](const char*, GateWeights<Tensor>& g) {
    g.recurrent = detail::uniform_tensor({hidden, hidden}, bound, rng);
    g.input = detail::uniform_tensor({hidden, inputs}, bound, rng);
    g.bias = Tensor::zeros({hidden});
  });
  return p;
}

inline TensorLstmParams init_tensor_lstm(std::size_t hidden, std::size_t variables,
                                         std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  TensorLstmParams p;
  for_each_gate(p, [&](const char*, GateWeights<Tensor>& g) {
    g.recurrent = detail::uniform_tensor({variables, hidden, hidden}, bound, rng);
    g.input = detail::uniform_tensor({variables, hidden}, bound, rng);
    g.bias = Tensor::zeros({variables, hidden});
  });
  return p;
}

inline LstmWeights<Var> bind(Graph& g, const LstmWeights<Tensor>& p) {
  LstmWeights<Var> out;
  auto bind_gate = [&](const GateWeights<Tensor>& src) {
    return GateWeights<Var>{g.leaf(src.recurrent), g.leaf(src.input), g.leaf(src.bias)};
  };
  out.input_gate = bind_gate(p.input_gate);
  out.forget_gate = bind_gate(p.forget_gate);
  out.output_gate = bind_gate(p.output_gate);
  out.candidate = bind_gate(p.candidate);
  return out;
}

// ---------------------------------------------------------------------------
// Tensor-dot: batched per-variable products with no cross-variable mixing.

/// out[b, d, :] = U[d] * h[b, d, :] for U[D x M x M] and h[B x D x M] (or [D x M]).
inline Var tensor_dot(Var u, Var h) {
  Graph& g = detail::graph_of(u, h);
  const Tensor& vu = u.value();
  const Tensor& vh = h.value();
  const bool batched = vh.rank() == 3;
  if (vu.rank() != 3 || vu.dim(1) != vu.dim(2) || !(vh.rank() == 2 || batched) ||
      vh.dim(vh.rank() - 2) != vu.dim(0) || vh.dim(vh.rank() - 1) != vu.dim(1)) {
    fail(ErrorCode::ShapeMismatch,
         "tensor_dot " + shape_string(vu.shape()) + " with " + shape_string(vh.shape()));
  }
  const std::size_t batch = batched ? vh.dim(0) : 1, vars = vu.dim(0), m = vu.dim(1);
  Tensor out(vh.shape());
  // Rows of variable d are strided by D*M; they are gathered into a [B x M]
  // block so each variable is one matrix product.
  auto gather = [=](const double* src, std::size_t d, double* dst) {
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(src + (b * vars + d) * m, m, dst + b * m);
  };
  auto scatter = [=](const double* src, std::size_t d, double* dst) {
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(src + b * m, m, dst + (b * vars + d) * m);
  };
  std::vector<double> hd(batch * m), yd(batch * m);
  for (std::size_t d = 0; d < vars; ++d) {
    gather(vh.data().data(), d, hd.data());
    std::fill(yd.begin(), yd.end(), 0.0);
    linalg::gemm_nt(batch, m, m, hd.data(), vu.data().data() + d * m * m, yd.data());
    scatter(yd.data(), d, out.data().data());
  }
  const std::size_t iu = u.id, ih = h.id;
  return g.record(std::move(out), {iu, ih}, [=](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    const Tensor& vu = gr.value(iu);
    const Tensor& vh = gr.value(ih);
    std::vector<double> gyd(batch * m), buf(batch * m);
    for (std::size_t d = 0; d < vars; ++d) {
      gather(gy.data().data(), d, gyd.data());
      if (gr.requires_grad(iu)) {
        gather(vh.data().data(), d, buf.data());
        linalg::gemm_tn(m, m, batch, gyd.data(), buf.data(), gr.grad_buffer(iu).data().data() + d * m * m);
      }
      if (gr.requires_grad(ih)) {
        double* gh = gr.grad_buffer(ih).data().data();
        gather(gh, d, buf.data());
        linalg::gemm_nn(batch, m, m, gyd.data(), vu.data().data() + d * m * m, buf.data());
        scatter(buf.data(), d, gh);
      }
    }
  });
}

/// out[b, d, :] = W[d, :] * x[b, d] for W[D x M] and x[B x D] (or [D]).
inline Var tensor_dot_input(Var w, Var x) {
  Graph& g = detail::graph_of(w, x);
  const Tensor& vw = w.value();
  const Tensor& vx = x.value();
  const bool batched = vx.rank() == 2;
  if (vw.rank() != 2 || !(vx.rank() == 1 || batched) || vx.dim(vx.rank() - 1) != vw.dim(0)) {
    fail(ErrorCode::ShapeMismatch,
         "tensor_dot_input " + shape_string(vw.shape()) + " with " + shape_string(vx.shape()));
  }
  const std::size_t batch = batched ? vx.dim(0) : 1, vars = vw.dim(0), m = vw.dim(1);
  Tensor out(batched ? Shape{batch, vars, m} : Shape{vars, m});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t d = 0; d < vars; ++d) {
      const double xv = vx[b * vars + d];
      for (std::size_t i = 0; i < m; ++i) out[(b * vars + d) * m + i] = vw[d * m + i] * xv;
    }
  const std::size_t iw = w.id, ix = x.id;
  return g.record(std::move(out), {iw, ix}, [iw, ix, batch, vars, m](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    const Tensor& vw = gr.value(iw);
    const Tensor& vx = gr.value(ix);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t d = 0; d < vars; ++d) {
        const double* gyr = gy.data().data() + (b * vars + d) * m;
        if (gr.requires_grad(iw)) {
          double* gw = gr.grad_buffer(iw).data().data() + d * m;
          const double xv = vx[b * vars + d];
          for (std::size_t i = 0; i < m; ++i) gw[i] += gyr[i] * xv;
        }
        if (gr.requires_grad(ix)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += gyr[i] * vw[d * m + i];
          gr.grad_buffer(ix)[b * vars + d] += acc;
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Cell steps.

/// Recurrent state of either cell: [B x M] for the standard cell,
/// [B x D x M] for the tensorized one.
struct CellState {
  Var hidden;
  Var cell;
};

/// A step's new state plus its gate activations.
struct CellStep {
  Var hidden;
  Var cell;
  Var input_gate;
  Var forget_gate;
  Var output_gate;
  Var candidate;

  CellState state() const { return {hidden, cell}; }
};

namespace detail {

template <class Affine>
CellStep lstm_update(const LstmWeights<Var>& p, Var cell_prev, Affine affine) {
  CellStep s;
  s.input_gate = sigmoid(affine(p.input_gate));
  s.forget_gate = sigmoid(affine(p.forget_gate));
  s.output_gate = sigmoid(affine(p.output_gate));
  s.candidate = tanh(affine(p.candidate));
  s.cell = add(mul(s.forget_gate, cell_prev), mul(s.input_gate, s.candidate));
  s.hidden = mul(s.output_gate, tanh(s.cell));
  return s;
}

}  // namespace detail

/// Standard LSTM step on x[B x D] with state [B x M].
inline CellStep step_standard(Var x, const CellState& state, const LstmWeights<Var>& p) {
  const Shape& hs = state.hidden.shape();
  const Shape& xs = x.shape();
  const Shape& ws = p.input_gate.input.shape();
  if (hs.size() != 2 || xs.size() != 2 || hs[0] != xs[0] || ws.size() != 2 || hs[1] != ws[0] ||
      xs[1] != ws[1] || state.cell.shape() != hs) {
    fail(ErrorCode::ShapeMismatch, "step_standard: input " + shape_string(xs) + ", hidden " +
                                       shape_string(hs) + ", input weights " + shape_string(ws));
  }
  return detail::lstm_update(p, state.cell, [&](const GateWeights<Var>& gw) {
    return add_bias(add(linear(state.hidden, gw.recurrent), linear(x, gw.input)), gw.bias);
  });
}

/// Tensorized LSTM step on x[B x D] with state [B x D x M].
inline CellStep step_tensorized(Var x, const CellState& state, const LstmWeights<Var>& p) {
  const Shape& hs = state.hidden.shape();
  const Shape& xs = x.shape();
  const Shape& us = p.input_gate.recurrent.shape();
  if (hs.size() != 3 || xs.size() != 2 || hs[0] != xs[0] || hs[1] != xs[1] || us.size() != 3 ||
      us[0] != hs[1] || us[1] != hs[2] || state.cell.shape() != hs) {
    fail(ErrorCode::ShapeMismatch, "step_tensorized: input " + shape_string(xs) + ", hidden " +
                                       shape_string(hs) + ", recurrent weights " + shape_string(us));
  }
  return detail::lstm_update(p, state.cell, [&](const GateWeights<Var>& gw) {
    return add_bias(add(tensor_dot(gw.recurrent, state.hidden), tensor_dot_input(gw.input, x)),
                    gw.bias);
  });
}

// ---------------------------------------------------------------------------
// Single-sample value-level helpers.

struct StandardLstmState {
  Tensor hidden;  // [M]
  Tensor cell;    // [M]
};

struct TensorLstmState {
  Tensor hidden;  // [D x M], row d belongs to variable d
  Tensor cell;    // [D x M]
};

inline StandardLstmState step_standard(const Tensor& x, const StandardLstmState& state,
                                       const StandardLstmParams& params) {
  const std::size_t m = state.hidden.size();
  Graph g;
  const auto p = bind(g, params);
  const CellState s{g.constant(state.hidden.reshaped({1, m})), g.constant(state.cell.reshaped({1, m}))};
  const auto out = step_standard(g.constant(x.reshaped({1, x.size()})), s, p);
  return {out.hidden.value().reshaped({m}), out.cell.value().reshaped({m})};
}

inline TensorLstmState step_tensorized(const Tensor& x, const TensorLstmState& state,
                                       const TensorLstmParams& params) {
  if (state.hidden.rank() != 2) fail(ErrorCode::ShapeMismatch, "tensorized state must be [D x M]");
  const std::size_t d = state.hidden.dim(0), m = state.hidden.dim(1);
  Graph g;
  const auto p = bind(g, params);
  const CellState s{g.constant(state.hidden.reshaped({1, d, m})),
                    g.constant(state.cell.reshaped({1, d, m}))};
  const auto out = step_tensorized(g.constant(x.reshaped({1, x.size()})), s, p);
  return {out.hidden.value().reshaped({d, m}), out.cell.value().reshaped({d, m})};
}

}  // namespace delelstm
