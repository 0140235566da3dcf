#pragma once

// Least-squares decomposition of the shared hidden state H_t onto the
// per-variable past states h_{t-1}^d (long-term part) and their innovations
// h_t^d - h_{t-1}^d (instantaneous part).

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "delelstm/graph.hpp"
#include "delelstm/ops.hpp"
#include "delelstm/ridge.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

inline constexpr double kDefaultRidgeLambda = 1e-6;

/// Coefficients of one timestep: alpha weighs h_{t-1}^d, beta weighs the
/// innovation of variable d.
struct DecompositionWeights {
  Tensor alpha;  // [D]
  Tensor beta;   // [D]
  double residual_norm = 0.0;
};

struct Design {
  Var matrix;  // [B x M x 2D]; columns 0..D-1 from h_prev rows, D..2D-1 from delta rows
  Var delta;   // [B x D x M]
};

/// Builds A = [h_prev^T | (h_cur - h_prev)^T] per sample.
inline Design build_design(Var h_prev, Var h_cur) {
  if (h_prev.shape() != h_cur.shape() || h_prev.shape().size() != 3 || h_prev.shape()[2] == 0) {
    fail(ErrorCode::ShapeMismatch, "build_design: " + shape_string(h_prev.shape()) + " vs " +
                                       shape_string(h_cur.shape()));
  }
  Design d;
  d.delta = sub(h_cur, h_prev);
  d.matrix = transpose(concat({h_prev, d.delta}, 1));
  return d;
}

inline void check_well_posed(std::size_t hidden, std::size_t variables, double lambda) {
  if (hidden < 2 * variables && lambda == 0.0) {
    fail(ErrorCode::UnderdeterminedWithoutRidge,
         "hidden size " + std::to_string(hidden) + " < 2 * " + std::to_string(variables) +
             " variables requires a positive ridge lambda");
  }
}

struct Decomposition {
  Var coefficients;  // [B x 2D], alpha first then beta
  Var approximation;  // [B x M], design * coefficients
};

/// Solves the ridge system for H[B x M] against design A[B x M x 2D].
inline Decomposition decompose(Var hidden, Var design, double lambda) {
  const Shape& as = design.shape();
  if (as.size() != 3 || as[2] % 2 != 0) {
    fail(ErrorCode::ShapeMismatch, "decompose: design " + shape_string(as));
  }
  check_well_posed(as[1], as[2] / 2, lambda);
  Decomposition out;
  out.coefficients = ridge_solve(design, hidden, lambda);
  out.approximation = batched_matvec(design, out.coefficients);
  return out;
}

/// Splits sample `b` of a [B x 2D] coefficient tensor into alpha and beta.
inline DecompositionWeights split_coefficients(const Tensor& coefficients, std::size_t b,
                                               double residual_norm = 0.0) {
  const std::size_t p = coefficients.dim(coefficients.rank() - 1), vars = p / 2;
  DecompositionWeights w{Tensor::zeros({vars}), Tensor::zeros({vars}), residual_norm};
  for (std::size_t d = 0; d < vars; ++d) {
    w.alpha[d] = coefficients[b * p + d];
    w.beta[d] = coefficients[b * p + vars + d];
  }
  return w;
}

inline double residual_norm(const Tensor& approximation, const Tensor& hidden, std::size_t b) {
  const std::size_t m = hidden.dim(hidden.rank() - 1);
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = approximation[b * m + i] - hidden[b * m + i];
    s += r * r;
  }
  return std::sqrt(s);
}

// Single-sample value-level entry points.

/// h_prev, h_cur: [D x M]. Returns A [M x 2D] and delta [D x M].
inline std::pair<Tensor, Tensor> build_design(const Tensor& h_prev, const Tensor& h_cur) {
  require_same_shape(h_prev, h_cur, "build_design");
  if (h_prev.rank() != 2) fail(ErrorCode::ShapeMismatch, "build_design expects [D x M]");
  const std::size_t vars = h_prev.dim(0), m = h_prev.dim(1);
  Graph g;
  const auto d = build_design(g.constant(h_prev.reshaped({1, vars, m})),
                              g.constant(h_cur.reshaped({1, vars, m})));
  return {d.matrix.value().reshaped({m, 2 * vars}), d.delta.value().reshaped({vars, m})};
}

/// H: [M], A: [M x 2D].
inline DecompositionWeights decompose(const Tensor& hidden, const Tensor& design, double lambda) {
  if (design.rank() != 2 || hidden.rank() != 1 || design.dim(0) != hidden.dim(0)) {
    fail(ErrorCode::ShapeMismatch, "decompose: H " + shape_string(hidden.shape()) + ", A " +
                                       shape_string(design.shape()));
  }
  const std::size_t m = design.dim(0), p = design.dim(1);
  Graph g;
  const auto out = decompose(g.constant(hidden.reshaped({1, m})),
                             g.constant(design.reshaped({1, m, p})), lambda);
  return split_coefficients(out.coefficients.value(), 0,
                            residual_norm(out.approximation.value(), hidden.reshaped({1, m}), 0));
}

}  // namespace delelstm
