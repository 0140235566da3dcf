#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "delelstm/graph.hpp"
#include "delelstm/linalg.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

/// Ridge least squares c = argmin ||A c - b||^2 + lambda ||c||^2, solved by
/// Cholesky on (A^T A + lambda I). Accepts a single system (A[M x P], b[M])
/// or a batch (A[B x M x P], b[B x M]). Gradients are obtained implicitly from
/// the same factor: with z = G^{-1} dc and r = b - A c,
///   db = A z,   dA = r z^T - (A z) c^T.
inline Var ridge_solve(Var a, Var b, double lambda) {
  Graph& g = detail::graph_of(a, b);
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  const bool batched = va.rank() == 3;
  const bool shapes_ok =
      batched ? (vb.rank() == 2 && va.dim(0) == vb.dim(0) && va.dim(1) == vb.dim(1))
              : (va.rank() == 2 && vb.rank() == 1 && va.dim(0) == vb.dim(0));
  if (!shapes_ok) {
    fail(ErrorCode::ShapeMismatch,
         "ridge_solve " + shape_string(va.shape()) + " with rhs " + shape_string(vb.shape()));
  }
  if (!(lambda >= 0.0)) fail(ErrorCode::InvalidConfig, "ridge lambda must be >= 0");
  const std::size_t batch = batched ? va.dim(0) : 1;
  const std::size_t m = va.dim(va.rank() - 2), p = va.dim(va.rank() - 1);
  if (m == 0 || p == 0) fail(ErrorCode::ShapeMismatch, "ridge_solve needs M >= 1 and P >= 1");

  auto factors = std::make_shared<std::vector<double>>(batch * p * p, 0.0);
  Tensor out(batched ? Shape{batch, p} : Shape{p});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* as = va.data().data() + s * m * p;
    const double* bs = vb.data().data() + s * m;
    double* gram = factors->data() + s * p * p;
    linalg::gemm_tn(p, p, m, as, as, gram);
    for (std::size_t i = 0; i < p; ++i) gram[i * p + i] += lambda;
    if (!linalg::cholesky_factor(p, gram)) {
      fail(ErrorCode::SolveFailure, "normal matrix not positive definite (sample " +
                                        std::to_string(s) + ", lambda " + std::to_string(lambda) + ")");
    }
    double* cs = out.data().data() + s * p;
    linalg::gemm_tn(p, 1, m, as, bs, cs);
    linalg::cholesky_solve(p, gram, cs);
  }

  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, batch, m, p, factors](Graph& gr, std::size_t self) {
    const Tensor& gc = gr.grad_buffer(self);
    const Tensor& va = gr.value(ia);
    const Tensor& vb = gr.value(ib);
    const Tensor& vc = gr.value(self);
    std::vector<double> z(p), az(m), r(m);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* as = va.data().data() + s * m * p;
      const double* cs = vc.data().data() + s * p;
      std::copy_n(gc.data().data() + s * p, p, z.begin());
      linalg::cholesky_solve(p, factors->data() + s * p * p, z.data());
      std::fill(az.begin(), az.end(), 0.0);
      linalg::gemm_nn(m, 1, p, as, z.data(), az.data());
      if (gr.requires_grad(ib)) {
        double* gb = gr.grad_buffer(ib).data().data() + s * m;
        for (std::size_t i = 0; i < m; ++i) gb[i] += az[i];
      }
      if (gr.requires_grad(ia)) {
        const double* bs = vb.data().data() + s * m;
        std::copy_n(bs, m, r.begin());
        for (std::size_t i = 0; i < m; ++i) {
          double fit = 0.0;
          for (std::size_t j = 0; j < p; ++j) fit += as[i * p + j] * cs[j];
          r[i] -= fit;
        }
        double* ga = gr.grad_buffer(ia).data().data() + s * m * p;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += r[i] * z[j] - az[i] * cs[j];
      }
    }
  });
}

}  // namespace delelstm
