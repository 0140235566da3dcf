#pragma once

// Differentiable operations on Graph nodes. Shapes must match exactly; the
// only broadcasts are scalar-tensor (scale, add_scalar) and the explicit
// add_bias over a leading batch axis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "delelstm/graph.hpp"
#include "delelstm/linalg.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

namespace detail {

template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Graph& g = *a.graph;
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id;
  return g.record(std::move(out), {ia}, [ia, deriv](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    const Tensor& x = gr.value(ia);
    const Tensor& y = gr.value(self);
    Tensor& gx = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * deriv(x[i], y[i]);
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var sigmoid(Var a) {
  return detail::unary(a, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var abs(Var a) {
  return detail::unary(a, [](double x) { return std::abs(x); },
                       [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

/// sqrt; the derivative at 0 is taken as 0 to keep the tape finite.
inline Var sqrt(Var a) {
  return detail::unary(a, [](double x) { return std::sqrt(x); },
                       [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Var square(Var a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(Var a, double s) {
  return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var add(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    for (std::size_t p : {ia, ib}) {
      if (!gr.requires_grad(p)) continue;
      Tensor& gp = gr.grad_buffer(p);
      for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) {
      Tensor& ga = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (gr.requires_grad(ib)) {
      Tensor& gb = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
    }
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    const Tensor& va = gr.value(ia);
    const Tensor& vb = gr.value(ib);
    if (gr.requires_grad(ia)) {
      Tensor& ga = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * vb[i];
    }
    if (gr.requires_grad(ib)) {
      Tensor& gb = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * va[i];
    }
  });
}

inline Var sum(Var a) {
  Graph& g = *a.graph;
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id;
  return g.record(Tensor::scalar(s), {ia}, [ia](Graph& gr, std::size_t self) {
    const double gy = gr.grad_buffer(self)[0];
    Tensor& ga = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy;
  });
}

inline Var mean(Var a) {
  const auto n = a.value().size();
  if (n == 0) fail(ErrorCode::EmptySequence, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Matrix product a[M x K] * b[K x N] -> [M x N]; b may be a vector [K] -> [M].
inline Var matmul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.rank() != 2 || (vb.rank() != 1 && vb.rank() != 2) || va.dim(1) != vb.dim(0)) {
    fail(ErrorCode::ShapeMismatch,
         "matmul " + shape_string(va.shape()) + " * " + shape_string(vb.shape()));
  }
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.rank() == 2 ? vb.dim(1) : 1;
  Tensor out(vb.rank() == 2 ? Shape{m, n} : Shape{m});
  linalg::gemm_nn(m, n, k, va.data().data(), vb.data().data(), out.data().data());
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, m, n, k](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) {
      linalg::gemm_nt(m, k, n, gy.data().data(), gr.value(ib).data().data(),
                      gr.grad_buffer(ia).data().data());
    }
    if (gr.requires_grad(ib)) {
      linalg::gemm_tn(k, n, m, gr.value(ia).data().data(), gy.data().data(),
                      gr.grad_buffer(ib).data().data());
    }
  });
}

/// Batched affine map without bias: x[B x K] * w[N x K]^T -> [B x N].
inline Var linear(Var x, Var w) {
  Graph& g = detail::graph_of(x, w);
  const Tensor& vx = x.value();
  const Tensor& vw = w.value();
  if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(1)) {
    fail(ErrorCode::ShapeMismatch,
         "linear " + shape_string(vx.shape()) + " with weight " + shape_string(vw.shape()));
  }
  const std::size_t b = vx.dim(0), k = vx.dim(1), n = vw.dim(0);
  Tensor out(Shape{b, n});
  linalg::gemm_nt(b, n, k, vx.data().data(), vw.data().data(), out.data().data());
  const std::size_t ix = x.id, iw = w.id;
  return g.record(std::move(out), {ix, iw}, [ix, iw, b, n, k](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    if (gr.requires_grad(ix)) {
      linalg::gemm_nn(b, k, n, gy.data().data(), gr.value(iw).data().data(),
                      gr.grad_buffer(ix).data().data());
    }
    if (gr.requires_grad(iw)) {
      linalg::gemm_tn(n, k, b, gy.data().data(), gr.value(ix).data().data(),
                      gr.grad_buffer(iw).data().data());
    }
  });
}

/// a[B x ...] + bias[...], the bias repeated along the leading axis.
inline Var add_bias(Var a, Var bias) {
  Graph& g = detail::graph_of(a, bias);
  const Tensor& va = a.value();
  const Tensor& vb = bias.value();
  if (va.rank() != vb.rank() + 1 || !std::equal(vb.shape().begin(), vb.shape().end(),
                                                 va.shape().begin() + 1)) {
    fail(ErrorCode::ShapeMismatch,
         "add_bias " + shape_string(va.shape()) + " + " + shape_string(vb.shape()));
  }
  const std::size_t rows = va.dim(0), width = vb.size();
  Tensor out = va;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] += vb[j];
  const std::size_t ia = a.id, ib = bias.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, rows, width](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) {
      Tensor& ga = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (gr.requires_grad(ib)) {
      Tensor& gb = gr.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < width; ++j) gb[j] += gy[r * width + j];
    }
  });
}

inline Var reshape(Var a, Shape shape) {
  Graph& g = *a.graph;
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return g.record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
  });
}

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
inline Var transpose(Var a) {
  Graph& g = *a.graph;
  const Tensor& va = a.value();
  if (va.rank() != 2 && va.rank() != 3) {
    fail(ErrorCode::ShapeMismatch, "transpose of " + shape_string(va.shape()));
  }
  const std::size_t batch = va.rank() == 3 ? va.dim(0) : 1;
  const std::size_t r = va.dim(va.rank() - 2), c = va.dim(va.rank() - 1);
  Shape shape = va.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Tensor out(shape);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = va[b * r * c + i * c + j];
  const std::size_t ia = a.id;
  return g.record(std::move(out), {ia}, [ia, batch, r, c](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[b * r * c + i * c + j] += gy[b * r * c + j * r + i];
  });
}

/// Concatenates along `axis`; all other dimensions must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "concat of nothing");
  Graph& g = *parts.front().graph;
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) fail(ErrorCode::ShapeMismatch, "concat axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape shape = first;
  shape[axis] = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    if (p.graph != &g) fail(ErrorCode::ShapeMismatch, "concat across graphs");
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) fail(ErrorCode::ShapeMismatch, "concat " + shape_string(first) + " with " + shape_string(s));
    shape[axis] += s[axis];
    ids.push_back(p.id);
    widths.push_back(s[axis] * inner);
  }
  const std::size_t row = shape[axis] * inner;
  Tensor out(shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data().begin() + o * widths[k], widths[k], out.data().begin() + o * row + offset);
    offset += widths[k];
  }
  return g.record(std::move(out), ids, [ids, widths, outer, row](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.requires_grad(ids[k])) {
        Tensor& gp = gr.grad_buffer(ids[k]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[o * widths[k] + j] += gy[o * row + off + j];
      }
      off += widths[k];
    }
  });
}

/// Half-open slice [begin, end) along `axis`.
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph;
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    fail(ErrorCode::ShapeMismatch, "slice [" + std::to_string(begin) + "," + std::to_string(end) +
                                       ") on axis " + std::to_string(axis) + " of " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t src_row = s[axis] * inner, width = (end - begin) * inner, off = begin * inner;
  Shape shape = s;
  shape[axis] = end - begin;
  Tensor out(shape);
  const Tensor& va = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(va.data().begin() + o * src_row + off, width, out.data().begin() + o * width);
  const std::size_t ia = a.id;
  return g.record(std::move(out), {ia}, [ia, outer, src_row, width, off](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < width; ++j) ga[o * src_row + off + j] += gy[o * width + j];
  });
}

/// Per-sample matrix-vector product: a[B x M x P] * c[B x P] -> [B x M].
inline Var batched_matvec(Var a, Var c) {
  Graph& g = detail::graph_of(a, c);
  const Tensor& va = a.value();
  const Tensor& vc = c.value();
  if (va.rank() != 3 || vc.rank() != 2 || va.dim(0) != vc.dim(0) || va.dim(2) != vc.dim(1)) {
    fail(ErrorCode::ShapeMismatch,
         "batched_matvec " + shape_string(va.shape()) + " * " + shape_string(vc.shape()));
  }
  const std::size_t batch = va.dim(0), m = va.dim(1), p = va.dim(2);
  Tensor out(Shape{batch, m});
  for (std::size_t b = 0; b < batch; ++b)
    linalg::gemm_nn(m, 1, p, va.data().data() + b * m * p, vc.data().data() + b * p,
                    out.data().data() + b * m);
  const std::size_t ia = a.id, ic = c.id;
  return g.record(std::move(out), {ia, ic}, [ia, ic, batch, m, p](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad_buffer(self);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gyb = gy.data().data() + b * m;
      if (gr.requires_grad(ia)) {
        linalg::gemm_nn(m, p, 1, gyb, gr.value(ic).data().data() + b * p,
                        gr.grad_buffer(ia).data().data() + b * m * p);
      }
      if (gr.requires_grad(ic)) {
        linalg::gemm_tn(p, 1, m, gr.value(ia).data().data() + b * m * p, gyb,
                        gr.grad_buffer(ic).data().data() + b * p);
      }
    }
  });
}

}  // namespace delelstm
