#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "delelstm/cells.hpp"
#include "support/gradcheck.hpp"

namespace delelstm {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double bound = 1.0) {
  std::uniform_real_distribution<double> d(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

StandardLstmParams zero_standard(std::size_t m, std::size_t d) {
  StandardLstmParams p;
  for_each_gate(p, [&](const char*, GateWeights<Tensor>& g) {
    g.recurrent = Tensor::zeros({m, m});
    g.input = Tensor::zeros({m, d});
    g.bias = Tensor::zeros({m});
  });
  return p;
}

TensorLstmParams randomized_tensor_params(std::size_t m, std::size_t d, std::mt19937_64& rng) {
  TensorLstmParams p = init_tensor_lstm(m, d, rng);
  for_each_gate(p, [&](const char*, GateWeights<Tensor>& g) { g.bias = random_tensor({d, m}, rng, 0.5); });
  return p;
}

// --- tensor_dot -------------------------------------------------------------

TEST(TensorDot, ScalarPerRow) {
  Graph g;
  const Var u = g.constant(Tensor(Shape{2, 1, 1}, {2, 3}));
  const Var h = g.constant(Tensor::matrix({{4}, {5}}));
  EXPECT_EQ(tensor_dot(u, h).value(), Tensor::matrix({{8}, {15}}));
}

TEST(TensorDot, StackedIdentitiesReturnInput) {
  std::mt19937_64 rng(1);
  const std::size_t d = 3, m = 4;
  Tensor u({d, m, m});
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < m; ++i) u.at(k, i, i) = 1.0;
  const Tensor h = random_tensor({d, m}, rng);
  Graph g;
  EXPECT_EQ(tensor_dot(g.constant(u), g.constant(h)).value(), h);
}

TEST(TensorDot, SingleVariableReducesToMatmul) {
  std::mt19937_64 rng(2);
  const std::size_t m = 5;
  const Tensor u = random_tensor({1, m, m}, rng);
  const Tensor h = random_tensor({1, m}, rng);
  Graph g;
  const Tensor viaDot = tensor_dot(g.constant(u), g.constant(h)).value();
  const Tensor viaMatmul = matmul(g.constant(u.reshaped({m, m})), g.constant(h.reshaped({m}))).value();
  EXPECT_EQ(viaDot.reshaped({m}), viaMatmul);
}

TEST(TensorDot, InputProductAndShapeErrors) {
  Graph g;
  const Var w = g.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  EXPECT_EQ(tensor_dot_input(w, g.constant(Tensor::vector({1, 0, -2}))).value(),
            Tensor::matrix({{1, 2}, {0, 0}, {-10, -12}}));
  EXPECT_THROW(tensor_dot_input(w, g.constant(Tensor::vector({1, 2}))), Error);
  EXPECT_THROW(tensor_dot(g.constant(Tensor::zeros({2, 3, 3})), g.constant(Tensor::zeros({3, 3}))), Error);
}

// --- standard cell -------------------------------------------------------------

TEST(StandardCell, ZeroFixpoint) {
  const auto p = zero_standard(3, 2);
  const StandardLstmState s{Tensor::zeros({3}), Tensor::zeros({3})};
  const auto out = step_standard(Tensor::vector({0.7, -1.2}), s, p);
  EXPECT_EQ(out.hidden, Tensor::zeros({3}));
  EXPECT_EQ(out.cell, Tensor::zeros({3}));
}

TEST(StandardCell, ScalarHandEvaluation) {
  auto p = zero_standard(1, 1);
  p.candidate.bias[0] = 1.0;
  const auto out = step_standard(Tensor::vector({0.3}), {Tensor::zeros({1}), Tensor::zeros({1})}, p);
  const double cell = 0.5 * std::tanh(1.0);
  const double hidden = 0.5 * std::tanh(cell);
  EXPECT_NEAR(out.cell[0], cell, 1e-15);
  EXPECT_NEAR(out.hidden[0], hidden, 1e-15);
  EXPECT_NEAR(out.cell[0], 0.38080, 1e-4);
  EXPECT_NEAR(out.hidden[0], 0.18162, 1e-4);
}

TEST(StandardCell, SaturatedForgetGateCarriesMemory) {
  std::mt19937_64 rng(5);
  auto p = init_standard_lstm(4, 2, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    p.forget_gate.bias[i] = 50.0;
    p.input_gate.bias[i] = -50.0;
  }
  for (auto* g : {&p.forget_gate, &p.input_gate}) {
    for (auto& v : g->recurrent.data()) v *= 1e-3;
    for (auto& v : g->input.data()) v *= 1e-3;
  }
  const StandardLstmState s{random_tensor({4}, rng), random_tensor({4}, rng, 3.0)};
  const auto out = step_standard(random_tensor({2}, rng), s, p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.cell[i], s.cell[i], 1e-12);
}

TEST(StandardCell, ShapeMismatchIsReported) {
  const auto p = zero_standard(3, 2);
  try {
    step_standard(Tensor::vector({1, 2, 3}), {Tensor::zeros({3}), Tensor::zeros({3})}, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

// --- tensorized cell -----------------------------------------------------------

TEST(TensorizedCell, ZeroParamsZeroState) {
  TensorLstmParams p;
  for_each_gate(p, [](const char*, GateWeights<Tensor>& g) {
    g.recurrent = Tensor::zeros({2, 3, 3});
    g.input = Tensor::zeros({2, 3});
    g.bias = Tensor::zeros({2, 3});
  });
  const auto out = step_tensorized(Tensor::vector({1.5, -2}), {Tensor::zeros({2, 3}), Tensor::zeros({2, 3})}, p);
  EXPECT_EQ(out.hidden, Tensor::zeros({2, 3}));
  EXPECT_EQ(out.cell, Tensor::zeros({2, 3}));
}

StandardLstmParams standard_from_single_variable(const TensorLstmParams& t, std::size_t m) {
  StandardLstmParams s;
  auto copy = [m](const GateWeights<Tensor>& src) {
    return GateWeights<Tensor>{src.recurrent.reshaped({m, m}), src.input.reshaped({m, 1}),
                               src.bias.reshaped({m})};
  };
  s.input_gate = copy(t.input_gate);
  s.forget_gate = copy(t.forget_gate);
  s.output_gate = copy(t.output_gate);
  s.candidate = copy(t.candidate);
  return s;
}

TEST(TensorizedCell, SingleVariableMatchesStandardCellExactly) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t m = 1 + seed % 9;
    const auto tp = randomized_tensor_params(m, 1, rng);
    const auto sp = standard_from_single_variable(tp, m);
    StandardLstmState s{Tensor::zeros({m}), Tensor::zeros({m})};
    TensorLstmState t{Tensor::zeros({1, m}), Tensor::zeros({1, m})};
    for (int step = 0; step < 6; ++step) {
      const Tensor x = random_tensor({1}, rng, 2.0);
      s = step_standard(x, s, sp);
      t = step_tensorized(x, t, tp);
      ASSERT_EQ(t.hidden.reshaped({m}), s.hidden) << "seed " << seed << " step " << step;
      ASSERT_EQ(t.cell.reshaped({m}), s.cell) << "seed " << seed << " step " << step;
    }
  }
}

TEST(TensorizedCell, PerturbingOneVariableLeavesOtherRowsUntouched) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    std::mt19937_64 rng(100 + trial);
    const std::size_t d = 2 + trial % 4, m = 1 + trial % 7, steps = 6;
    const auto p = randomized_tensor_params(m, d, rng);
    const std::size_t j = rng() % d;
    std::vector<Tensor> xs, xs_perturbed;
    for (std::size_t t = 0; t < steps; ++t) {
      xs.push_back(random_tensor({d}, rng, 2.0));
      xs_perturbed.push_back(xs.back());
      xs_perturbed.back()[j] += 1.0 + random_tensor({1}, rng)[0];
    }
    TensorLstmState a{Tensor::zeros({d, m}), Tensor::zeros({d, m})}, b = a;
    for (std::size_t t = 0; t < steps; ++t) {
      a = step_tensorized(xs[t], a, p);
      b = step_tensorized(xs_perturbed[t], b, p);
      bool row_j_changed = false;
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t k = 0; k < m; ++k) {
          if (r == j) {
            row_j_changed = row_j_changed || a.hidden.at(r, k) != b.hidden.at(r, k);
            continue;
          }
          ASSERT_LE(std::abs(a.hidden.at(r, k) - b.hidden.at(r, k)), 1e-15);
          ASSERT_LE(std::abs(a.cell.at(r, k) - b.cell.at(r, k)), 1e-15);
        }
      EXPECT_TRUE(row_j_changed);
    }
  }
}

TEST(Cells, GateActivationsStayInRange) {
  std::mt19937_64 rng(9);
  const std::size_t batch = 4, d = 3, m = 5;
  Graph g;
  const auto sp = bind(g, init_standard_lstm(m, d, rng));
  const auto tp = bind(g, init_tensor_lstm(m, d, rng));
  CellState s{g.constant(Tensor::zeros({batch, m})), g.constant(Tensor::zeros({batch, m}))};
  CellState t{g.constant(Tensor::zeros({batch, d, m})), g.constant(Tensor::zeros({batch, d, m}))};
  for (int step = 0; step < 10; ++step) {
    const Var x = g.constant(random_tensor({batch, d}, rng, 5.0));
    const CellStep ss = step_standard(x, s, sp);
    const CellStep ts = step_tensorized(x, t, tp);
    for (const CellStep* cs : {&ss, &ts}) {
      for (const Var& gate : {cs->input_gate, cs->forget_gate, cs->output_gate})
        for (double v : gate.value().data()) {
          EXPECT_GT(v, 0.0);
          EXPECT_LT(v, 1.0);
        }
      for (double v : cs->candidate.value().data()) EXPECT_LT(std::abs(v), 1.0);
      for (double v : cs->hidden.value().data()) EXPECT_LT(std::abs(v), 1.0);
    }
    s = ss.state();
    t = ts.state();
  }
}

// Gradients through five unrolled steps of each cell, all parameters checked.
template <bool Tensorized>
void check_unrolled_gradients(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = 2, m = 3, batch = 2, steps = 5;
  const LstmWeights<Tensor> p = Tensorized ? randomized_tensor_params(m, d, rng) : init_standard_lstm(m, d, rng);
  std::vector<Tensor> inputs;
  for_each_tensor(p, "cell", [&](const std::string&, const Tensor& t) { inputs.push_back(t); });
  std::vector<Tensor> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(random_tensor({batch, d}, rng, 1.5));
  const testing::LossBuilder f = [&](Graph& g, const std::vector<Var>& v) {
    LstmWeights<Var> w;
    std::size_t k = 0;
    for_each_gate(w, [&](const char*, GateWeights<Var>& gw) {
      gw.recurrent = v[k++];
      gw.input = v[k++];
      gw.bias = v[k++];
    });
    const Shape state_shape = Tensorized ? Shape{batch, d, m} : Shape{batch, m};
    CellState s{g.constant(Tensor::zeros(state_shape)), g.constant(Tensor::zeros(state_shape))};
    for (const auto& x : xs) {
      s = (Tensorized ? step_tensorized(g.constant(x), s, w) : step_standard(g.constant(x), s, w)).state();
    }
    return sum(mul(s.hidden, add_scalar(s.cell, 0.3)));
  };
  const auto cmp = testing::compare_gradients(testing::analytic_gradients(f, inputs),
                                              testing::numeric_gradients(f, inputs), 1e-4, 1e-7);
  EXPECT_TRUE(cmp.ok) << cmp.detail;
  EXPECT_GT(cmp.checked, 0u);
}

TEST(Cells, UnrolledStandardGradients) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) check_unrolled_gradients<false>(seed);
}

TEST(Cells, UnrolledTensorizedGradients) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) check_unrolled_gradients<true>(seed);
}

}  // namespace
}  // namespace delelstm
