#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "delelstm/interpretation.hpp"

namespace delelstm {
namespace {

DecompositionWeights weights(std::vector<double> alpha, std::vector<double> beta) {
  const std::size_t d = alpha.size();
  return {Tensor({d}, std::move(alpha)), Tensor({d}, std::move(beta)), 0.0};
}

std::vector<DecompositionWeights> random_sequence(std::mt19937_64& rng, std::size_t steps, std::size_t vars) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<DecompositionWeights> out;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> a(vars), b(vars);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    out.push_back(weights(a, b));
  }
  return out;
}

TEST(Normalize, JointL1) {
  const std::vector raw{weights({2, -2}, {1, 1})};
  const auto n = normalize_weights(raw);
  EXPECT_NEAR(n.alpha.at(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(n.alpha.at(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(n.beta.at(0, 0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(n.beta.at(0, 1), 1.0 / 6.0, 1e-15);
}

TEST(Normalize, PureInnovation) {
  const std::vector raw{weights({0}, {5})};
  const auto n = normalize_weights(raw);
  EXPECT_EQ(n.alpha[0], 0.0);
  EXPECT_EQ(n.beta[0], 1.0);
}

TEST(Normalize, ScaleInvariant) {
  std::mt19937_64 rng(1);
  const auto raw = random_sequence(rng, 6, 3);
  auto scaled = raw;
  for (std::size_t t = 0; t < scaled.size(); ++t) {
    const double k = 0.01 + 10.0 * static_cast<double>(t);
    for (auto& v : scaled[t].alpha.data()) v *= k;
    for (auto& v : scaled[t].beta.data()) v *= k;
  }
  const auto a = normalize_weights(raw), b = normalize_weights(scaled);
  for (std::size_t i = 0; i < a.alpha.size(); ++i) {
    EXPECT_NEAR(a.alpha[i], b.alpha[i], 1e-14);
    EXPECT_NEAR(a.beta[i], b.beta[i], 1e-14);
  }
}

TEST(Normalize, DegenerateStep) {
  const std::vector raw{weights({1, 0}, {0, 1}), weights({0, 0}, {0, 0})};
  try {
    normalize_weights(raw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateWeights);
  }
  const auto n = normalize_weights(raw, true);
  EXPECT_TRUE(n.valid[0]);
  EXPECT_FALSE(n.valid[1]);
}

TEST(Normalize, EmptyAndRagged) {
  EXPECT_THROW(normalize_weights(std::vector<DecompositionWeights>{}), Error);
  const std::vector raw{weights({1, 0}, {0, 1}), weights({1}, {1})};
  EXPECT_THROW(normalize_weights(raw), Error);
}

TEST(Instantaneous, Formula) {
  EXPECT_DOUBLE_EQ(instantaneous_importance(0.3, 0.7), 0.7);
  EXPECT_EQ(instantaneous_importance(0.5, 0.0), 0.0);
  for (double x : {1e-6, 0.1, 0.5, 3.0}) EXPECT_EQ(instantaneous_importance(x, x), 0.5);
  EXPECT_DOUBLE_EQ(long_term_effect(0.3, 0.7), 1.0 - 0.7);
}

TEST(Instantaneous, Degenerate) {
  try {
    instantaneous_importance(0.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegeneratePair);
  }
  EXPECT_THROW(instantaneous_importance(-0.1, 0.5), Error);
}

TEST(Global, ThreeFourFive) {
  NormalizedWeights n{Tensor::matrix({{0.6}}), Tensor::matrix({{0.8}}), {true}};
  EXPECT_NEAR(global_importance(n)[0], 1.0, 1e-15);
}

TEST(Global, AveragesOverSteps) {
  NormalizedWeights n{Tensor::matrix({{0.3}, {0.0}}), Tensor::matrix({{0.4}, {0.0}}), {true, true}};
  EXPECT_NEAR(global_importance(n)[0], 0.25, 1e-15);
}

TEST(Global, ChainedFromDecomposition) {
  const std::vector raw{weights({4.0 / 3.0}, {7.0 / 3.0})};
  const auto n = normalize_weights(raw);
  EXPECT_NEAR(n.alpha[0], 4.0 / 11.0, 1e-15);
  EXPECT_NEAR(n.beta[0], 7.0 / 11.0, 1e-15);
  EXPECT_NEAR(global_importance(n)[0], std::sqrt(65.0) / 11.0, 1e-15);
  EXPECT_NEAR(global_importance(n)[0], 0.73300, 1e-4);
}

TEST(Global, SkipsDegenerateSteps) {
  const std::vector raw{weights({0.3}, {0.4}), weights({0.0}, {0.0})};
  const auto r = build_report(raw);
  EXPECT_NEAR(r.global[0], 5.0 / 7.0, 1e-15);
  EXPECT_EQ(r.degenerate_steps, 1u);
  EXPECT_TRUE(std::isnan(r.instantaneous.at(1, 0)));
}

TEST(Report, Identities) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t steps = 1 + trial % 9, vars = 1 + trial % 6;
    const auto raw = random_sequence(rng, steps, vars);
    const auto n = normalize_weights(raw);
    for (std::size_t t = 0; t < steps; ++t) {
      double s = 0.0;
      for (std::size_t d = 0; d < vars; ++d) {
        EXPECT_GE(n.alpha.at(t, d), 0.0);
        EXPECT_GE(n.beta.at(t, d), 0.0);
        s += n.alpha.at(t, d) + n.beta.at(t, d);
      }
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
    const auto r = build_report(raw);
    for (std::size_t i = 0; i < r.instantaneous.size(); ++i) {
      EXPECT_GE(r.instantaneous[i], 0.0);
      EXPECT_LE(r.instantaneous[i], 1.0);
      EXPECT_EQ(r.instantaneous[i] + r.long_term[i], 1.0);
    }
    for (double g : r.global.data()) {
      EXPECT_GE(g, 0.0);
      EXPECT_LE(g, 1.0);
    }
  }
}

TEST(Report, InstantaneousInvariantUnderRescaling) {
  std::mt19937_64 rng(3);
  const auto raw = random_sequence(rng, 5, 4);
  auto scaled = raw;
  for (auto& w : scaled) {
    for (auto& v : w.alpha.data()) v *= 37.5;
    for (auto& v : w.beta.data()) v *= 37.5;
  }
  const auto a = build_report(raw), b = build_report(scaled);
  for (std::size_t i = 0; i < a.instantaneous.size(); ++i) EXPECT_NEAR(a.instantaneous[i], b.instantaneous[i], 1e-14);
}

TEST(Report, SingleVariable) {
  std::mt19937_64 rng(4);
  const auto r = build_report(random_sequence(rng, 7, 1), {"only"});
  EXPECT_EQ(r.ranking(), std::vector<std::size_t>{0});
  EXPECT_EQ(r.variable_names, std::vector<std::string>{"only"});
  EXPECT_GE(r.global[0], std::sqrt(0.5) - 1e-12);
  EXPECT_LE(r.global[0], 1.0);
}

TEST(Report, PermutationEquivariance) {
  std::mt19937_64 rng(5);
  const std::size_t steps = 6, vars = 4;
  const auto raw = random_sequence(rng, steps, vars);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<DecompositionWeights> permuted;
  for (const auto& w : raw) {
    DecompositionWeights p{Tensor({vars}), Tensor({vars}), 0.0};
    for (std::size_t d = 0; d < vars; ++d) {
      p.alpha[d] = w.alpha[perm[d]];
      p.beta[d] = w.beta[perm[d]];
    }
    permuted.push_back(p);
  }
  const auto a = build_report(raw), b = build_report(permuted);
  for (std::size_t d = 0; d < vars; ++d) {
    EXPECT_NEAR(b.global[d], a.global[perm[d]], 1e-15);
    for (std::size_t t = 0; t < steps; ++t) {
      EXPECT_NEAR(b.instantaneous.at(t, d), a.instantaneous.at(t, perm[d]), 1e-15);
      EXPECT_NEAR(b.temporal_weight.at(t, d), a.temporal_weight.at(t, perm[d]), 1e-15);
    }
  }
  std::vector<std::size_t> mapped;
  for (std::size_t i : b.ranking()) mapped.push_back(perm[i]);
  EXPECT_EQ(mapped, a.ranking());
}

TEST(Report, NameCountChecked) {
  std::mt19937_64 rng(6);
  try {
    build_report(random_sequence(rng, 3, 2), {"a"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Report, Aggregation) {
  const std::vector r1{weights({1.0}, {0.0})};
  const std::vector r2{weights({0.0}, {1.0})};
  const std::vector reports{build_report(r1), build_report(r2)};
  const auto agg = aggregate_reports(reports);
  EXPECT_DOUBLE_EQ(agg.instantaneous[0], 0.5);
  EXPECT_DOUBLE_EQ(agg.long_term[0], 0.5);
  EXPECT_DOUBLE_EQ(agg.global[0], 1.0);
  EXPECT_EQ(agg.samples, 2u);
}

TEST(Report, MeanInstantaneousFromStep) {
  const std::vector raw{weights({1.0}, {0.0}), weights({1.0}, {1.0}), weights({1.0}, {3.0})};
  const auto r = build_report(raw);
  EXPECT_DOUBLE_EQ(r.mean_instantaneous(0, 1), (0.5 + 0.75) / 2.0);
  EXPECT_TRUE(std::isnan(r.mean_instantaneous(0, 3)));
}

}  // namespace
}  // namespace delelstm
