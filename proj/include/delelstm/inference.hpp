#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "delelstm/decomposition.hpp"
#include "delelstm/graph.hpp"
#include "delelstm/model.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

/// Gathers timestep-major batch inputs from a panel X[N x D x T] for the
/// given sample indices.
inline BatchSequence gather_batch(const Tensor& panel, std::span<const std::size_t> samples) {
  if (panel.rank() != 3) fail(ErrorCode::ShapeMismatch, "panel must be [N x D x T]");
  const std::size_t vars = panel.dim(1), steps = panel.dim(2);
  BatchSequence seq;
  seq.inputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor xt({samples.size(), vars});
    for (std::size_t b = 0; b < samples.size(); ++b)
      for (std::size_t d = 0; d < vars; ++d) xt.at(b, d) = panel.at(samples[b], d, t);
    seq.inputs.push_back(std::move(xt));
  }
  return seq;
}

struct InferenceResult {
  Tensor predictions;  // [n x T], in the model's (standardized) target units
  std::vector<std::vector<DecompositionWeights>> weights;  // [n][T]; empty for the plain LSTM
};

/// Forward-only pass over the selected samples, processed in chunks.
inline InferenceResult run_inference(const DelelstmParams& params, const Tensor& panel,
                                     std::span<const std::size_t> samples, const ForwardOptions& options,
                                     std::size_t chunk = 64) {
  const std::size_t steps = panel.dim(2);
  InferenceResult out{Tensor({samples.size(), steps}), {}};
  const bool decomposed = params.kind == ModelKind::Delelstm;
  if (decomposed) out.weights.resize(samples.size());
  for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
    const std::size_t end = std::min(samples.size(), begin + chunk);
    const auto part = samples.subspan(begin, end - begin);
    Graph g;
    const BoundModel model = bind(g, params);
    const SequenceVars seq = forward_sequence(g, model, gather_batch(panel, part), options);
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor& pred = seq.predictions[t].value();
      for (std::size_t b = 0; b < part.size(); ++b) {
        out.predictions.at(begin + b, t) = pred[b];
        if (decomposed) {
          out.weights[begin + b].push_back(split_coefficients(
              seq.coefficients[t].value(), b,
              residual_norm(seq.approximation[t].value(), seq.raw_hidden[t].value(), b)));
        }
      }
    }
  }
  return out;
}

}  // namespace delelstm
