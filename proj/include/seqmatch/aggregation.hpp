#pragma once

// CNN aggregation of comparison vectors and the two output heads.

#include <cstddef>
#include <vector>

#include "seqmatch/autodiff.hpp"

namespace seqmatch {

// One filter bank (l_out x window*l_in) and bias per window size.
struct AggregatorParams {
  std::vector<std::size_t> windows;
  std::vector<Var> filters;
  std::vector<Var> biases;
};

// Concatenation, in window order, of the max-pooled convolution for every
// window size: a vector of n * l_out entries.
inline Var aggregate(Var comparisons, const AggregatorParams& p) {
  if (p.windows.empty()) throw ConfigError("aggregate: empty window list");
  if (p.filters.size() != p.windows.size() || p.biases.size() != p.windows.size()) {
    throw ConfigError("aggregate: need one filter bank and bias per window");
  }
  if (comparisons.value().rank() != 2 || comparisons.value().cols() == 0) {
    throw ContractError("aggregate: empty comparison sequence");
  }
  std::vector<Var> pooled;
  pooled.reserve(p.windows.size());
  for (std::size_t i = 0; i < p.windows.size(); ++i)
    pooled.push_back(conv_maxpool(comparisons, p.filters[i], p.windows[i], p.biases[i]));
  return concat_rows(pooled);
}

struct SelectionHeadParams {
  Var hidden_weight;  // l x nl
  Var hidden_bias;    // l
  Var score_weight;   // l
  Var score_bias;     // 1
};

// softmax over K of w·tanh(W r_k + b) + b0, for aggregated vectors r_k given
// as the columns of `candidates` (nl x K).
inline Var select_candidate(Var candidates, const SelectionHeadParams& p) {
  const Tensor& R = candidates.value();
  if (R.rank() != 2 || R.cols() == 0) throw ContractError("select_candidate: need at least one candidate");
  const std::size_t count = R.cols();
  const std::size_t l = p.score_weight.value().size();
  Var hidden = tanh(add_broadcast(matmul(p.hidden_weight, candidates), p.hidden_bias));  // l x K
  Var scores = matmul(reshape(p.score_weight, {1, l}), hidden);                          // 1 x K
  scores = add_broadcast(scores, p.score_bias);
  Var probs = softmax_columns(transpose(scores));  // K x 1
  return reshape(probs, {count});
}

struct ClassifierHeadParams {
  Var weight;  // C x nl
  Var bias;    // C
};

inline Var classify(Var aggregated, const ClassifierHeadParams& p) {
  const Tensor& W = p.weight.value();
  const Tensor& r = aggregated.value();
  if (r.rank() != 1 || W.rank() != 2 || W.cols() != r.size() || p.bias.value().size() != W.rows()) {
    throw DimensionError("classify: weight " + shape_str(W.shape()) + " cannot map input " +
                         shape_str(r.shape()));
  }
  return softmax_columns(add(matmul(p.weight, aggregated), p.bias));
}

}  // namespace seqmatch
