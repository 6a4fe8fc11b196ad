#pragma once

// Gated word-level preprocessing and one-directional attention.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "seqmatch/autodiff.hpp"

namespace seqmatch {

// Shared by both sequences of a pair.
struct PreprocessParams {
  Var gate_weight;    // l x d
  Var gate_bias;      // l
  Var update_weight;  // l x d
  Var update_bias;    // l
};

struct AttentionParams {
  Var weight;  // l x l
  Var bias;    // l
};

// Glorot-uniform weights; biases start at zero.
template <typename Rng>
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), -limit, limit, rng);
}

// sigmoid(W_gate X + b_gate) * tanh(W_update X + b_update), column by column.
// Output column j depends only on input column j.
inline Var preprocess(Var x, const PreprocessParams& p) {
  const Tensor& X = x.value();
  const Tensor& Wg = p.gate_weight.value();
  if (X.rank() != 2 || Wg.rank() != 2 || Wg.cols() != X.rows()) {
    throw DimensionError("preprocess: input " + shape_str(X.shape()) +
                         " does not match gate weight " + shape_str(Wg.shape()));
  }
  Var gate = sigmoid(add_broadcast(matmul(p.gate_weight, x), p.gate_bias));
  Var update = tanh(add_broadcast(matmul(p.update_weight, x), p.update_bias));
  return mul(gate, update);
}

struct AttentionResult {
  Var weights;   // Q x A, each column a distribution over premise positions
  Var attended;  // l x A, column j = premise columns weighted by weights[:, j]
};

inline constexpr double kMaskedScore = -1e30;

// For every column of `target`, a softmax over the columns of `premise`.
// `premise_valid`, when non-empty, flags real (true) vs padded (false)
// premise columns; padded columns get a score of kMaskedScore.
inline AttentionResult attend(Var premise, Var target, const AttentionParams& p,
                              std::span<const bool> premise_valid = {}) {
  const Tensor& Qb = premise.value();
  const Tensor& Ab = target.value();
  if (Qb.rank() != 2 || Qb.cols() == 0) {
    throw ContractError("attend: attention over an empty premise is undefined");
  }
  if (Ab.rank() != 2 || Ab.rows() != Qb.rows()) {
    throw DimensionError("attend: premise " + shape_str(Qb.shape()) + " and target " +
                         shape_str(Ab.shape()) + " disagree on hidden size");
  }
  Var projected = add_broadcast(matmul(p.weight, premise), p.bias);  // l x Q
  Var scores = matmul(transpose(projected), target);                 // Q x A
  if (!premise_valid.empty()) {
    if (premise_valid.size() != Qb.cols()) throw DimensionError("attend: mask length mismatch");
    Tensor mask({Qb.cols(), Ab.cols()});
    for (std::size_t i = 0; i < Qb.cols(); ++i)
      if (!premise_valid[i])
        for (std::size_t j = 0; j < Ab.cols(); ++j) mask.at(i, j) = kMaskedScore;
    scores = add(scores, premise.tape->constant(std::move(mask)));
  }
  Var weights = softmax_columns(scores);
  return {weights, matmul(premise, weights)};
}

}  // namespace seqmatch
