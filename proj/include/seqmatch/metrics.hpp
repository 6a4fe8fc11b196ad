#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "seqmatch/errors.hpp"

namespace seqmatch {

inline double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> golds) {
  if (predictions.size() != golds.size()) {
    throw InputError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(golds.size()) + " gold labels");
  }
  if (predictions.empty()) throw InputError("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) hits += predictions[i] == golds[i];
  return static_cast<double>(hits) / static_cast<double>(golds.size());
}

// Index of the largest score; ties go to the lower index.
inline std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw InputError("argmax: empty score list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

struct RankedQuestion {
  std::vector<double> scores;
  std::vector<std::size_t> correct;
};

struct RankingMetrics {
  double map = 0.0;
  double mrr = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Candidate order by descending score, lower index first on ties.
inline std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// Mean average precision and mean reciprocal rank. Questions without any
// correct candidate are skipped and reported through `warnings`.
inline RankingMetrics map_mrr(std::span<const RankedQuestion> questions,
                              std::vector<std::string>* warnings = nullptr) {
  RankingMetrics m;
  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    const auto& q = questions[qi];
    if (q.correct.empty()) {
      ++m.skipped;
      if (warnings) warnings->push_back("question " + std::to_string(qi) + " has no correct candidate; skipped");
      continue;
    }
    if (q.scores.empty()) throw InputError("map_mrr: question " + std::to_string(qi) + " has no candidates");
    std::vector<bool> relevant(q.scores.size(), false);
    for (auto c : q.correct) {
      if (c >= q.scores.size()) throw InputError("map_mrr: correct index out of range");
      relevant[c] = true;
    }
    const auto order = rank_order(q.scores);
    double precision_sum = 0.0, rr = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (!relevant[order[r]]) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      if (hits == 1) rr = 1.0 / static_cast<double>(r + 1);
    }
    m.map += precision_sum / static_cast<double>(hits);
    m.mrr += rr;
    ++m.evaluated;
  }
  if (m.evaluated > 0) {
    m.map /= static_cast<double>(m.evaluated);
    m.mrr /= static_cast<double>(m.evaluated);
  }
  return m;
}

}  // namespace seqmatch
