#pragma once

// Compare-aggregate model: embeddings -> preprocessing -> attention ->
// comparison -> CNN aggregation -> task head.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seqmatch/aggregation.hpp"
#include "seqmatch/autodiff.hpp"
#include "seqmatch/comparison.hpp"
#include "seqmatch/data.hpp"
#include "seqmatch/embeddings.hpp"
#include "seqmatch/layers.hpp"

namespace seqmatch {

using ParamMap = std::map<std::string, Tensor>;

struct ModelConfig {
  ComparisonKind comparison = ComparisonKind::kSubMultNN;
  TaskShape task = TaskShape::kSelectFromK;
  std::size_t hidden = 150;
  std::vector<std::size_t> windows = {1, 2, 3};
  std::size_t num_classes = 3;

  // Rows fed to the CNN: one comparison block, or two stacked blocks
  // (question and answer against the plot) for the plot task.
  std::size_t aggregator_input_dim() const {
    const std::size_t block = comparison_output_dim(comparison, hidden);
    return task == TaskShape::kSelectFromKWithPlot ? 2 * block : block;
  }
  std::size_t aggregate_dim() const { return windows.size() * hidden; }

  void validate() const {
    if (hidden == 0) throw ConfigError("hidden dimension must be positive");
    if (windows.empty()) throw ConfigError("window list must not be empty");
    for (auto w : windows)
      if (w < 1) throw ConfigError("window sizes must be >= 1");
    if (task == TaskShape::kClassifyPair && num_classes < 2) {
      throw ConfigError("classification needs at least two classes");
    }
  }
};

// Window sizes used for each task family: plot-grounded selection,
// long-answer selection, and short-answer selection / entailment.
inline std::vector<std::size_t> default_windows(TaskShape task, bool long_answers = false) {
  if (task == TaskShape::kSelectFromKWithPlot) return {1, 3, 5};
  if (task == TaskShape::kSelectFromK && long_answers) return {1, 2, 3};
  return {1, 2, 3, 4, 5};
}

struct Model {
  ModelConfig config;
  Vocabulary vocab;
  EmbeddingTable embeddings;  // frozen; never part of `params`
  ParamMap params;
};

namespace names {
inline const std::string kGateWeight = "preprocess.gate_weight";
inline const std::string kGateBias = "preprocess.gate_bias";
inline const std::string kUpdateWeight = "preprocess.update_weight";
inline const std::string kUpdateBias = "preprocess.update_bias";
inline const std::string kAttentionWeight = "attention.weight";
inline const std::string kAttentionBias = "attention.bias";
inline const std::string kCompareWeight = "compare.weight";
inline const std::string kCompareTensor = "compare.tensor";
inline const std::string kCompareBias = "compare.bias";
inline std::string filters(std::size_t w) { return "aggregate.window" + std::to_string(w) + ".filters"; }
inline std::string filter_bias(std::size_t w) { return "aggregate.window" + std::to_string(w) + ".bias"; }
inline const std::string kSelectHiddenWeight = "select.hidden_weight";
inline const std::string kSelectHiddenBias = "select.hidden_bias";
inline const std::string kSelectScoreWeight = "select.score_weight";
inline const std::string kSelectScoreBias = "select.score_bias";
inline const std::string kClassifyWeight = "classify.weight";
inline const std::string kClassifyBias = "classify.bias";
}  // namespace names

// Shapes of every trainable tensor implied by a configuration and embedding
// width. Used for initialization and to validate checkpoints.
inline std::map<std::string, Shape> parameter_shapes(const ModelConfig& c, std::size_t embed_dim) {
  const std::size_t l = c.hidden;
  std::map<std::string, Shape> s;
  s[names::kGateWeight] = {l, embed_dim};
  s[names::kGateBias] = {l};
  s[names::kUpdateWeight] = {l, embed_dim};
  s[names::kUpdateBias] = {l};
  s[names::kAttentionWeight] = {l, l};
  s[names::kAttentionBias] = {l};
  switch (c.comparison) {
    case ComparisonKind::kNN:
    case ComparisonKind::kSubMultNN:
      s[names::kCompareWeight] = {l, 2 * l};
      s[names::kCompareBias] = {l};
      break;
    case ComparisonKind::kNTN:
      s[names::kCompareTensor] = {l, l, l};
      s[names::kCompareBias] = {l};
      break;
    default: break;
  }
  const std::size_t in = c.aggregator_input_dim();
  for (auto w : c.windows) {
    s[names::filters(w)] = {l, w * in};
    s[names::filter_bias(w)] = {l};
  }
  if (c.task == TaskShape::kClassifyPair) {
    s[names::kClassifyWeight] = {c.num_classes, c.aggregate_dim()};
    s[names::kClassifyBias] = {c.num_classes};
  } else {
    s[names::kSelectHiddenWeight] = {l, c.aggregate_dim()};
    s[names::kSelectHiddenBias] = {l};
    s[names::kSelectScoreWeight] = {l};
    s[names::kSelectScoreBias] = {1};
  }
  return s;
}

// Glorot-uniform matrices (NTN slices and filters use their own fan sizes),
// zero biases.
inline Model init_model(ModelConfig config, Vocabulary vocab, EmbeddingTable embeddings,
                        std::uint64_t seed) {
  config.validate();
  if (embeddings.vocab_size() != vocab.size()) {
    throw DimensionError("embedding table has " + std::to_string(embeddings.vocab_size()) +
                         " columns for a vocabulary of " + std::to_string(vocab.size()));
  }
  std::mt19937_64 rng(seed);
  Model m{std::move(config), std::move(vocab), std::move(embeddings), {}};
  for (const auto& [name, shape] : parameter_shapes(m.config, m.embeddings.dim())) {
    const bool is_bias = name.ends_with("bias");
    if (is_bias) {
      m.params[name] = Tensor::zeros(shape);
    } else if (shape.size() == 3) {
      m.params[name] = glorot_uniform(shape, shape[1], shape[2], rng);
    } else if (shape.size() == 1) {
      m.params[name] = glorot_uniform(shape, shape[0], 1, rng);
    } else {
      m.params[name] = glorot_uniform(shape, shape[1], shape[0], rng);
    }
  }
  return m;
}

// Parameters registered on a tape.
struct BoundModel {
  const Model* model = nullptr;
  PreprocessParams preprocess;
  AttentionParams attention;
  ComparisonParams comparison;
  AggregatorParams aggregator;
  std::optional<SelectionHeadParams> selection;
  std::optional<ClassifierHeadParams> classifier;
};

inline BoundModel bind(Tape& tape, const Model& m) {
  auto p = [&](const std::string& name) {
    auto it = m.params.find(name);
    if (it == m.params.end()) throw ConfigError("model is missing parameter '" + name + "'");
    return tape.param(name, it->second);
  };
  BoundModel b;
  b.model = &m;
  b.preprocess = {p(names::kGateWeight), p(names::kGateBias), p(names::kUpdateWeight),
                  p(names::kUpdateBias)};
  b.attention = {p(names::kAttentionWeight), p(names::kAttentionBias)};
  switch (m.config.comparison) {
    case ComparisonKind::kNN:
    case ComparisonKind::kSubMultNN:
      b.comparison.weight = p(names::kCompareWeight);
      b.comparison.bias = p(names::kCompareBias);
      break;
    case ComparisonKind::kNTN:
      b.comparison.tensor = p(names::kCompareTensor);
      b.comparison.bias = p(names::kCompareBias);
      break;
    default: break;
  }
  b.aggregator.windows = m.config.windows;
  for (auto w : m.config.windows) {
    b.aggregator.filters.push_back(p(names::filters(w)));
    b.aggregator.biases.push_back(p(names::filter_bias(w)));
  }
  if (m.config.task == TaskShape::kClassifyPair) {
    b.classifier = ClassifierHeadParams{p(names::kClassifyWeight), p(names::kClassifyBias)};
  } else {
    b.selection = SelectionHeadParams{p(names::kSelectHiddenWeight), p(names::kSelectHiddenBias),
                                      p(names::kSelectScoreWeight), p(names::kSelectScoreBias)};
  }
  return b;
}

using TokenIds = std::vector<std::size_t>;

struct EncodedInstance {
  TokenIds question;
  TokenIds plot;  // empty unless the task has a plot
  std::vector<TokenIds> candidates;
  std::vector<std::size_t> gold;
};

inline EncodedInstance encode(const MatchInstance& inst, const Vocabulary& vocab, TaskShape shape) {
  EncodedInstance e;
  e.question = vocab.encode(inst.question);
  if (inst.plot) e.plot = vocab.encode(*inst.plot);
  for (const auto& c : inst.candidates) e.candidates.push_back(vocab.encode(c));
  e.gold = inst.gold(shape);
  return e;
}

inline std::vector<EncodedInstance> encode(const Dataset& ds, const Vocabulary& vocab) {
  std::vector<EncodedInstance> out;
  out.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) out.push_back(encode(inst, vocab, ds.shape));
  return out;
}

// Dropout applies only when `rng` is set.
struct ForwardOptions {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

inline Var embed(Tape& tape, const Model& m, std::span<const std::size_t> ids, const ForwardOptions& opt) {
  Tensor x = lookup(m.embeddings, ids);
  if (opt.rng) x = embedding_dropout(x, opt.dropout, true, *opt.rng);
  return tape.constant(std::move(x));
}

// Intermediate values of one premise/target matching.
struct MatchTrace {
  AttentionResult attention;
  Var comparisons;  // l' x |target|
};

// Compares each target column with its attention-weighted premise summary.
inline MatchTrace match(const BoundModel& b, Var premise_pre, Var target_pre) {
  MatchTrace tr;
  tr.attention = attend(premise_pre, target_pre, b.attention);
  tr.comparisons = compare(b.model->config.comparison, b.comparison, target_pre, tr.attention.attended);
  return tr;
}

struct PairTrace {
  MatchTrace match;
  Var aggregated;  // nl
};

inline PairTrace forward_two_seq_trace(Tape& tape, const BoundModel& b, std::span<const std::size_t> premise,
                                       std::span<const std::size_t> target, const ForwardOptions& opt = {}) {
  if (premise.empty()) throw InputError("forward: question/premise sequence is empty");
  if (target.empty()) throw InputError("forward: answer/hypothesis sequence is empty");
  const Model& m = *b.model;
  Var q = preprocess(embed(tape, m, premise, opt), b.preprocess);
  Var a = preprocess(embed(tape, m, target, opt), b.preprocess);
  PairTrace tr;
  tr.match = match(b, q, a);
  tr.aggregated = aggregate(tr.match.comparisons, b.aggregator);
  return tr;
}

// Aggregated vector r (nl) for a question/premise and one answer/hypothesis.
inline Var forward_two_seq(Tape& tape, const BoundModel& b, std::span<const std::size_t> premise,
                           std::span<const std::size_t> target, const ForwardOptions& opt = {}) {
  return forward_two_seq_trace(tape, b, premise, target, opt).aggregated;
}

struct PlotTrace {
  MatchTrace question;                // computed once, shared by all candidates
  std::vector<MatchTrace> answers;    // one per candidate
  std::vector<Var> stacked;           // [t^q; t^a_k], 2l' x P
  Var aggregated;                     // nl x K
};

inline PlotTrace forward_three_seq_trace(Tape& tape, const BoundModel& b, std::span<const std::size_t> plot,
                                         std::span<const std::size_t> question,
                                         std::span<const TokenIds> candidates,
                                         const ForwardOptions& opt = {}) {
  if (plot.empty()) throw InputError("forward: plot sequence is empty");
  if (question.empty()) throw InputError("forward: question sequence is empty");
  if (candidates.empty()) throw ContractError("forward: need at least one candidate");
  const Model& m = *b.model;
  Var p = preprocess(embed(tape, m, plot, opt), b.preprocess);
  Var q = preprocess(embed(tape, m, question, opt), b.preprocess);
  PlotTrace tr;
  tr.question = match(b, q, p);
  std::vector<Var> columns;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (candidates[k].empty()) throw InputError("forward: candidate " + std::to_string(k) + " is empty");
    Var a = preprocess(embed(tape, m, candidates[k], opt), b.preprocess);
    tr.answers.push_back(match(b, a, p));
    tr.stacked.push_back(concat_rows({tr.question.comparisons, tr.answers.back().comparisons}));
    columns.push_back(aggregate(tr.stacked.back(), b.aggregator));
  }
  tr.aggregated = concat_cols(columns);
  return tr;
}

// R (nl x K): one aggregated column per candidate.
inline Var forward_three_seq(Tape& tape, const BoundModel& b, std::span<const std::size_t> plot,
                             std::span<const std::size_t> question, std::span<const TokenIds> candidates,
                             const ForwardOptions& opt = {}) {
  return forward_three_seq_trace(tape, b, plot, question, candidates, opt).aggregated;
}

// Output distribution for an instance: over classes for pair classification,
// over candidates for selection.
inline Var predict(Tape& tape, const BoundModel& b, const EncodedInstance& x, const ForwardOptions& opt = {}) {
  const ModelConfig& c = b.model->config;
  switch (c.task) {
    case TaskShape::kClassifyPair: {
      if (x.candidates.size() != 1) throw InputError("pair classification needs exactly one hypothesis");
      return classify(forward_two_seq(tape, b, x.question, x.candidates[0], opt), *b.classifier);
    }
    case TaskShape::kSelectFromK: {
      if (x.candidates.empty()) throw InputError("selection needs at least one candidate");
      std::vector<Var> columns;
      for (const auto& cand : x.candidates) columns.push_back(forward_two_seq(tape, b, x.question, cand, opt));
      return select_candidate(concat_cols(columns), *b.selection);
    }
    case TaskShape::kSelectFromKWithPlot:
      return select_candidate(forward_three_seq(tape, b, x.plot, x.question, x.candidates, opt), *b.selection);
  }
  throw ConfigError("unknown task shape");
}

inline Var instance_loss(Tape& tape, const BoundModel& b, const EncodedInstance& x,
                         const ForwardOptions& opt = {}) {
  return neg_log_likelihood(predict(tape, b, x, opt), x.gold);
}

}  // namespace seqmatch
