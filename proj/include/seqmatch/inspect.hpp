#pragma once

// Which sequence positions produce the pooled maxima of the aggregation CNN.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqmatch/model.hpp"

namespace seqmatch {

struct WindowActivation {
  std::size_t window = 0;
  std::vector<std::size_t> argmax;  // window start position per filter
  std::vector<double> max_value;
  std::vector<bool> padding;        // start position lies in right padding
};

// Activations over one aggregated sequence: the answer (two-sequence tasks)
// or the plot matched against candidate `candidate` (plot task).
struct SequenceActivation {
  std::size_t candidate = 0;
  Tokens tokens;
  std::vector<WindowActivation> windows;
};

struct ActivationReport {
  std::string id;
  Tokens question;
  std::optional<Tokens> plot;
  std::vector<Tokens> candidates;
  std::vector<double> probabilities;
  std::vector<SequenceActivation> sequences;
};

inline std::vector<WindowActivation> window_activations(const Tensor& comparisons, const Model& m) {
  std::vector<WindowActivation> out;
  const std::size_t len = comparisons.cols();
  for (auto w : m.config.windows) {
    auto res = conv_maxpool_forward(comparisons, m.params.at(names::filters(w)), w,
                                    m.params.at(names::filter_bias(w)));
    WindowActivation wa;
    wa.window = w;
    wa.argmax = res.argmax;
    wa.max_value = res.pooled.values();
    for (auto p : res.argmax) wa.padding.push_back(p >= len);
    out.push_back(std::move(wa));
  }
  return out;
}

inline ActivationReport inspect_instance(const Model& m, const MatchInstance& inst) {
  const TaskShape shape = m.config.task;
  EncodedInstance x = encode(inst, m.vocab, shape);
  ActivationReport rep;
  rep.id = inst.id;
  rep.question = inst.question;
  rep.plot = inst.plot;
  rep.candidates = inst.candidates;
  Tape tape;
  BoundModel b = bind(tape, m);
  rep.probabilities = predict(tape, b, x).value().values();
  if (shape == TaskShape::kSelectFromKWithPlot) {
    PlotTrace tr = forward_three_seq_trace(tape, b, x.plot, x.question, x.candidates);
    for (std::size_t k = 0; k < x.candidates.size(); ++k)
      rep.sequences.push_back({k, *inst.plot, window_activations(tr.stacked[k].value(), m)});
  } else {
    for (std::size_t k = 0; k < x.candidates.size(); ++k) {
      PairTrace tr = forward_two_seq_trace(tape, b, x.question, x.candidates[k]);
      rep.sequences.push_back({k, inst.candidates[k], window_activations(tr.match.comparisons.value(), m)});
    }
  }
  return rep;
}

inline nlohmann::json to_json(const ActivationReport& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["question"] = r.question;
  if (r.plot) j["plot"] = *r.plot;
  j["candidates"] = r.candidates;
  j["probabilities"] = r.probabilities;
  j["sequences"] = nlohmann::json::array();
  for (const auto& s : r.sequences) {
    nlohmann::json sj;
    sj["candidate"] = s.candidate;
    sj["tokens"] = s.tokens;
    sj["windows"] = nlohmann::json::array();
    for (const auto& w : s.windows) {
      nlohmann::json positions = nlohmann::json::array();
      for (std::size_t i = 0; i < w.argmax.size(); ++i) {
        const std::size_t p = w.argmax[i];
        positions.push_back(w.padding[i] ? nlohmann::json("pad") : nlohmann::json(s.tokens[p]));
      }
      sj["windows"].push_back({{"window", w.window},
                               {"argmax", w.argmax},
                               {"max_value", w.max_value},
                               {"start_token", positions}});
    }
    j["sequences"].push_back(std::move(sj));
  }
  return j;
}

}  // namespace seqmatch
