#pragma once

// Dataset records for the three task shapes, JSON Lines I/O and seeded
// synthetic task generators.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqmatch/embeddings.hpp"
#include "seqmatch/errors.hpp"

namespace seqmatch {

using Tokens = std::vector<std::string>;

enum class TaskShape { kClassifyPair, kSelectFromK, kSelectFromKWithPlot };

inline std::string_view to_string(TaskShape shape) {
  switch (shape) {
    case TaskShape::kClassifyPair: return "classify-pair";
    case TaskShape::kSelectFromK: return "select";
    case TaskShape::kSelectFromKWithPlot: return "select-plot";
  }
  return "?";
}

inline TaskShape parse_task_shape(std::string_view name) {
  for (TaskShape s : {TaskShape::kClassifyPair, TaskShape::kSelectFromK, TaskShape::kSelectFromKWithPlot})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown task shape '" + std::string(name) +
                    "' (expected classify-pair, select or select-plot)");
}

// One example. For pair classification `question` is the premise, the single
// candidate is the hypothesis and `label` is the class. For selection,
// `correct` lists the indices of the right candidates.
struct MatchInstance {
  std::string id;
  Tokens question;
  std::optional<Tokens> plot;
  std::vector<Tokens> candidates;
  std::vector<std::size_t> correct;
  std::size_t label = 0;

  // Indices the training objective treats as gold.
  std::vector<std::size_t> gold(TaskShape shape) const {
    return shape == TaskShape::kClassifyPair ? std::vector<std::size_t>{label} : correct;
  }
};

struct Dataset {
  TaskShape shape = TaskShape::kSelectFromK;
  std::vector<MatchInstance> instances;
};

struct LoadOptions {
  bool strict = true;
  // Token fields are plain strings run through tokenize() instead of lists.
  bool raw_text = false;
  std::size_t num_classes = 3;
};

namespace detail {

class FieldError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline Tokens read_tokens(const nlohmann::json& obj, const char* field, bool raw_text) {
  if (!obj.contains(field)) throw FieldError(std::string("missing field '") + field + "'");
  const auto& v = obj[field];
  Tokens out;
  if (raw_text) {
    if (!v.is_string()) throw FieldError(std::string("field '") + field + "' must be a string");
    out = tokenize(v.get<std::string>());
  } else {
    if (!v.is_array()) throw FieldError(std::string("field '") + field + "' must be a list of strings");
    for (const auto& t : v) {
      if (!t.is_string()) throw FieldError(std::string("field '") + field + "' must be a list of strings");
      out.push_back(t.get<std::string>());
    }
  }
  if (out.empty()) throw FieldError(std::string("field '") + field + "' is empty");
  return out;
}

inline std::size_t read_index(const nlohmann::json& v, const char* field, std::size_t bound) {
  if (!v.is_number_integer()) throw FieldError(std::string("field '") + field + "' must hold integers");
  const auto x = v.get<std::int64_t>();
  if (x < 0 || static_cast<std::size_t>(x) >= bound) {
    throw FieldError(std::string("field '") + field + "' index " + std::to_string(x) +
                     " out of range [0, " + std::to_string(bound) + ")");
  }
  return static_cast<std::size_t>(x);
}

inline MatchInstance parse_instance(const std::string& line, TaskShape shape, const LoadOptions& opt,
                                    std::size_t line_no) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FieldError(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw FieldError("line is not a JSON object");
  MatchInstance inst;
  if (obj.contains("id")) {
    if (!obj["id"].is_string()) throw FieldError("field 'id' must be a string");
    inst.id = obj["id"].get<std::string>();
  } else {
    inst.id = "line-" + std::to_string(line_no);
  }
  if (shape == TaskShape::kClassifyPair) {
    inst.question = read_tokens(obj, "premise", opt.raw_text);
    inst.candidates.push_back(read_tokens(obj, "hypothesis", opt.raw_text));
    if (!obj.contains("label")) throw FieldError("missing field 'label'");
    inst.label = read_index(obj["label"], "label", opt.num_classes);
    return inst;
  }
  inst.question = read_tokens(obj, "question", opt.raw_text);
  if (shape == TaskShape::kSelectFromKWithPlot) inst.plot = read_tokens(obj, "plot", opt.raw_text);
  if (!obj.contains("candidates")) throw FieldError("missing field 'candidates'");
  const auto& cands = obj["candidates"];
  if (!cands.is_array()) throw FieldError("field 'candidates' must be a list");
  if (cands.empty()) throw FieldError("field 'candidates' is empty");
  for (std::size_t k = 0; k < cands.size(); ++k) {
    nlohmann::json wrapper = {{"candidate", cands[k]}};
    inst.candidates.push_back(read_tokens(wrapper, "candidate", opt.raw_text));
  }
  if (!obj.contains("correct")) throw FieldError("missing field 'correct'");
  const auto& corr = obj["correct"];
  if (!corr.is_array() || corr.empty()) throw FieldError("field 'correct' must be a non-empty list");
  std::set<std::size_t> seen;
  for (const auto& c : corr) {
    const std::size_t k = read_index(c, "correct", inst.candidates.size());
    if (!seen.insert(k).second) throw FieldError("field 'correct' repeats index " + std::to_string(k));
    inst.correct.push_back(k);
  }
  if (shape == TaskShape::kSelectFromKWithPlot && inst.correct.size() != 1) {
    throw FieldError("field 'correct' must hold exactly one index for select-plot");
  }
  return inst;
}

}  // namespace detail

// Reads one JSON object per line. Strict mode stops at the first malformed
// line; lenient mode skips it and appends a warning.
inline Dataset load_dataset(const std::string& path, TaskShape shape, const LoadOptions& opt = {},
                            std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  Dataset ds{shape, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ds.instances.push_back(detail::parse_instance(line, shape, opt, line_no));
    } catch (const detail::FieldError& e) {
      const std::string msg = path + ":" + std::to_string(line_no) + ": " + e.what();
      if (opt.strict) throw FormatError(msg);
      if (warnings) warnings->push_back(msg);
    }
  }
  if (in.bad()) throw IoError("error reading dataset '" + path + "'");
  return ds;
}

inline nlohmann::json to_json(const MatchInstance& inst, TaskShape shape) {
  nlohmann::json obj;
  obj["id"] = inst.id;
  if (shape == TaskShape::kClassifyPair) {
    obj["premise"] = inst.question;
    obj["hypothesis"] = inst.candidates.at(0);
    obj["label"] = inst.label;
    return obj;
  }
  obj["question"] = inst.question;
  if (shape == TaskShape::kSelectFromKWithPlot) obj["plot"] = inst.plot.value_or(Tokens{});
  obj["candidates"] = inst.candidates;
  obj["correct"] = inst.correct;
  return obj;
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  for (const auto& inst : ds.instances) out << to_json(inst, ds.shape).dump() << '\n';
  if (!out) throw IoError("error writing dataset '" + path + "'");
}

// Vocabulary over every token of the given instances, in first-seen order.
inline Vocabulary build_vocabulary(const std::vector<MatchInstance>& instances) {
  Vocabulary v;
  for (const auto& inst : instances) {
    for (const auto& t : inst.question) v.add(t);
    if (inst.plot)
      for (const auto& t : *inst.plot) v.add(t);
    for (const auto& c : inst.candidates)
      for (const auto& t : c) v.add(t);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Synthetic tasks
// ---------------------------------------------------------------------------

enum class SyntheticTask {
  kContainment,      // select the candidate sharing tokens with the question
  kEntailmentToy,    // premise/hypothesis: subsequence, corrupted subsequence, unrelated
  kPlotContainment,  // select the candidate matching the plot sentence the question matches
};

inline std::string_view to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::kContainment: return "containment";
    case SyntheticTask::kEntailmentToy: return "entailment-toy";
    case SyntheticTask::kPlotContainment: return "plot-containment";
  }
  return "?";
}

inline SyntheticTask parse_synthetic_task(std::string_view name) {
  for (SyntheticTask t : {SyntheticTask::kContainment, SyntheticTask::kEntailmentToy,
                          SyntheticTask::kPlotContainment})
    if (to_string(t) == name) return t;
  throw ConfigError("unknown synthetic task '" + std::string(name) +
                    "' (expected containment, entailment-toy or plot-containment)");
}

inline TaskShape task_shape_of(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::kContainment: return TaskShape::kSelectFromK;
    case SyntheticTask::kEntailmentToy: return TaskShape::kClassifyPair;
    case SyntheticTask::kPlotContainment: return TaskShape::kSelectFromKWithPlot;
  }
  return TaskShape::kSelectFromK;
}

struct SyntheticOptions {
  std::size_t n = 100;
  std::size_t vocab_size = 64;
  std::uint64_t seed = 0;
  std::size_t num_candidates = 5;
};

namespace detail {

class SyntheticSampler {
 public:
  explicit SyntheticSampler(std::uint64_t seed) : rng_(seed) {}

  std::size_t uniform(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) { std::shuffle(v.begin(), v.end(), rng_); }

  // `count` distinct entries of `pool`, in random order.
  std::vector<std::size_t> distinct(std::vector<std::size_t> pool, std::size_t count) {
    shuffle(pool);
    pool.resize(std::min(count, pool.size()));
    return pool;
  }

  std::vector<std::size_t> with_replacement(const std::vector<std::size_t>& pool, std::size_t count) {
    std::vector<std::size_t> out(count);
    for (auto& x : out) x = pool[uniform(0, pool.size() - 1)];
    return out;
  }

  // Labels 0..classes-1 in equal shares (remainder spread from 0), shuffled.
  std::vector<std::size_t> balanced(std::size_t n, std::size_t classes) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i % classes;
    shuffle(out);
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

inline std::string word(std::size_t i) { return "w" + std::to_string(i); }

inline Tokens words(const std::vector<std::size_t>& ids) {
  Tokens out;
  for (auto i : ids) out.push_back(word(i));
  return out;
}

inline std::vector<std::size_t> complement(std::size_t vocab, const std::vector<std::size_t>& used) {
  std::vector<bool> taken(vocab, false);
  for (auto u : used) taken[u] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < vocab; ++i)
    if (!taken[i]) out.push_back(i);
  return out;
}

inline Dataset containment(const SyntheticOptions& o, SyntheticSampler& s) {
  Dataset ds{TaskShape::kSelectFromK, {}};
  std::vector<std::size_t> all(o.vocab_size);
  std::iota(all.begin(), all.end(), 0);
  const std::size_t max_q = std::min<std::size_t>(8, o.vocab_size / 2);
  const auto positions = s.balanced(o.n, o.num_candidates);
  for (std::size_t i = 0; i < o.n; ++i) {
    MatchInstance inst;
    inst.id = "containment-" + std::to_string(i);
    const auto q = s.distinct(all, s.uniform(4, max_q));
    const auto others = complement(o.vocab_size, q);
    inst.question = words(q);
    for (std::size_t k = 0; k < o.num_candidates; ++k) {
      const std::size_t len = s.uniform(4, 8);
      if (k == positions[i]) {
        auto shared = s.distinct(q, s.uniform(2, std::min<std::size_t>(3, q.size())));
        auto toks = shared;
        for (auto x : s.with_replacement(others, len - shared.size())) toks.push_back(x);
        s.shuffle(toks);
        inst.candidates.push_back(words(toks));
      } else {
        inst.candidates.push_back(words(s.with_replacement(others, len)));
      }
    }
    inst.correct = {positions[i]};
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

inline Dataset entailment_toy(const SyntheticOptions& o, SyntheticSampler& s) {
  Dataset ds{TaskShape::kClassifyPair, {}};
  std::vector<std::size_t> all(o.vocab_size);
  std::iota(all.begin(), all.end(), 0);
  const std::size_t max_p = std::min<std::size_t>(8, o.vocab_size / 2);
  const auto labels = s.balanced(o.n, 3);
  for (std::size_t i = 0; i < o.n; ++i) {
    MatchInstance inst;
    inst.id = "entailment-" + std::to_string(i);
    const auto premise = s.distinct(all, s.uniform(4, max_p));
    const auto others = complement(o.vocab_size, premise);
    inst.question = words(premise);
    inst.label = labels[i];
    std::vector<std::size_t> hyp;
    if (inst.label == 2) {
      hyp = s.with_replacement(others, s.uniform(2, 5));
    } else {
      // Ordered subsequence of the premise with at least two tokens.
      std::vector<std::size_t> idx(premise.size());
      std::iota(idx.begin(), idx.end(), 0);
      idx = s.distinct(idx, s.uniform(2, premise.size() - 1));
      std::sort(idx.begin(), idx.end());
      for (auto j : idx) hyp.push_back(premise[j]);
      if (inst.label == 1) hyp[s.uniform(0, hyp.size() - 1)] = others[s.uniform(0, others.size() - 1)];
    }
    inst.candidates.push_back(words(hyp));
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

inline Dataset plot_containment(const SyntheticOptions& o, SyntheticSampler& s) {
  constexpr std::size_t kSentenceLen = 4;
  const std::size_t k_cands = o.num_candidates;
  if (o.vocab_size < k_cands * kSentenceLen + 12) {
    throw ConfigError("plot-containment needs vocab_size >= " +
                      std::to_string(k_cands * kSentenceLen + 12));
  }
  Dataset ds{TaskShape::kSelectFromKWithPlot, {}};
  std::vector<std::size_t> all(o.vocab_size);
  std::iota(all.begin(), all.end(), 0);
  const auto positions = s.balanced(o.n, k_cands);
  for (std::size_t i = 0; i < o.n; ++i) {
    MatchInstance inst;
    inst.id = "plot-" + std::to_string(i);
    const auto plot_tokens = s.distinct(all, k_cands * kSentenceLen);
    std::vector<std::vector<std::size_t>> sentences(k_cands);
    Tokens plot;
    for (std::size_t k = 0; k < k_cands; ++k) {
      sentences[k].assign(plot_tokens.begin() + k * kSentenceLen,
                          plot_tokens.begin() + (k + 1) * kSentenceLen);
      for (auto x : sentences[k]) plot.push_back(word(x));
    }
    auto fillers = complement(o.vocab_size, plot_tokens);
    s.shuffle(fillers);
    const std::vector<std::size_t> question_fillers(fillers.begin(), fillers.begin() + fillers.size() / 2);
    const std::vector<std::size_t> answer_fillers(fillers.begin() + fillers.size() / 2, fillers.end());

    // Candidate k matches sentence order[k]; the answer is the one matching
    // the sentence the question points at.
    std::vector<std::size_t> order(k_cands);
    std::iota(order.begin(), order.end(), 0);
    s.shuffle(order);
    const std::size_t target_sentence = order[positions[i]];

    // The question and the answer take complementary halves of the target
    // sentence, so they share no token and only the plot links them.
    auto target_tokens = sentences[target_sentence];
    s.shuffle(target_tokens);
    std::vector<std::size_t> q(target_tokens.begin(), target_tokens.begin() + 2);
    for (auto x : s.with_replacement(question_fillers, s.uniform(2, 3))) q.push_back(x);
    s.shuffle(q);
    inst.question = words(q);
    inst.plot = std::move(plot);
    for (std::size_t k = 0; k < k_cands; ++k) {
      auto a = order[k] == target_sentence
                   ? std::vector<std::size_t>(target_tokens.begin() + 2, target_tokens.end())
                   : s.distinct(sentences[order[k]], 2);
      for (auto x : s.with_replacement(answer_fillers, s.uniform(1, 2))) a.push_back(x);
      s.shuffle(a);
      inst.candidates.push_back(words(a));
    }
    inst.correct = {positions[i]};
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

}  // namespace detail

inline Dataset generate_synthetic(SyntheticTask task, const SyntheticOptions& opt) {
  if (opt.n < 1) throw ConfigError("synthetic dataset needs n >= 1");
  if (opt.vocab_size < 8) throw ConfigError("synthetic dataset needs vocab_size >= 8");
  if (opt.num_candidates < 1) throw ConfigError("synthetic dataset needs at least one candidate");
  detail::SyntheticSampler sampler(opt.seed);
  switch (task) {
    case SyntheticTask::kContainment: return detail::containment(opt, sampler);
    case SyntheticTask::kEntailmentToy: return detail::entailment_toy(opt, sampler);
    case SyntheticTask::kPlotContainment: return detail::plot_containment(opt, sampler);
  }
  throw ConfigError("unknown synthetic task");
}

}  // namespace seqmatch
