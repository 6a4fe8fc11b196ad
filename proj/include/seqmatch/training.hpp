#pragma once

// Mini-batch training loop, evaluation and checkpoint I/O.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqmatch/metrics.hpp"
#include "seqmatch/model.hpp"
#include "seqmatch/optim.hpp"

namespace seqmatch {

struct TrainConfig {
  double learning_rate = 0.002;
  std::size_t batch_size = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout = 0.0;
  std::size_t max_epochs = 10;
  std::uint64_t seed = 1;
  // Examples of a batch are spread over this many threads; results do not
  // depend on it.
  std::size_t threads = 1;

  AdamaxConfig optimizer() const { return {learning_rate, beta1, beta2, epsilon}; }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("Adamax betas must be in [0, 1)");
    }
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

struct EvalResult {
  double accuracy = 0.0;
  std::optional<RankingMetrics> ranking;  // selection tasks only
  std::vector<std::size_t> predictions;
  std::vector<std::vector<double>> probabilities;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<EvalResult> eval;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["mean_loss"] = r.mean_loss;
  if (r.train_accuracy) j["train_accuracy"] = *r.train_accuracy;
  if (r.eval) {
    j["eval_accuracy"] = r.eval->accuracy;
    if (r.eval->ranking) {
      j["eval_map"] = r.eval->ranking->map;
      j["eval_mrr"] = r.eval->ranking->mrr;
    }
  }
  return j;
}

inline std::vector<double> predict_probabilities(const Model& model, const EncodedInstance& x) {
  Tape tape;
  BoundModel b = bind(tape, model);
  return predict(tape, b, x).value().values();
}

inline EvalResult evaluate(const Model& model, const std::vector<EncodedInstance>& data,
                           std::vector<std::string>* warnings = nullptr) {
  if (data.empty()) throw InputError("evaluate: empty dataset");
  EvalResult res;
  std::vector<std::size_t> golds;
  std::vector<RankedQuestion> ranked;
  for (const auto& x : data) {
    auto probs = predict_probabilities(model, x);
    res.predictions.push_back(argmax(probs));
    golds.push_back(x.gold.empty() ? probs.size() : x.gold.front());
    if (model.config.task != TaskShape::kClassifyPair) ranked.push_back({probs, x.gold});
    res.probabilities.push_back(std::move(probs));
  }
  if (model.config.task == TaskShape::kClassifyPair) {
    res.accuracy = accuracy(res.predictions, golds);
  } else {
    // A selection counts as correct when the top candidate is any gold one.
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& g = data[i].gold;
      hits += std::find(g.begin(), g.end(), res.predictions[i]) != g.end();
    }
    res.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
    res.ranking = map_mrr(ranked, warnings);
  }
  return res;
}

struct BatchResult {
  double loss = 0.0;
  std::vector<double> example_losses;
  GradientMap grads;  // mean over the batch
};

// Per-example tapes, gradients reduced in example order. Example i of the
// batch draws its dropout masks from `rngs[i]` when given.
inline BatchResult batch_loss_and_gradient(const Model& model, std::span<const EncodedInstance* const> batch,
                                           double dropout, std::vector<std::mt19937_64>* rngs,
                                           std::size_t threads = 1) {
  const std::size_t n = batch.size();
  std::vector<double> losses(n);
  std::vector<GradientMap> grads(n);
  auto work = [&](std::size_t i) {
    Tape tape;
    BoundModel b = bind(tape, model);
    ForwardOptions opt;
    if (rngs) {
      opt.dropout = dropout;
      opt.rng = &(*rngs)[i];
    }
    Var loss = instance_loss(tape, b, *batch[i], opt);
    losses[i] = loss.value()[0];
    grads[i] = tape.backward(loss);
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  BatchResult res;
  res.example_losses = losses;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.loss += losses[i];
    for (auto& [name, g] : grads[i]) {
      auto [it, inserted] = res.grads.try_emplace(name, std::move(g));
      if (!inserted) it->second += g;
    }
  }
  res.loss *= inv;
  for (auto& [name, g] : res.grads)
    for (double& v : g.values()) v *= inv;
  return res;
}

struct TrainResult {
  std::vector<EpochRecord> history;
  AdamaxState optimizer;
};

struct TrainHooks {
  // Evaluated after every epoch when non-empty.
  const std::vector<EncodedInstance>* eval_data = nullptr;
  bool track_train_accuracy = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

namespace detail {

inline std::string parameter_norms(const Model& m) {
  std::ostringstream os;
  for (const auto& [name, t] : m.params) os << "\n  " << name << ": " << t.norm();
  return os.str();
}

}  // namespace detail

// Shuffled mini-batches every epoch; the mean batch loss is minimized with
// Adamax. Everything random is derived from cfg.seed.
inline TrainResult train(Model& model, const std::vector<EncodedInstance>& data, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}, AdamaxState state = {}) {
  cfg.validate();
  if (data.empty()) throw InputError("train: empty dataset");
  TrainResult result;
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const AdamaxConfig opt = cfg.optimizer();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const EncodedInstance*> batch;
      std::vector<std::mt19937_64> rngs;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&data[order[i]]);
        std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(order[i])};
        rngs.emplace_back(seq);
      }
      BatchResult br = batch_loss_and_gradient(model, batch, cfg.dropout,
                                               cfg.dropout > 0.0 ? &rngs : nullptr, cfg.threads);
      if (!std::isfinite(br.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches + 1) + "; parameter norms:" +
                            detail::parameter_norms(model));
      }
      adamax_step(model.params, br.grads, state, opt);
      loss_sum += br.loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(batches);
    if (hooks.track_train_accuracy) rec.train_accuracy = evaluate(model, data).accuracy;
    if (hooks.eval_data && !hooks.eval_data->empty()) rec.eval = evaluate(model, *hooks.eval_data);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    result.history.push_back(std::move(rec));
  }
  result.optimizer = std::move(state);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "seqmatch-checkpoint";

struct Checkpoint {
  Model model;
  AdamaxState optimizer;
  TrainConfig train;
};

namespace detail {

inline nlohmann::json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw FormatError("checkpoint: tensor '" + what + "' is malformed");
  }
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: tensor '" + what + "': " + e.what());
  } catch (const DimensionError& e) {
    throw FormatError("checkpoint: tensor '" + what + "': " + e.what());
  }
}

inline nlohmann::json tensor_map_json(const std::map<std::string, Tensor>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : m) j[name] = tensor_json(t);
  return j;
}

inline std::map<std::string, Tensor> tensor_map_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object()) throw FormatError("checkpoint: '" + what + "' must be an object");
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : j.items()) out.emplace(name, tensor_from_json(t, name));
  return out;
}

}  // namespace detail

inline nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"comparison", std::string(to_string(c.comparison))},
          {"task_shape", std::string(to_string(c.task))},
          {"hidden_dim", c.hidden},
          {"windows", c.windows},
          {"num_classes", c.num_classes}};
}

inline nlohmann::json train_config_json(const TrainConfig& c) {
  return {{"lr", c.learning_rate}, {"batch_size", c.batch_size}, {"beta1", c.beta1},
          {"beta2", c.beta2},      {"epsilon", c.epsilon},       {"dropout", c.dropout},
          {"epochs", c.max_epochs}, {"seed", c.seed}};
}

// Shortest round-trip decimal formatting makes every double reload exactly.
inline void save_checkpoint(const std::string& path, const Model& model, const AdamaxState& state,
                            const TrainConfig& cfg) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["model"] = model_config_json(model.config);
  j["train"] = train_config_json(cfg);
  j["vocabulary"] = model.vocab.tokens();
  j["embeddings"] = detail::tensor_json(model.embeddings.matrix);
  j["params"] = detail::tensor_map_json(model.params);
  j["optimizer"] = {{"step", state.step},
                    {"moment", detail::tensor_map_json(state.moment)},
                    {"inf_norm", detail::tensor_map_json(state.inf_norm)}};
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    out << j.dump() << '\n';
    if (!out) throw IoError("error writing checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path + "': " + ec.message());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint '" + path + "' is corrupt: " + e.what());
  }
  try {
    if (j.value("format", "") != kCheckpointFormat) throw FormatError("not a seqmatch checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version " + j.at("version").dump());
    }
    const auto& mc = j.at("model");
    ModelConfig config;
    config.comparison = parse_comparison_kind(mc.at("comparison").get<std::string>());
    config.task = parse_task_shape(mc.at("task_shape").get<std::string>());
    config.hidden = mc.at("hidden_dim").get<std::size_t>();
    config.windows = mc.at("windows").get<std::vector<std::size_t>>();
    config.num_classes = mc.at("num_classes").get<std::size_t>();
    config.validate();

    const auto& tc = j.at("train");
    TrainConfig train;
    train.learning_rate = tc.at("lr").get<double>();
    train.batch_size = tc.at("batch_size").get<std::size_t>();
    train.beta1 = tc.at("beta1").get<double>();
    train.beta2 = tc.at("beta2").get<double>();
    train.epsilon = tc.at("epsilon").get<double>();
    train.dropout = tc.at("dropout").get<double>();
    train.max_epochs = tc.at("epochs").get<std::size_t>();
    train.seed = tc.at("seed").get<std::uint64_t>();

    Vocabulary vocab = Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
    EmbeddingTable emb{detail::tensor_from_json(j.at("embeddings"), "embeddings")};
    if (emb.matrix.rank() != 2 || emb.vocab_size() != vocab.size()) {
      throw FormatError("checkpoint: embedding table does not match vocabulary");
    }
    ParamMap params = detail::tensor_map_from_json(j.at("params"), "params");
    const auto expected = parameter_shapes(config, emb.dim());
    if (params.size() != expected.size()) throw FormatError("checkpoint: parameter set does not match model");
    for (const auto& [name, shape] : expected) {
      auto it = params.find(name);
      if (it == params.end()) throw FormatError("checkpoint: missing parameter '" + name + "'");
      if (it->second.shape() != shape) {
        throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                          ", expected " + shape_str(shape));
      }
    }
    const auto& oj = j.at("optimizer");
    AdamaxState state;
    state.step = oj.at("step").get<std::uint64_t>();
    state.moment = detail::tensor_map_from_json(oj.at("moment"), "moment");
    state.inf_norm = detail::tensor_map_from_json(oj.at("inf_norm"), "inf_norm");
    return Checkpoint{Model{config, std::move(vocab), std::move(emb), std::move(params)}, std::move(state), train};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path + "' is malformed: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint '" + path + "' has an invalid model config: " + e.what());
  }
}

// Loads a checkpoint and insists it was trained for `expected`'s comparison
// kind and task shape.
inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  if (c.model.config.comparison != expected.comparison) {
    throw ConfigError("checkpoint uses comparison '" + std::string(to_string(c.model.config.comparison)) +
                      "' but the configuration asks for '" + std::string(to_string(expected.comparison)) + "'");
  }
  if (c.model.config.task != expected.task) {
    throw ConfigError("checkpoint was trained for task shape '" + std::string(to_string(c.model.config.task)) +
                      "', not '" + std::string(to_string(expected.task)) + "'");
  }
  return c;
}

}  // namespace seqmatch
