#pragma once

// Flat run configuration shared by every subcommand. Values come from
// built-in defaults, then an optional JSON file, then command-line flags.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqmatch/seqmatch.hpp"

namespace seqmatch::cli {

enum class KeyType { kInt, kNumber, kString, kBool, kIntList, kStringList };

struct KeyInfo {
  KeyType type;
  const char* help;
};

inline const std::map<std::string, KeyInfo>& config_keys() {
  static const std::map<std::string, KeyInfo> keys = {
      {"seed", {KeyType::kInt, "seed for every random choice"}},
      {"out_dir", {KeyType::kString, "directory for all outputs"}},
      {"comparison", {KeyType::kString, "nn, ntn, euccos, sub, mult or submult-nn"}},
      {"windows", {KeyType::kIntList, "CNN window sizes, comma separated"}},
      {"hidden_dim", {KeyType::kInt, "hidden size l"}},
      {"dropout", {KeyType::kNumber, "embedding dropout rate"}},
      {"lr", {KeyType::kNumber, "learning rate"}},
      {"beta1", {KeyType::kNumber, "Adamax beta1"}},
      {"beta2", {KeyType::kNumber, "Adamax beta2"}},
      {"epsilon", {KeyType::kNumber, "Adamax epsilon"}},
      {"batch_size", {KeyType::kInt, "mini-batch size"}},
      {"epochs", {KeyType::kInt, "training epochs"}},
      {"threads", {KeyType::kInt, "worker threads per batch"}},
      {"task_shape", {KeyType::kString, "classify-pair, select or select-plot"}},
      {"long_answers", {KeyType::kBool, "use the long-answer default windows for select"}},
      {"num_classes", {KeyType::kInt, "classes for classify-pair"}},
      {"synthetic", {KeyType::kString, "generated data, task:n[:seed=S][:vocab=V][:k=K]"}},
      {"eval_synthetic", {KeyType::kString, "generated evaluation data, same syntax"}},
      {"train", {KeyType::kString, "training data (JSON Lines)"}},
      {"eval", {KeyType::kString, "evaluation data (JSON Lines)"}},
      {"embeddings", {KeyType::kString, "pretrained embedding text file"}},
      {"random_embeddings", {KeyType::kBool, "use seeded random embeddings"}},
      {"embedding_dim", {KeyType::kInt, "width of random embeddings"}},
      {"checkpoint", {KeyType::kString, "checkpoint file to read"}},
      {"kinds", {KeyType::kStringList, "comparison kinds for ablate, comma separated"}},
      {"ids", {KeyType::kStringList, "instance ids for inspect, comma separated"}},
      {"output", {KeyType::kString, "output file for gen-data"}},
      {"lenient", {KeyType::kBool, "skip malformed data lines with a warning"}},
      {"raw_text", {KeyType::kBool, "token fields are raw strings to tokenize"}},
  };
  return keys;
}

struct SyntheticSource {
  SyntheticTask task = SyntheticTask::kContainment;
  SyntheticOptions options;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  ModelConfig model;
  bool windows_set = false;
  bool long_answers = false;
  TrainConfig train;
  std::optional<std::string> train_path, eval_path, embeddings_path, checkpoint_path, output_path;
  std::optional<SyntheticSource> synthetic, eval_synthetic;
  bool random_embeddings = false;
  std::size_t embedding_dim = 300;
  bool task_shape_set = false;
  bool comparison_set = false;
  std::vector<ComparisonKind> kinds;
  std::vector<std::string> ids;
  LoadOptions load;

  // Window list to use for the chosen task.
  std::vector<std::size_t> windows() const {
    return windows_set ? model.windows : default_windows(model.task, long_answers);
  }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("--" + key + ": '" + text + "' is not a valid number");
  return value;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace detail

// Converts a flag's text into the JSON type its key expects.
inline nlohmann::json flag_value(const std::string& key, const std::string& text) {
  auto it = config_keys().find(key);
  if (it == config_keys().end()) throw ConfigError("unknown option '" + key + "'");
  switch (it->second.type) {
    case KeyType::kInt: return detail::parse_number<std::int64_t>(key, text);
    case KeyType::kNumber: return detail::parse_number<double>(key, text);
    case KeyType::kString: return text;
    case KeyType::kBool:
      if (text == "true" || text == "1" || text.empty()) return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("--" + key + ": expected true or false, got '" + text + "'");
    case KeyType::kIntList: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& part : detail::split(text, ',')) arr.push_back(detail::parse_number<std::int64_t>(key, part));
      return arr;
    }
    case KeyType::kStringList: return detail::split(text, ',');
  }
  return text;
}

// task:n[:seed=S][:vocab=V][:k=K]
inline SyntheticSource parse_synthetic_source(const std::string& text, std::uint64_t default_seed) {
  const auto parts = detail::split(text, ':');
  if (parts.size() < 2) throw ConfigError("--synthetic '" + text + "' must look like task:n[:seed=S]");
  SyntheticSource src;
  src.task = parse_synthetic_task(parts[0]);
  src.options.n = detail::parse_number<std::size_t>("synthetic", parts[1]);
  src.options.seed = default_seed;
  for (std::size_t i = 2; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) throw ConfigError("--synthetic field '" + parts[i] + "' must be key=value");
    const std::string k = parts[i].substr(0, eq), v = parts[i].substr(eq + 1);
    if (k == "seed") {
      src.options.seed = detail::parse_number<std::uint64_t>("synthetic", v);
    } else if (k == "vocab") {
      src.options.vocab_size = detail::parse_number<std::size_t>("synthetic", v);
    } else if (k == "k") {
      src.options.num_candidates = detail::parse_number<std::size_t>("synthetic", v);
    } else {
      throw ConfigError("--synthetic has unknown field '" + k + "' (seed, vocab or k)");
    }
  }
  if (src.options.n < 1) throw ConfigError("--synthetic needs n >= 1");
  if (src.options.vocab_size < 8) throw ConfigError("--synthetic needs vocab >= 8");
  return src;
}

namespace detail {

template <typename T>
T get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + j.at(key).dump());
  }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& key) {
  const auto v = get<std::int64_t>(j, key);
  if (v < 0) throw ConfigError("config key '" + key + "' must not be negative");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!config_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  RunConfig c;
  using detail::get;
  using detail::get_count;
  if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(get<std::int64_t>(j, "seed"));
  c.train.seed = c.seed;
  if (j.contains("out_dir")) c.out_dir = get<std::string>(j, "out_dir");
  if (j.contains("comparison")) {
    c.model.comparison = parse_comparison_kind(get<std::string>(j, "comparison"));
    c.comparison_set = true;
  }
  if (j.contains("task_shape")) {
    c.model.task = parse_task_shape(get<std::string>(j, "task_shape"));
    c.task_shape_set = true;
  }
  if (j.contains("windows")) {
    std::vector<std::int64_t> w = get<std::vector<std::int64_t>>(j, "windows");
    c.model.windows.clear();
    for (auto x : w) {
      if (x < 1) throw ConfigError("window sizes must be >= 1");
      c.model.windows.push_back(static_cast<std::size_t>(x));
    }
    c.windows_set = true;
  }
  if (j.contains("long_answers")) c.long_answers = get<bool>(j, "long_answers");
  if (j.contains("hidden_dim")) c.model.hidden = get_count(j, "hidden_dim");
  if (j.contains("num_classes")) c.model.num_classes = c.load.num_classes = get_count(j, "num_classes");
  if (j.contains("dropout")) c.train.dropout = get<double>(j, "dropout");
  if (j.contains("lr")) c.train.learning_rate = get<double>(j, "lr");
  if (j.contains("beta1")) c.train.beta1 = get<double>(j, "beta1");
  if (j.contains("beta2")) c.train.beta2 = get<double>(j, "beta2");
  if (j.contains("epsilon")) c.train.epsilon = get<double>(j, "epsilon");
  if (j.contains("batch_size")) c.train.batch_size = get_count(j, "batch_size");
  if (j.contains("epochs")) c.train.max_epochs = get_count(j, "epochs");
  if (j.contains("threads")) c.train.threads = get_count(j, "threads");
  if (j.contains("train")) c.train_path = get<std::string>(j, "train");
  if (j.contains("eval")) c.eval_path = get<std::string>(j, "eval");
  if (j.contains("embeddings")) c.embeddings_path = get<std::string>(j, "embeddings");
  if (j.contains("checkpoint")) c.checkpoint_path = get<std::string>(j, "checkpoint");
  if (j.contains("output")) c.output_path = get<std::string>(j, "output");
  if (j.contains("random_embeddings")) c.random_embeddings = get<bool>(j, "random_embeddings");
  if (j.contains("embedding_dim")) c.embedding_dim = get_count(j, "embedding_dim");
  if (j.contains("synthetic")) c.synthetic = parse_synthetic_source(get<std::string>(j, "synthetic"), c.seed);
  if (j.contains("eval_synthetic")) {
    c.eval_synthetic = parse_synthetic_source(get<std::string>(j, "eval_synthetic"), c.seed + 1);
  }
  if (j.contains("kinds")) {
    for (const auto& k : get<std::vector<std::string>>(j, "kinds")) c.kinds.push_back(parse_comparison_kind(k));
  }
  if (j.contains("ids")) c.ids = get<std::vector<std::string>>(j, "ids");
  if (j.contains("lenient")) c.load.strict = !get<bool>(j, "lenient");
  if (j.contains("raw_text")) c.load.raw_text = get<bool>(j, "raw_text");

  if (c.synthetic) {
    const TaskShape shape = task_shape_of(c.synthetic->task);
    if (c.task_shape_set && c.model.task != shape) {
      throw ConfigError("synthetic task '" + std::string(to_string(c.synthetic->task)) + "' has task shape '" +
                        std::string(to_string(shape)) + "', not '" + std::string(to_string(c.model.task)) + "'");
    }
    c.model.task = shape;
  }
  if (c.synthetic && c.train_path) throw ConfigError("give either --synthetic or --train, not both");
  if (c.eval_synthetic && c.eval_path) throw ConfigError("give either --eval-synthetic or --eval, not both");
  if (c.embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
  c.model.windows = c.windows();
  c.model.validate();
  c.train.validate();
  return c;
}

inline nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

inline void require_file(const std::optional<std::string>& path, const char* what) {
  if (path && !std::filesystem::is_regular_file(*path)) {
    throw ConfigError(std::string(what) + " file '" + *path + "' does not exist");
  }
}

}  // namespace seqmatch::cli
