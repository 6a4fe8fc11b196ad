// seqmatch command-line tool: train, eval, ablate, inspect, gen-data.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "seqmatch/seqmatch.hpp"

namespace fs = std::filesystem;
using namespace seqmatch;
using seqmatch::cli::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

Dataset load_or_generate(const std::optional<std::string>& path, const std::optional<cli::SyntheticSource>& source,
                         TaskShape shape, const LoadOptions& load, std::vector<std::string>& warnings) {
  if (source) return generate_synthetic(source->task, source->options);
  return load_dataset(*path, shape, load, &warnings);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// Training and optional evaluation data, loaded before any output exists.
struct RunData {
  Dataset train;
  std::optional<Dataset> eval;
};

RunData load_run_data(const RunConfig& c) {
  if (!c.synthetic && !c.train_path) throw ConfigError("no training data: give --train or --synthetic");
  cli::require_file(c.train_path, "training data");
  cli::require_file(c.eval_path, "evaluation data");
  cli::require_file(c.embeddings_path, "embeddings");
  if (!c.embeddings_path && !c.random_embeddings) {
    throw ConfigError("no embeddings: give --embeddings FILE or --random-embeddings");
  }
  std::vector<std::string> warnings;
  RunData d;
  d.train = load_or_generate(c.train_path, c.synthetic, c.model.task, c.load, warnings);
  if (c.eval_path || c.eval_synthetic) {
    d.eval = load_or_generate(c.eval_path, c.eval_synthetic, c.model.task, c.load, warnings);
    if (d.eval->shape != d.train.shape) throw ConfigError("training and evaluation data have different task shapes");
  }
  print_warnings(warnings);
  if (d.train.instances.empty()) throw InputError("training data is empty");
  return d;
}

EmbeddingTable make_embeddings(const RunConfig& c, const Vocabulary& vocab) {
  if (c.embeddings_path) return load_pretrained(*c.embeddings_path, vocab);
  return random_embeddings(vocab, c.embedding_dim, c.seed);
}

Vocabulary vocabulary_for(const RunData& d) {
  std::vector<MatchInstance> all = d.train.instances;
  if (d.eval) all.insert(all.end(), d.eval->instances.begin(), d.eval->instances.end());
  return build_vocabulary(all);
}

void make_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

nlohmann::json eval_json(const EvalResult& r, std::size_t n) {
  nlohmann::json j{{"instances", n}, {"accuracy", r.accuracy}};
  if (r.ranking) {
    j["map"] = r.ranking->map;
    j["mrr"] = r.ranking->mrr;
    j["ranked_questions"] = r.ranking->evaluated;
    j["skipped_questions"] = r.ranking->skipped;
  }
  return j;
}

struct TrainedModel {
  Model model;
  TrainResult result;
};

// Trains one model on the loaded data. Each epoch record goes to `log` as a
// JSON line when given.
TrainedModel train_model(const RunConfig& c, ModelConfig mc, const RunData& d, std::ostream* log) {
  Vocabulary vocab = vocabulary_for(d);
  EmbeddingTable emb = make_embeddings(c, vocab);
  Model model = init_model(mc, std::move(vocab), std::move(emb), c.seed);
  const auto train_x = encode(d.train, model.vocab);
  std::vector<EncodedInstance> eval_x;
  if (d.eval) eval_x = encode(*d.eval, model.vocab);
  TrainHooks hooks;
  hooks.track_train_accuracy = true;
  hooks.eval_data = d.eval ? &eval_x : nullptr;
  hooks.on_epoch = [log](const EpochRecord& r) {
    if (log) *log << to_json(r).dump() << '\n' << std::flush;
  };
  TrainResult result = train(model, train_x, c.train, hooks);
  return {std::move(model), std::move(result)};
}

int cmd_train(const RunConfig& c) {
  RunData d = load_run_data(c);
  make_out_dir(c.out_dir);
  const fs::path dir(c.out_dir);
  std::ofstream log(dir / "metrics.jsonl");
  if (!log) throw IoError("cannot write metrics log in '" + c.out_dir + "'");
  TrainedModel t = train_model(c, c.model, d, &log);
  save_checkpoint((dir / "checkpoint.json").string(), t.model, t.result.optimizer, c.train);
  nlohmann::json summary{{"comparison", std::string(to_string(c.model.comparison))},
                         {"task_shape", std::string(to_string(c.model.task))},
                         {"epochs", t.result.history.size()}};
  if (!t.result.history.empty()) summary["final"] = to_json(t.result.history.back());
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

// Loads the checkpoint named in the config and checks it against any
// explicitly requested comparison kind or task shape.
Checkpoint load_compatible_checkpoint(const RunConfig& c) {
  if (!c.checkpoint_path) throw ConfigError("--checkpoint is required");
  cli::require_file(c.checkpoint_path, "checkpoint");
  Checkpoint ck = load_checkpoint(*c.checkpoint_path);
  if (c.comparison_set && c.model.comparison != ck.model.config.comparison) {
    throw ConfigError("checkpoint uses comparison '" + std::string(to_string(ck.model.config.comparison)) +
                      "', not '" + std::string(to_string(c.model.comparison)) + "'");
  }
  if ((c.task_shape_set || c.synthetic || c.eval_synthetic) && c.model.task != ck.model.config.task) {
    throw ConfigError("checkpoint was trained for task shape '" + std::string(to_string(ck.model.config.task)) +
                      "' but the data has shape '" + std::string(to_string(c.model.task)) + "'");
  }
  return ck;
}

// The evaluation data of eval and inspect: --eval, --eval-synthetic or --synthetic.
Dataset load_target_data(const RunConfig& c, TaskShape shape) {
  cli::require_file(c.eval_path, "evaluation data");
  std::vector<std::string> warnings;
  Dataset ds;
  if (c.eval_path || c.eval_synthetic) {
    ds = load_or_generate(c.eval_path, c.eval_synthetic, shape, c.load, warnings);
  } else if (c.synthetic) {
    ds = generate_synthetic(c.synthetic->task, c.synthetic->options);
  } else if (c.train_path) {
    cli::require_file(c.train_path, "data");
    ds = load_dataset(*c.train_path, shape, c.load, &warnings);
  } else {
    throw ConfigError("no data: give --eval, --eval-synthetic or --synthetic");
  }
  print_warnings(warnings);
  if (ds.shape != shape) throw ConfigError("data shape does not match the checkpoint");
  if (ds.instances.empty()) throw InputError("data is empty");
  return ds;
}

int cmd_eval(const RunConfig& c) {
  Checkpoint ck = load_compatible_checkpoint(c);
  Dataset ds = load_target_data(c, ck.model.config.task);
  std::vector<std::string> warnings;
  EvalResult r = evaluate(ck.model, encode(ds, ck.model.vocab), &warnings);
  print_warnings(warnings);
  nlohmann::json j = eval_json(r, ds.instances.size());
  j["comparison"] = std::string(to_string(ck.model.config.comparison));
  j["task_shape"] = std::string(to_string(ck.model.config.task));
  make_out_dir(c.out_dir);
  write_json(fs::path(c.out_dir) / "eval.json", j);
  std::cout << j.dump() << '\n';
  return kExitOk;
}

std::string format_cell(const nlohmann::json& row, const char* key) {
  if (!row.contains(key)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << row[key].get<double>();
  return os.str();
}

std::string ablation_table(const nlohmann::json& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "comparison" << std::right << std::setw(10) << "train_acc" << std::setw(10)
     << "eval_acc" << std::setw(10) << "eval_map" << std::setw(10) << "eval_mrr" << "  status\n";
  for (const auto& row : rows) {
    os << std::left << std::setw(12) << row["comparison"].get<std::string>() << std::right << std::setw(10)
       << format_cell(row, "train_accuracy") << std::setw(10) << format_cell(row, "eval_accuracy") << std::setw(10)
       << format_cell(row, "eval_map") << std::setw(10) << format_cell(row, "eval_mrr") << "  "
       << row["status"].get<std::string>() << '\n';
  }
  return os.str();
}

int cmd_ablate(const RunConfig& c) {
  RunData d = load_run_data(c);
  std::vector<ComparisonKind> kinds = c.kinds;
  if (kinds.empty()) kinds.assign(kAllComparisonKinds.begin(), kAllComparisonKinds.end());
  make_out_dir(c.out_dir);
  nlohmann::json rows = nlohmann::json::array();
  for (ComparisonKind kind : kinds) {
    ModelConfig mc = c.model;
    mc.comparison = kind;
    nlohmann::json row{{"comparison", std::string(to_string(kind))}};
    try {
      TrainedModel t = train_model(c, mc, d, nullptr);
      row["status"] = "ok";
      if (!t.result.history.empty()) {
        const EpochRecord& last = t.result.history.back();
        row["final_loss"] = last.mean_loss;
        if (last.train_accuracy) row["train_accuracy"] = *last.train_accuracy;
        if (last.eval) {
          row["eval_accuracy"] = last.eval->accuracy;
          if (last.eval->ranking) {
            row["eval_map"] = last.eval->ranking->map;
            row["eval_mrr"] = last.eval->ranking->mrr;
          }
        }
      }
    } catch (const TrainingError& e) {
      row["status"] = "failed";
      row["error"] = e.what();
    }
    rows.push_back(row);
  }
  const fs::path dir(c.out_dir);
  write_json(dir / "ablation.json", {{"seed", c.seed}, {"rows", rows}});
  const std::string table = ablation_table(rows);
  std::ofstream(dir / "ablation.txt") << table;
  std::cout << table;
  return kExitOk;
}

int cmd_inspect(const RunConfig& c) {
  Checkpoint ck = load_compatible_checkpoint(c);
  Dataset ds = load_target_data(c, ck.model.config.task);
  if (c.ids.empty()) throw ConfigError("--ids is required");
  std::map<std::string, const MatchInstance*> by_id;
  for (const auto& inst : ds.instances) by_id.emplace(inst.id, &inst);
  std::vector<const MatchInstance*> chosen;
  for (const auto& id : c.ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      std::string available;
      std::size_t shown = 0;
      for (const auto& [known, _] : by_id) {
        if (shown++ == 20) {
          available += ", ...";
          break;
        }
        available += (available.empty() ? "" : ", ") + known;
      }
      throw InputError("unknown instance id '" + id + "'; available: " + available);
    }
    chosen.push_back(it->second);
  }
  nlohmann::json reports = nlohmann::json::array();
  for (const auto* inst : chosen) reports.push_back(to_json(inspect_instance(ck.model, *inst)));
  make_out_dir(c.out_dir);
  const fs::path out = fs::path(c.out_dir) / "activations.json";
  write_json(out, {{"comparison", std::string(to_string(ck.model.config.comparison))},
                   {"windows", ck.model.config.windows},
                   {"reports", reports}});
  std::cout << "wrote " << reports.size() << " report(s) to " << out.string() << '\n';
  return kExitOk;
}

int cmd_gen_data(const RunConfig& c) {
  if (!c.synthetic) throw ConfigError("gen-data needs --synthetic");
  Dataset ds = generate_synthetic(c.synthetic->task, c.synthetic->options);
  fs::path out = c.output_path ? fs::path(*c.output_path)
                               : fs::path(c.out_dir) / (std::string(to_string(c.synthetic->task)) + ".jsonl");
  if (out.has_parent_path()) make_out_dir(out.parent_path().string());
  write_dataset(out.string(), ds);
  std::cout << "wrote " << ds.instances.size() << " instance(s) to " << out.string() << '\n';
  return kExitOk;
}

const char* placeholder(cli::KeyType type) {
  switch (type) {
    case cli::KeyType::kInt: return "INT";
    case cli::KeyType::kNumber: return "NUM";
    case cli::KeyType::kIntList: return "INT,...";
    case cli::KeyType::kStringList: return "NAME,...";
    default: return "TEXT";
  }
}

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& ch : s)
    if (ch == '_') ch = '-';
  return "--" + s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compare-aggregate sequence matching"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train a model and write metrics.jsonl and checkpoint.json"},
      {"eval", "evaluate a checkpoint"},
      {"ablate", "train one model per comparison kind and tabulate the results"},
      {"inspect", "report which positions produce the pooled CNN maxima"},
      {"gen-data", "write a synthetic dataset as JSON Lines"},
  };
  std::string config_path;
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON file with any of the keys below");
    for (const auto& [key, info] : cli::config_keys()) {
      if (info.type == cli::KeyType::kBool) {
        sub->add_flag(flag_name(key), raw[key], info.help);
      } else {
        sub->add_option(flag_name(key), raw[key], info.help)->type_name(placeholder(info.type));
      }
    }
    subs[name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    nlohmann::json j = config_path.empty() ? nlohmann::json::object() : cli::read_config_file(config_path);
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      for (const auto& [key, info] : cli::config_keys())
        if (sub->count(flag_name(key)) > 0) j[key] = cli::flag_value(key, raw[key]);
    }
    const RunConfig c = cli::run_config_from_json(j);
    if (subs["train"]->parsed()) return cmd_train(c);
    if (subs["eval"]->parsed()) return cmd_eval(c);
    if (subs["ablate"]->parsed()) return cmd_ablate(c);
    if (subs["inspect"]->parsed()) return cmd_inspect(c);
    return cmd_gen_data(c);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitUsage;
  }
}
