// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tiny_model.hpp"

using namespace seqmatch;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates failures with a short note for each.
struct Checker {
  Outcome out;
  std::size_t checks = 0;
  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok && out.pass) out.detail = what;
    out.pass = out.pass && ok;
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream os;
    os << what << ": got " << got << " want " << want;
    expect(std::abs(got - want) <= tol, os.str());
  }
  Outcome done(const std::string& summary) {
    if (out.pass) out.detail = summary + " (" + std::to_string(checks) + " checks)";
    return out;
  }
};

TokenIds random_ids(std::mt19937_64& rng, std::size_t len) {
  std::uniform_int_distribution<std::size_t> tok(2, 11);
  TokenIds ids(len);
  for (auto& i : ids) i = tok(rng);
  return ids;
}

// ---------------------------------------------------------------- gradients

Outcome gradient_integrity() {
  constexpr double kTol = 1e-4;
  std::mt19937_64 rng(99);
  double worst = 0;
  std::string worst_where;
  Checker c;
  for (auto task : {TaskShape::kSelectFromK, TaskShape::kClassifyPair, TaskShape::kSelectFromKWithPlot}) {
    for (auto kind : kAllComparisonKinds) {
      Model m = fixture::tiny_model(kind, task, 5, 0.8);
      EncodedInstance x;
      x.question = random_ids(rng, 4);
      if (task == TaskShape::kSelectFromKWithPlot) x.plot = random_ids(rng, 4);
      const std::size_t k = task == TaskShape::kClassifyPair ? 1 : 3;
      for (std::size_t i = 0; i < k; ++i) x.candidates.push_back(random_ids(rng, 3));
      x.gold = {task == TaskShape::kClassifyPair ? 2u : 1u};
      auto res = oracle::gradient_check(m.params, [&](Tape& tape, std::map<std::string, Var>&) {
        return instance_loss(tape, bind(tape, m), x);
      });
      std::size_t total = 0;
      for (const auto& [name, t] : m.params) total += t.size();
      const std::string where = std::string(to_string(kind)) + "/" + std::string(to_string(task));
      c.expect(res.checked == total, where + ": not every parameter was checked");
      c.expect(res.max_rel_error < kTol, where + ": " + res.worst);
      if (res.max_rel_error > worst) {
        worst = res.max_rel_error;
        worst_where = where;
      }
    }
  }
  std::ostringstream os;
  os << "max relative error " << worst << " at " << worst_where;
  return c.done(os.str());
}

// ------------------------------------------------------------------ oracles

struct LayerTensors {
  Tensor wg, bg, weight, tensor, bias, ws, bs, w, b;
  LayerTensors(std::size_t l, std::mt19937_64& rng) {
    wg = Tensor::uniform({l, l}, -1, 1, rng);
    bg = Tensor::uniform({l}, -1, 1, rng);
    weight = Tensor::uniform({l, 2 * l}, -1, 1, rng);
    tensor = Tensor::uniform({l, l, l}, -1, 1, rng);
    bias = Tensor::uniform({l}, -1, 1, rng);
    ws = Tensor::uniform({l, 2 * l}, -1, 1, rng);
    bs = Tensor::uniform({l}, -1, 1, rng);
    w = Tensor::uniform({l}, -1, 1, rng);
    b = Tensor::uniform({1}, -1, 1, rng);
  }
  ComparisonParams comparison(Tape& t, ComparisonKind kind) const {
    ComparisonParams cp;
    if (kind == ComparisonKind::kNN || kind == ComparisonKind::kSubMultNN) cp.weight = t.param("w", weight);
    if (kind == ComparisonKind::kNTN) cp.tensor = t.param("t", tensor);
    if (comparison_has_params(kind)) cp.bias = t.param("b", bias);
    return cp;
  }
};

Outcome oracle_equivalence() {
  constexpr int kTrials = 100;
  constexpr double kTol = 1e-9;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 6), len(1, 8), win(1, 4);
  Checker c;
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t r = dim(rng), inner = dim(rng), cols = dim(rng);
    Tensor a = Tensor::uniform({r, inner}, -2, 2, rng), b = Tensor::uniform({inner, cols}, -2, 2, rng);
    Tape t;
    const Tensor got = matmul(t.constant(a), t.constant(b)).value();
    const auto want = oracle::matmul(oracle::to_mat(a), oracle::to_mat(b));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < cols; ++j) c.expect(got.at(i, j) == want[i][j], "matmul differs");
  }
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t l_in = dim(rng), l_out = dim(rng), n = len(rng), w = win(rng);
    Tensor x = Tensor::uniform({l_in, n}, -2, 2, rng), f = Tensor::uniform({l_out, w * l_in}, -1, 1, rng),
           bias = Tensor::uniform({l_out}, -1, 1, rng);
    const auto got = conv_maxpool_forward(x, f, w, bias);
    const auto want = oracle::conv_maxpool(oracle::to_mat(x), oracle::to_mat(f), w, oracle::to_vec(bias));
    c.expect(got.argmax == want.argmax, "conv_maxpool argmax differs");
    for (std::size_t o = 0; o < l_out; ++o) c.near(got.pooled[o], want.value[o], kTol, "conv_maxpool value");
  }
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t l = dim(rng), q = len(rng), n = len(rng);
    LayerTensors p(l, rng);
    Tensor qbar = Tensor::uniform({l, q}, -2, 2, rng), abar = Tensor::uniform({l, n}, -2, 2, rng);
    Tape t;
    AttentionResult got = attend(t.constant(qbar), t.constant(abar), {t.param("wg", p.wg), t.param("bg", p.bg)});
    const auto want = oracle::attend(oracle::to_mat(qbar), oracle::to_mat(abar), oracle::to_mat(p.wg), p.bg.values());
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < n; ++j) c.near(got.attended.value().at(i, j), want.attended[i][j], kTol, "attend");
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < n; ++j) c.near(got.weights.value().at(i, j), want.weights[i][j], kTol, "attend weights");
  }
  for (auto kind : kAllComparisonKinds) {
    for (int trial = 0; trial < kTrials; ++trial) {
      const std::size_t l = dim(rng), n = len(rng);
      LayerTensors p(l, rng);
      Tensor a = Tensor::uniform({l, n}, -2, 2, rng), h = Tensor::uniform({l, n}, -2, 2, rng);
      Tape t;
      const Tensor got = compare(kind, p.comparison(t, kind), t.constant(a), t.constant(h)).value();
      const auto want = oracle::compare(kind, oracle::to_mat(a), oracle::to_mat(h), oracle::to_mat(p.weight),
                                        oracle::to_slices(p.tensor), p.bias.values());
      c.expect(got.rows() == want.size(), std::string(to_string(kind)) + ": output rows");
      if (got.rows() != want.size()) continue;
      for (std::size_t i = 0; i < want.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) c.near(got.at(i, j), want[i][j], kTol, std::string(to_string(kind)));
    }
  }
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t l = dim(rng), k = len(rng);
    LayerTensors p(l, rng);
    Tensor R = Tensor::uniform({2 * l, k}, -2, 2, rng);
    Tape t;
    const Tensor got = select_candidate(t.constant(R), {t.param("ws", p.ws), t.param("bs", p.bs), t.param("w", p.w),
                                                        t.param("b", p.b)})
                           .value();
    const auto want = oracle::select(oracle::to_mat(R), oracle::to_mat(p.ws), p.bs.values(), p.w.values(), p.b[0]);
    for (std::size_t i = 0; i < k; ++i) c.near(got[i], want[i], kTol, "select_candidate");
  }
  for (int trial = 0; trial < kTrials; ++trial) {
    std::vector<RankedQuestion> qs;
    std::vector<std::pair<oracle::Vec, std::vector<std::size_t>>> oq;
    for (int i = 0; i < 5; ++i) {
      const std::size_t n = 1 + rng() % 8;
      RankedQuestion q;
      for (std::size_t j = 0; j < n; ++j) q.scores.push_back(static_cast<double>(rng() % 4));
      for (std::size_t j = 0; j < n; ++j)
        if (rng() % 3 == 0) q.correct.push_back(j);
      if (q.correct.empty()) q.correct.push_back(rng() % n);
      oq.emplace_back(q.scores, q.correct);
      qs.push_back(std::move(q));
    }
    const auto got = map_mrr(qs);
    const auto [map, mrr] = oracle::map_mrr(oq);
    c.near(got.map, map, kTol, "MAP");
    c.near(got.mrr, mrr, kTol, "MRR");
  }
  return c.done(std::to_string(kTrials) + " random instances per operation, 6 comparison kinds");
}

// --------------------------------------------------------------- invariants

Outcome algebraic_invariants() {
  constexpr double kTol = 1e-9;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 6), len(1, 8);
  Checker c;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t l = dim(rng), n = len(rng), q = len(rng);
    LayerTensors p(l, rng);
    Tensor a = Tensor::uniform({l, n}, -3, 3, rng), h = Tensor::uniform({l, n}, -3, 3, rng);
    Tape t;
    auto run = [&](ComparisonKind kind, const Tensor& x, const Tensor& y) {
      return compare(kind, p.comparison(t, kind), t.constant(x), t.constant(y)).value();
    };
    const Tensor sub = run(ComparisonKind::kSub, a, h);
    for (std::size_t j = 0; j < n; ++j) {
      double col = 0, dist = 0;
      for (std::size_t i = 0; i < l; ++i) {
        col += sub.at(i, j);
        dist += (a.at(i, j) - h.at(i, j)) * (a.at(i, j) - h.at(i, j));
      }
      c.near(col, dist, kTol, "Sub column sum vs squared distance");
    }
    const Tensor self = run(ComparisonKind::kEucCos, a, a);
    for (std::size_t j = 0; j < n; ++j) {
      c.near(self.at(0, j), 0.0, kTol, "EucCos(a,a) distance");
      c.near(self.at(1, j), 1.0, kTol, "EucCos(a,a) cosine");
    }
    c.expect(run(ComparisonKind::kMult, a, Tensor::ones({l, n})) == a, "Mult(a, 1) != a");
    for (auto kind : kAllComparisonKinds) {
      const Tensor out = run(kind, a, h);
      const std::size_t rows = kind == ComparisonKind::kEucCos ? 2 : l;
      c.expect(out.rows() == rows && out.cols() == n, std::string(to_string(kind)) + ": output shape");
      c.expect(comparison_output_dim(kind, l) == rows, std::string(to_string(kind)) + ": output_dim table");
    }

    Tensor qbar = Tensor::uniform({l, q}, -3, 3, rng);
    AttentionResult att = attend(t.constant(qbar), t.constant(a), {t.param("wg", p.wg), t.param("bg", p.bg)});
    const Tensor& g = att.weights.value();
    const Tensor& H = att.attended.value();
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < q; ++i) s += g.at(i, j);
      c.near(s, 1.0, kTol, "attention column sum");
    }
    for (std::size_t r = 0; r < l; ++r) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = 0; i < q; ++i) {
        lo = std::min(lo, qbar.at(r, i));
        hi = std::max(hi, qbar.at(r, i));
      }
      for (std::size_t j = 0; j < n; ++j)
        c.expect(H.at(r, j) >= lo - kTol && H.at(r, j) <= hi + kTol, "attended value outside hull");
    }
  }
  return c.done("Sub sum, EucCos self, Mult identity, attention sums and hull, shape table");
}

// ------------------------------------------------------------ training runs

constexpr std::size_t kEpochs = 200;
// Embedding dropout per task.
constexpr double kContainmentDropout = 0.3;
constexpr double kPlotDropout = 0.0;

struct Run {
  std::size_t first_hit = 0;  // first epoch with train accuracy >= 0.95, 0 if never
  double final_train = 0;
  double held_out = 0;
  double untrained = 0;
  bool embeddings_frozen = false;
  std::string log;
  std::string checkpoint;
  double seconds = 0;
};

SyntheticOptions train_options() {
  SyntheticOptions o;
  o.n = 200;
  o.num_candidates = 5;
  o.vocab_size = 64;
  o.seed = 7;
  return o;
}

Vocabulary synthetic_vocab(std::size_t n) {
  Vocabulary v;
  for (std::size_t i = 0; i < n; ++i) v.add("w" + std::to_string(i));
  return v;
}

Run train_run(SyntheticTask task, ComparisonKind kind, double dropout, const fs::path& scratch) {
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticOptions o = train_options();
  SyntheticOptions held = o;
  held.n = 100;
  held.seed = 8;
  const Dataset train_ds = generate_synthetic(task, o);
  const Dataset eval_ds = generate_synthetic(task, held);
  const Vocabulary v = synthetic_vocab(o.vocab_size);

  ModelConfig mc;
  mc.comparison = kind;
  mc.task = train_ds.shape;
  mc.hidden = 16;
  mc.windows = {1, 2, 3};
  Model m = init_model(mc, v, random_embeddings(v, 20, 11), 1);
  const auto tr = encode(train_ds, v), ev = encode(eval_ds, v);

  Run r;
  r.untrained = evaluate(m, ev).accuracy;
  const auto before = checksum(m.embeddings.matrix);
  TrainConfig cfg;
  cfg.max_epochs = kEpochs;
  cfg.dropout = dropout;
  TrainHooks hooks;
  hooks.track_train_accuracy = true;
  std::ostringstream log;
  hooks.on_epoch = [&](const EpochRecord& e) {
    log << to_json(e).dump() << '\n';
    r.final_train = *e.train_accuracy;
    if (r.first_hit == 0 && *e.train_accuracy >= 0.95) r.first_hit = e.epoch;
  };
  const TrainResult res = train(m, tr, cfg, hooks);
  r.embeddings_frozen = checksum(m.embeddings.matrix) == before;
  r.held_out = evaluate(m, ev).accuracy;
  r.log = log.str();
  const fs::path ck = scratch / (std::string(to_string(kind)) + "-" + std::string(to_string(task)) + ".json");
  save_checkpoint(ck.string(), m, res.optimizer, cfg);
  std::ifstream in(ck, std::ios::binary);
  r.checkpoint.assign(std::istreambuf_iterator<char>(in), {});
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

struct Suite {
  fs::path scratch;
  std::map<ComparisonKind, Run> containment;
  std::optional<Run> plot;
  std::optional<Run> repeat;
};

Outcome overfit_capability(Suite& s) {
  Checker c;
  std::string summary;
  for (auto kind : kAllComparisonKinds) {
    const Run& r = s.containment[kind] = train_run(SyntheticTask::kContainment, kind, kContainmentDropout, s.scratch);
    std::cerr << "  " << to_string(kind) << ": train accuracy >= 0.95 at epoch " << r.first_hit << ", final "
              << r.final_train << ", held-out " << r.held_out << ", untrained " << r.untrained << " (" << fmt(r.seconds)
              << " s)\n";
    c.expect(r.first_hit > 0, std::string(to_string(kind)) + " never reached 0.95 train accuracy (final " +
                                  fmt(r.final_train) + ")");
    summary += std::string(summary.empty() ? "" : ", ") + std::string(to_string(kind)) + "@" +
               std::to_string(r.first_hit);
  }
  return c.done("first epoch at 0.95: " + summary);
}

Outcome generalization(Suite& s) {
  constexpr double kHeldOut = 0.80;
  // An untrained model is the default comparison kind, freshly initialized.
  constexpr ComparisonKind kUntrainedKind = ComparisonKind::kSubMultNN;
  Checker c;
  std::string summary;
  for (auto kind : kAllComparisonKinds) {
    const Run& r = s.containment.at(kind);
    c.expect(r.held_out >= kHeldOut,
             std::string(to_string(kind)) + " held-out accuracy " + fmt(r.held_out) + " < " + fmt(kHeldOut));
    summary += std::string(summary.empty() ? "" : ", ") + std::string(to_string(kind)) + " " + fmt(r.held_out);
  }
  const double u = s.containment.at(kUntrainedKind).untrained;
  c.expect(u >= 0.1 && u <= 0.3, "untrained accuracy " + fmt(u) + " outside [0.10, 0.30]");
  return c.done("held-out " + summary + "; untrained " + fmt(u));
}

Outcome plot_path(Suite& s) {
  s.plot = train_run(SyntheticTask::kPlotContainment, ComparisonKind::kSubMultNN, kPlotDropout, s.scratch);
  std::cerr << "  plot-containment submult-nn: final train " << s.plot->final_train << ", held-out "
            << s.plot->held_out << " (" << fmt(s.plot->seconds) << " s)\n";
  Checker c;
  c.expect(s.plot->final_train >= 0.90, "final train accuracy " + fmt(s.plot->final_train) + " < 0.90");
  return c.done("final train accuracy " + fmt(s.plot->final_train));
}

Outcome determinism(Suite& s) {
  // Mult is the cheapest kind of the overfit configuration.
  const fs::path again = s.scratch / "repeat";
  fs::create_directories(again);
  s.repeat = train_run(SyntheticTask::kContainment, ComparisonKind::kMult, kContainmentDropout, again);
  const Run& first = s.containment.at(ComparisonKind::kMult);
  Checker c;
  c.expect(!first.log.empty() && first.log == s.repeat->log, "metric logs differ");
  c.expect(!first.checkpoint.empty() && first.checkpoint == s.repeat->checkpoint, "checkpoints differ");
  return c.done("metric log " + std::to_string(first.log.size()) + " bytes, checkpoint " +
                std::to_string(first.checkpoint.size()) + " bytes identical");
}

// ------------------------------------------------------------------ metrics

Outcome metrics_correctness() {
  Checker c;
  const std::vector<RankedQuestion> ranked_first{{{0.9, 0.1, 0.0}, {0}}, {{0.2, 0.7, 0.1}, {1}}};
  const auto perfect = map_mrr(ranked_first);
  c.expect(perfect.map == 1.0 && perfect.mrr == 1.0, "perfect ranking is not exactly 1.0");
  const std::vector<RankedQuestion> ranked_second{{{0.9, 0.1}, {1}}};
  const auto half = map_mrr(ranked_second);
  c.expect(half.map == 0.5 && half.mrr == 0.5, "second-ranked answer is not exactly 0.5/0.5");

  std::mt19937_64 rng(50);
  std::vector<RankedQuestion> qs;
  std::vector<std::pair<oracle::Vec, std::vector<std::size_t>>> oq;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng() % 8;
    RankedQuestion q;
    for (std::size_t k = 0; k < n; ++k) q.scores.push_back(static_cast<double>(rng() % 4));
    for (std::size_t k = 0; k < n; ++k)
      if (rng() % 3 == 0) q.correct.push_back(k);
    if (q.correct.empty()) q.correct.push_back(rng() % n);
    oq.emplace_back(q.scores, q.correct);
    qs.push_back(std::move(q));
  }
  const auto got = map_mrr(qs);
  const auto [map, mrr] = oracle::map_mrr(oq);
  c.near(got.map, map, 1e-12, "MAP vs rank enumeration");
  c.near(got.mrr, mrr, 1e-12, "MRR vs rank enumeration");
  return c.done("fixtures exact; 50-question MAP " + std::to_string(got.map) + " MRR " + std::to_string(got.mrr));
}

Outcome frozen_embeddings(const Suite& s) {
  Checker c;
  std::size_t runs = 0;
  auto check = [&](const Run& r, const std::string& what) {
    ++runs;
    c.expect(r.embeddings_frozen, what + ": embedding checksum changed");
  };
  for (const auto& [kind, r] : s.containment) check(r, std::string(to_string(kind)));
  if (s.plot) check(*s.plot, "plot-containment");
  if (s.repeat) check(*s.repeat, "repeat run");
  c.expect(runs > 0, "no training runs");
  return c.done("checksum unchanged across " + std::to_string(runs) + " training runs");
}

}  // namespace

int main() {
  Suite s;
  s.scratch = fs::temp_directory_path() / ("seqmatch_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(s.scratch);
  fs::create_directories(s.scratch);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"oracle equivalence", oracle_equivalence},
      {"algebraic invariants", algebraic_invariants},
      {"overfit capability", [&] { return overfit_capability(s); }},
      {"generalization signal", [&] { return generalization(s); }},
      {"three-sequence path", [&] { return plot_path(s); }},
      {"determinism", [&] { return determinism(s); }},
      {"metrics correctness", metrics_correctness},
      {"frozen embeddings", [&] { return frozen_embeddings(s); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail << " ["
              << fmt(sec) << " s]" << std::endl;
    failed += o.pass ? 0 : 1;
  }
  fs::remove_all(s.scratch);
  return failed == 0 ? 0 : 1;
}
