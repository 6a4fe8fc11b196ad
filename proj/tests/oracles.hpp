#pragma once

// Brute-force reference computations for tests. Everything here works on
// plain nested vectors with explicit loops and never calls a library
// operation, so it stays independent of the code under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "seqmatch/seqmatch.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;  // row-major [row][col]
using Vec = std::vector<double>;

inline Mat to_mat(const seqmatch::Tensor& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.values()[i * t.cols() + j];
  return m;
}

inline Vec to_vec(const seqmatch::Tensor& t) { return t.values(); }

inline Vec column(const Mat& m, std::size_t j) {
  Vec c;
  for (const auto& row : m) c.push_back(row[j]);
  return c;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t m = a.size(), k = b.size(), n = b.empty() ? 0 : b[0].size();
  Mat out(m, Vec(n, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i][p] * b[p][j];
      out[i][j] = s;
    }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline Vec softmax(const Vec& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  Vec out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) z += out[i] = std::exp(v[i] - mx);
  for (double& x : out) x /= z;
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Output value and window start per filter, by explicit enumeration of every
// window position over the zero-padded sequence.
struct ConvPool {
  Vec value;
  std::vector<std::size_t> argmax;
};

inline ConvPool conv_maxpool(const Mat& t, const Mat& filters, std::size_t w, const Vec& bias) {
  const std::size_t l_in = t.size(), len = t[0].size();
  const std::size_t padded = std::max(len, w);
  Mat seq(l_in, Vec(padded, 0.0));
  for (std::size_t i = 0; i < l_in; ++i)
    for (std::size_t j = 0; j < len; ++j) seq[i][j] = t[i][j];
  ConvPool out{Vec(filters.size(), 0.0), std::vector<std::size_t>(filters.size(), 0)};
  for (std::size_t o = 0; o < filters.size(); ++o) {
    double best = -1.0;
    for (std::size_t p = 0; p + w <= padded; ++p) {
      Vec window_vec;
      for (std::size_t k = 0; k < w; ++k)
        for (std::size_t i = 0; i < l_in; ++i) window_vec.push_back(seq[i][p + k]);
      const double y = relu(dot(filters[o], window_vec) + bias[o]);
      if (y > best) {
        best = y;
        out.argmax[o] = p;
      }
    }
    out.value[o] = best;
  }
  return out;
}

// sigmoid(Wi x + bi) * tanh(Wu x + bu), one entry at a time.
inline Mat preprocess(const Mat& x, const Mat& wi, const Vec& bi, const Mat& wu, const Vec& bu) {
  const std::size_t l = wi.size(), d = x.size(), len = d ? x[0].size() : 0;
  Mat out(l, Vec(len));
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t j = 0; j < len; ++j) {
      double gi = bi[r], gu = bu[r];
      for (std::size_t c = 0; c < d; ++c) {
        gi += wi[r][c] * x[c][j];
        gu += wu[r][c] * x[c][j];
      }
      out[r][j] = sigmoid(gi) * std::tanh(gu);
    }
  return out;
}

struct Attention {
  Mat weights;   // Q x A
  Mat attended;  // l x A
};

inline Attention attend(const Mat& qbar, const Mat& abar, const Mat& wg, const Vec& bg) {
  const std::size_t l = qbar.size(), nq = qbar[0].size(), na = abar[0].size();
  Attention out{Mat(nq, Vec(na)), Mat(l, Vec(na, 0.0))};
  for (std::size_t j = 0; j < na; ++j) {
    Vec scores(nq);
    for (std::size_t i = 0; i < nq; ++i) {
      double s = 0.0;
      for (std::size_t r = 0; r < l; ++r) {
        double proj = bg[r];
        for (std::size_t c = 0; c < l; ++c) proj += wg[r][c] * qbar[c][i];
        s += proj * abar[r][j];
      }
      scores[i] = s;
    }
    Vec g = softmax(scores);
    for (std::size_t i = 0; i < nq; ++i) {
      out.weights[i][j] = g[i];
      for (std::size_t r = 0; r < l; ++r) out.attended[r][j] += g[i] * qbar[r][i];
    }
  }
  return out;
}

// Comparison of one column pair.
inline Vec compare_column(seqmatch::ComparisonKind kind, const Vec& a, const Vec& h, const Mat& w,
                          const std::vector<Mat>& tensor, const Vec& b) {
  using K = seqmatch::ComparisonKind;
  const std::size_t l = a.size();
  Vec out;
  switch (kind) {
    case K::kNN: {
      Vec x = a;
      x.insert(x.end(), h.begin(), h.end());
      for (std::size_t r = 0; r < w.size(); ++r) out.push_back(relu(dot(w[r], x) + b[r]));
      break;
    }
    case K::kNTN: {
      for (std::size_t s = 0; s < tensor.size(); ++s) {
        double v = 0.0;
        for (std::size_t p = 0; p < l; ++p)
          for (std::size_t q = 0; q < l; ++q) v += a[p] * tensor[s][p][q] * h[q];
        out.push_back(relu(v + b[s]));
      }
      break;
    }
    case K::kEucCos: {
      double dd = 0.0;
      for (std::size_t i = 0; i < l; ++i) dd += (a[i] - h[i]) * (a[i] - h[i]);
      const double na = std::sqrt(dot(a, a)), nh = std::sqrt(dot(h, h));
      out.push_back(std::sqrt(dd));
      out.push_back(na < 1e-12 || nh < 1e-12 ? 0.0 : dot(a, h) / (na * nh));
      break;
    }
    case K::kSub:
      for (std::size_t i = 0; i < l; ++i) out.push_back((a[i] - h[i]) * (a[i] - h[i]));
      break;
    case K::kMult:
      for (std::size_t i = 0; i < l; ++i) out.push_back(a[i] * h[i]);
      break;
    case K::kSubMultNN: {
      Vec x;
      for (std::size_t i = 0; i < l; ++i) x.push_back((a[i] - h[i]) * (a[i] - h[i]));
      for (std::size_t i = 0; i < l; ++i) x.push_back(a[i] * h[i]);
      for (std::size_t r = 0; r < w.size(); ++r) out.push_back(relu(dot(w[r], x) + b[r]));
      break;
    }
  }
  return out;
}

inline Mat compare(seqmatch::ComparisonKind kind, const Mat& abar, const Mat& h, const Mat& w,
                   const std::vector<Mat>& tensor, const Vec& b) {
  const std::size_t na = abar[0].size();
  Mat out;
  for (std::size_t j = 0; j < na; ++j) {
    Vec c = compare_column(kind, column(abar, j), column(h, j), w, tensor, b);
    if (out.empty()) out.assign(c.size(), Vec(na));
    for (std::size_t r = 0; r < c.size(); ++r) out[r][j] = c[r];
  }
  return out;
}

inline std::vector<Mat> to_slices(const seqmatch::Tensor& t) {
  const auto& s = t.shape();
  std::vector<Mat> out(s[0], Mat(s[1], Vec(s[2])));
  for (std::size_t i = 0; i < s[0]; ++i)
    for (std::size_t j = 0; j < s[1]; ++j)
      for (std::size_t k = 0; k < s[2]; ++k) out[i][j][k] = t.values()[(i * s[1] + j) * s[2] + k];
  return out;
}

// softmax_k( w . tanh(Ws r_k + bs) + b ).
inline Vec select(const Mat& r, const Mat& ws, const Vec& bs, const Vec& w, double b) {
  const std::size_t k_count = r[0].size();
  Vec scores(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    double s = b;
    for (std::size_t i = 0; i < ws.size(); ++i) {
      double h = bs[i];
      for (std::size_t c = 0; c < r.size(); ++c) h += ws[i][c] * r[c][k];
      s += w[i] * std::tanh(h);
    }
    scores[k] = s;
  }
  return softmax(scores);
}

inline Vec classify(const Vec& r, const Mat& w, const Vec& b) {
  Vec logits(w.size());
  for (std::size_t c = 0; c < w.size(); ++c) logits[c] = dot(w[c], r) + b[c];
  return softmax(logits);
}

// MAP / MRR by enumerating ranks: a candidate's rank is 1 + the number of
// candidates that beat it (higher score, or equal score at a lower index).
inline std::pair<double, double> map_mrr(const std::vector<std::pair<Vec, std::vector<std::size_t>>>& qs) {
  double map = 0.0, mrr = 0.0;
  std::size_t n = 0;
  for (const auto& [scores, correct] : qs) {
    if (correct.empty()) continue;
    std::vector<std::size_t> ranks;
    for (std::size_t c : correct) {
      std::size_t rank = 1;
      for (std::size_t o = 0; o < scores.size(); ++o)
        if (scores[o] > scores[c] || (scores[o] == scores[c] && o < c)) ++rank;
      ranks.push_back(rank);
    }
    std::sort(ranks.begin(), ranks.end());
    double ap = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) ap += static_cast<double>(i + 1) / ranks[i];
    map += ap / ranks.size();
    mrr += 1.0 / ranks.front();
    ++n;
  }
  return {map / n, mrr / n};
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

using ParamMap = std::map<std::string, seqmatch::Tensor>;
// Builds a scalar loss on `tape` from the named parameters.
using LossBuilder = std::function<seqmatch::Var(seqmatch::Tape&, std::map<std::string, seqmatch::Var>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Central differences (step h) on every entry of every parameter, compared
// with the tape's reverse-mode gradient.
inline GradCheck gradient_check(ParamMap params, const LossBuilder& build, double h = 1e-5) {
  auto evaluate = [&](ParamMap& p, seqmatch::GradientMap* grads) {
    seqmatch::Tape tape;
    std::map<std::string, seqmatch::Var> vars;
    for (auto& [name, t] : p) vars.emplace(name, tape.param(name, t));
    seqmatch::Var loss = build(tape, vars);
    const double v = loss.value()[0];
    if (grads) *grads = tape.backward(loss);
    return v;
  };
  seqmatch::GradientMap grads;
  evaluate(params, &grads);
  GradCheck out;
  for (auto& [name, t] : params) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double up = evaluate(params, nullptr);
      t[i] = orig - h;
      const double down = evaluate(params, nullptr);
      t[i] = orig;
      const double numeric = (up - down) / (2 * h);
      auto it = grads.find(name);
      const double analytic = it == grads.end() ? 0.0 : it->second[i];
      const double err = relative_error(analytic, numeric);
      ++out.checked;
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

// Fixed random weighting that turns any tensor output into a scalar loss.
inline seqmatch::Var project(seqmatch::Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto weights = seqmatch::Tensor::uniform(out.shape(), -1.0, 1.0, rng);
  return seqmatch::sum(seqmatch::mul(out, out.tape->constant(std::move(weights))));
}

}  // namespace oracle
