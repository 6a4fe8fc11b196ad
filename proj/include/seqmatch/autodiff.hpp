#pragma once

// Reverse-mode differentiation over dense tensors. A Tape records every
// operation applied to its Vars; backward() walks the records in reverse and
// returns gradients for the named parameters that were reached.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqmatch/errors.hpp"
#include "seqmatch/tensor.hpp"

namespace seqmatch {

using GradientMap = std::map<std::string, Tensor>;

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Tensor& output, const Tensor& grad_output)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient (inputs, frozen embeddings, masks).
  Var constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  // Trainable leaf, referenced rather than copied. The tensor must outlive
  // the tape. Registering the same name twice returns the same node.
  Var param(const std::string& name, const Tensor& value) {
    if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
    Node n;
    n.ref = &value;
    n.requires_grad = true;
    n.param_name = name;
    Var v = push(std::move(n));
    params_.emplace(name, v.id);
    return v;
  }
  Var param(const std::string& name, Tensor&& value) = delete;

  // Records the output of an operation. `backward` receives the gradient of
  // the output and must call accumulate() on the inputs that need it.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    for (const Var& in : inputs) {
      if (in.tape != this) throw ContractError("operation mixes vars from different tapes");
      n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Tensor& value(Var v) const { return nodes_[v.id].value(); }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Tensor& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (grads_[v.id].shape().empty()) {
      grads_[v.id] = g;
    } else {
      grads_[v.id] += g;
    }
  }

  bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of the most recent backward() for any node; zeros if unreached.
  Tensor grad(Var v) const {
    const Tensor& g = grads_[v.id];
    if (g.shape().empty()) return Tensor::zeros(nodes_[v.id].value().shape());
    return g;
  }

  GradientMap backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
    const Tensor& lv = value(loss);
    if (lv.size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
    }
    for (auto& g : grads_) g = Tensor();
    GradientMap out;
    if (!nodes_[loss.id].requires_grad) return out;
    grads_[loss.id] = Tensor(lv.shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (grads_[i].shape().empty()) continue;
      if (n.backward) n.backward(*this, n.value(), grads_[i]);
    }
    for (const auto& [name, id] : params_) {
      if (!grads_[id].shape().empty()) out.emplace(name, grads_[id]);
    }
    return out;
  }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    bool requires_grad = false;
    std::string param_name;
    BackwardFn backward;

    const Tensor& value() const { return ref ? *ref : owned; }
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // element addresses stay valid as the tape grows
  std::vector<Tensor> grads_;
  std::unordered_map<std::string, std::size_t> params_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() < 1 || B.rank() > 2 || A.shape()[1] != B.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " +
                         shape_str(B.shape()));
  }
  const std::size_t m = A.rows(), k = A.shape()[1], n = B.cols();
  Tensor out(B.rank() == 1 ? Shape{m} : Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.needs_grad(a)) {
      Tensor ga(A.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
          ga[i * k + p] = s;
        }
      t.accumulate(a, ga);
    }
    if (t.needs_grad(b)) {
      Tensor gb(B.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      t.accumulate(b, gb);
    }
  });
}

inline Var transpose(Var a) {
  const Tensor& A = a.value();
  if (A.rank() != 2) throw DimensionError("transpose: expected matrix, got " + shape_str(A.shape()));
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = A.at(i, j);
  return a.tape->record(std::move(out), {a}, [a, r, c](Tape& t, const Tensor&, const Tensor& g) {
    Tensor ga({r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) = g.at(j, i);
    t.accumulate(a, ga);
  });
}

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  Shape original = a.shape();
  return a.tape->record(std::move(out), {a}, [a, original](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, g.reshaped(original));
  });
}

// Adds vector v to every column of m (v ⊗ e_X in matrix notation).
inline Var add_broadcast(Var m, Var v) {
  const Tensor& M = m.value();
  const Tensor& V = v.value();
  if (M.rank() != 2 || V.rank() != 1 || V.size() != M.rows()) {
    throw DimensionError("add_broadcast: cannot add " + shape_str(V.shape()) + " to columns of " +
                         shape_str(M.shape()));
  }
  const std::size_t r = M.rows(), c = M.cols();
  Tensor out = M;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) += V[i];
  return m.tape->record(std::move(out), {m, v}, [m, v, r, c](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(m, g);
    if (t.needs_grad(v)) {
      Tensor gv({r});
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[i] += g.at(i, j);
      t.accumulate(v, gv);
    }
  });
}

enum class ElementwiseOp { kAdd, kSub, kMul };

inline Var elementwise(ElementwiseOp op, Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Tensor::require_same_shape(A, B, "elementwise");
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) {
    switch (op) {
      case ElementwiseOp::kAdd: out[i] = A[i] + B[i]; break;
      case ElementwiseOp::kSub: out[i] = A[i] - B[i]; break;
      case ElementwiseOp::kMul: out[i] = A[i] * B[i]; break;
    }
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, op](Tape& t, const Tensor&, const Tensor& g) {
    switch (op) {
      case ElementwiseOp::kAdd:
        t.accumulate(a, g);
        t.accumulate(b, g);
        break;
      case ElementwiseOp::kSub: {
        t.accumulate(a, g);
        if (t.needs_grad(b)) {
          Tensor gb = g;
          for (double& x : gb.values()) x = -x;
          t.accumulate(b, gb);
        }
        break;
      }
      case ElementwiseOp::kMul: {
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        if (t.needs_grad(a)) {
          Tensor ga(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * B[i];
          t.accumulate(a, ga);
        }
        if (t.needs_grad(b)) {
          Tensor gb(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * A[i];
          t.accumulate(b, gb);
        }
        break;
      }
    }
  });
}

inline Var add(Var a, Var b) { return elementwise(ElementwiseOp::kAdd, a, b); }
inline Var sub(Var a, Var b) { return elementwise(ElementwiseOp::kSub, a, b); }
inline Var mul(Var a, Var b) { return elementwise(ElementwiseOp::kMul, a, b); }

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& x : out.values()) x *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t, const Tensor&, const Tensor& g) {
    Tensor ga = g;
    for (double& x : ga.values()) x *= s;
    t.accumulate(a, ga);
  });
}

enum class Activation { kSigmoid, kTanh, kRelu };

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}


inline Var activation(Activation kind, Var a) {
  Tensor out = a.value();
  for (double& x : out.values()) {
    switch (kind) {
      case Activation::kSigmoid: x = stable_sigmoid(x); break;
      case Activation::kTanh: x = std::tanh(x); break;
      case Activation::kRelu: x = x > 0.0 ? x : 0.0; break;
    }
  }
  return a.tape->record(std::move(out), {a}, [a, kind](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (kind) {
        case Activation::kSigmoid: ga[i] = g[i] * y[i] * (1.0 - y[i]); break;
        case Activation::kTanh: ga[i] = g[i] * (1.0 - y[i] * y[i]); break;
        // relu'(0) = 0; y > 0 exactly when x > 0.
        case Activation::kRelu: ga[i] = y[i] > 0.0 ? g[i] : 0.0; break;
      }
    }
    t.accumulate(a, ga);
  });
}

inline Var sigmoid(Var a) { return activation(Activation::kSigmoid, a); }
inline Var tanh(Var a) { return activation(Activation::kTanh, a); }
inline Var relu(Var a) { return activation(Activation::kRelu, a); }

// Softmax down each column (rank-1 input is a single column). Stabilised by
// subtracting the column max before exponentiating.
inline Var softmax_columns(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(A.shape());
  for (std::size_t j = 0; j < c; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r; ++i) mx = std::max(mx, A[i * c + j]);
    double z = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      const double e = std::exp(A[i * c + j] - mx);
      out[i * c + j] = e;
      z += e;
    }
    for (std::size_t i = 0; i < r; ++i) out[i * c + j] /= z;
  }
  return a.tape->record(std::move(out), {a}, [a, r, c](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor ga(y.shape());
    for (std::size_t j = 0; j < c; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < r; ++i) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t i = 0; i < r; ++i) ga[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
    }
    t.accumulate(a, ga);
  });
}

// Vertical stack. Rank-1 parts stack into a rank-1 result; matrices must
// share their column count.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const bool vectors = parts[0].value().rank() == 1;
  const std::size_t c = parts[0].value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if ((v.rank() == 1) != vectors || v.cols() != c) {
      throw DimensionError("concat_rows: incompatible part " + shape_str(v.shape()));
    }
    total += v.rows();
  }
  Tensor out(vectors ? Shape{total} : Shape{total, c});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + offset * c);
    offsets.push_back(offset);
    offset += v.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(
      std::move(out), inputs, [inputs, offsets, c](Tape& t, const Tensor&, const Tensor& g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!t.needs_grad(inputs[k])) continue;
          const Tensor& v = t.value(inputs[k]);
          Tensor gk(v.shape());
          std::copy_n(g.values().begin() + offsets[k] * c, v.size(), gk.values().begin());
          t.accumulate(inputs[k], gk);
        }
      });
}

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

// Horizontal concatenation; rank-1 parts are treated as single columns.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.value().shape()));
    }
    total += p.value().cols();
  }
  Tensor out({r, total});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t vc = v.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < vc; ++j) out.at(i, offset + j) = v[i * vc + j];
    offsets.push_back(offset);
    offset += vc;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(
      std::move(out), inputs, [inputs, offsets, r, total](Tape& t, const Tensor&, const Tensor& g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!t.needs_grad(inputs[k])) continue;
          const Tensor& v = t.value(inputs[k]);
          const std::size_t vc = v.cols();
          Tensor gk(v.shape());
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < vc; ++j) gk[i * vc + j] = g[i * total + offsets[k] + j];
          t.accumulate(inputs[k], gk);
        }
      });
}

inline Var sum(Var a) {
  return a.tape->record(Tensor::scalar(a.value().sum()), {a},
                        [a](Tape& t, const Tensor&, const Tensor& g) {
                          t.accumulate(a, Tensor(t.value(a).shape(), g[0]));
                        });
}

// Mean of scalar vars.
inline Var mean(std::span<const Var> scalars) {
  if (scalars.empty()) throw ContractError("mean: no inputs");
  Var total = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) total = add(total, scalars[i]);
  return scale(total, 1.0 / static_cast<double>(scalars.size()));
}

// ---------------------------------------------------------------------------
// Convolution with max-over-time pooling
// ---------------------------------------------------------------------------

struct ConvPoolResult {
  Tensor pooled;                      // [l_out]
  std::vector<std::size_t> argmax;    // window start position per output dim
  std::size_t positions = 0;          // number of window positions
  std::size_t padded_length = 0;      // max(A, window)
};

// Sliding window of `window` consecutive columns of t (l_in x A), flattened
// column by column, times filters (l_out x window*l_in) plus bias, ReLU, then
// per-dimension max over positions. Short sequences are right-padded with
// zero columns. Ties go to the earliest position.
inline ConvPoolResult conv_maxpool_forward(const Tensor& t, const Tensor& filters,
                                           std::size_t window, const Tensor& bias) {
  if (window < 1) throw ConfigError("conv_maxpool: window size must be >= 1");
  if (t.rank() != 2) throw DimensionError("conv_maxpool: input must be a matrix, got " + shape_str(t.shape()));
  const std::size_t l_in = t.rows(), len = t.cols();
  if (len < 1) throw ContractError("conv_maxpool: empty sequence");
  if (filters.rank() != 2 || filters.cols() != window * l_in || bias.rank() != 1 ||
      bias.size() != filters.rows()) {
    throw DimensionError("conv_maxpool: filters " + shape_str(filters.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not fit window " + std::to_string(window) +
                         " over input " + shape_str(t.shape()));
  }
  const std::size_t l_out = filters.rows();
  ConvPoolResult res;
  res.padded_length = std::max(len, window);
  res.positions = res.padded_length - window + 1;
  res.pooled = Tensor({l_out});
  res.argmax.assign(l_out, 0);
  const std::size_t fc = filters.cols();
  for (std::size_t o = 0; o < l_out; ++o) {
    double best = 0.0;
    for (std::size_t p = 0; p < res.positions; ++p) {
      double z = 0.0;
      for (std::size_t k = 0; k < window && p + k < len; ++k)
        for (std::size_t i = 0; i < l_in; ++i) z += filters[o * fc + k * l_in + i] * t.at(i, p + k);
      z += bias[o];
      const double y = z > 0.0 ? z : 0.0;
      if (p == 0 || y > best) {
        best = y;
        res.argmax[o] = p;
      }
    }
    res.pooled[o] = best;
  }
  return res;
}

inline Var conv_maxpool(Var t, Var filters, std::size_t window, Var bias) {
  ConvPoolResult res = conv_maxpool_forward(t.value(), filters.value(), window, bias.value());
  auto argmax = std::move(res.argmax);
  return t.tape->record(
      std::move(res.pooled), {t, filters, bias},
      [t, filters, bias, window, argmax](Tape& tp, const Tensor& y, const Tensor& g) {
        const Tensor& T = tp.value(t);
        const Tensor& F = tp.value(filters);
        const std::size_t l_in = T.rows(), len = T.cols(), fc = F.cols();
        Tensor gt(T.shape()), gf(F.shape()), gb(y.shape());
        for (std::size_t o = 0; o < y.size(); ++o) {
          if (y[o] <= 0.0) continue;
          const double go = g[o];
          const std::size_t p = argmax[o];
          gb[o] += go;
          for (std::size_t k = 0; k < window && p + k < len; ++k)
            for (std::size_t i = 0; i < l_in; ++i) {
              gf[o * fc + k * l_in + i] += go * T.at(i, p + k);
              gt.at(i, p + k) += go * F[o * fc + k * l_in + i];
            }
        }
        tp.accumulate(t, gt);
        tp.accumulate(filters, gf);
        tp.accumulate(bias, gb);
      });
}

// ---------------------------------------------------------------------------
// Column-pair operations used by the comparison layer
// ---------------------------------------------------------------------------

// out[s, j] = a_jᵀ T[s] h_j for each slice s of the (S x l x l) tensor.
inline Var bilinear_slices(Var a, Var tensor, Var h) {
  const Tensor& A = a.value();
  const Tensor& T = tensor.value();
  const Tensor& H = h.value();
  Tensor::require_same_shape(A, H, "bilinear_slices");
  const std::size_t l = A.rows(), n = A.cols();
  if (T.rank() != 3 || T.shape()[1] != l || T.shape()[2] != l) {
    throw DimensionError("bilinear_slices: tensor " + shape_str(T.shape()) +
                         " does not match vectors of length " + std::to_string(l));
  }
  const std::size_t slices = T.shape()[0];
  Tensor out({slices, n});
  for (std::size_t s = 0; s < slices; ++s)
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      for (std::size_t p = 0; p < l; ++p) {
        double th = 0.0;
        for (std::size_t q = 0; q < l; ++q) th += T.at(s, p, q) * H.at(q, j);
        v += A.at(p, j) * th;
      }
      out.at(s, j) = v;
    }
  return a.tape->record(
      std::move(out), {a, tensor, h},
      [a, tensor, h, slices, l, n](Tape& tp, const Tensor&, const Tensor& g) {
        const Tensor& A = tp.value(a);
        const Tensor& T = tp.value(tensor);
        const Tensor& H = tp.value(h);
        Tensor ga(A.shape()), gT(T.shape()), gh(H.shape());
        for (std::size_t s = 0; s < slices; ++s)
          for (std::size_t j = 0; j < n; ++j) {
            const double gs = g.at(s, j);
            if (gs == 0.0) continue;
            for (std::size_t p = 0; p < l; ++p)
              for (std::size_t q = 0; q < l; ++q) {
                const double tv = T.at(s, p, q);
                ga.at(p, j) += gs * tv * H.at(q, j);
                gh.at(q, j) += gs * A.at(p, j) * tv;
                gT.at(s, p, q) += gs * A.at(p, j) * H.at(q, j);
              }
          }
        tp.accumulate(a, ga);
        tp.accumulate(tensor, gT);
        tp.accumulate(h, gh);
      });
}

inline constexpr double kCosineNormFloor = 1e-12;

// Two rows per column pair: Euclidean distance ‖a_j − h_j‖ and cosine
// similarity. Cosine is 0 when either norm is below kCosineNormFloor; the
// distance gradient is 0 where a_j == h_j.
inline Var distance_cosine_columns(Var a, Var h) {
  const Tensor& A = a.value();
  const Tensor& H = h.value();
  Tensor::require_same_shape(A, H, "distance_cosine_columns");
  const std::size_t l = A.rows(), n = A.cols();
  Tensor out({2, n});
  for (std::size_t j = 0; j < n; ++j) {
    double dd = 0.0, dot = 0.0, na = 0.0, nh = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
      const double x = A.at(i, j), y = H.at(i, j);
      dd += (x - y) * (x - y);
      dot += x * y;
      na += x * x;
      nh += y * y;
    }
    na = std::sqrt(na);
    nh = std::sqrt(nh);
    out.at(0, j) = std::sqrt(dd);
    out.at(1, j) = (na < kCosineNormFloor || nh < kCosineNormFloor) ? 0.0 : dot / (na * nh);
  }
  return a.tape->record(std::move(out), {a, h}, [a, h, l, n](Tape& tp, const Tensor& y, const Tensor& g) {
    const Tensor& A = tp.value(a);
    const Tensor& H = tp.value(h);
    Tensor ga(A.shape()), gh(H.shape());
    for (std::size_t j = 0; j < n; ++j) {
      const double dist = y.at(0, j), cosv = y.at(1, j);
      double na = 0.0, nh = 0.0;
      for (std::size_t i = 0; i < l; ++i) {
        na += A.at(i, j) * A.at(i, j);
        nh += H.at(i, j) * H.at(i, j);
      }
      na = std::sqrt(na);
      nh = std::sqrt(nh);
      const bool cos_defined = na >= kCosineNormFloor && nh >= kCosineNormFloor;
      for (std::size_t i = 0; i < l; ++i) {
        const double x = A.at(i, j), z = H.at(i, j);
        double dx = 0.0, dz = 0.0;
        if (dist > 0.0) {
          dx += g.at(0, j) * (x - z) / dist;
          dz -= g.at(0, j) * (x - z) / dist;
        }
        if (cos_defined) {
          dx += g.at(1, j) * (z / (na * nh) - cosv * x / (na * na));
          dz += g.at(1, j) * (x / (na * nh) - cosv * z / (nh * nh));
        }
        ga.at(i, j) = dx;
        gh.at(i, j) = dz;
      }
    }
    tp.accumulate(a, ga);
    tp.accumulate(h, gh);
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

inline constexpr double kProbabilityFloor = 1e-12;

// −log(Σ_{k ∈ gold} p_k + floor). With a single gold index this is the usual
// cross-entropy of a softmax output.
inline Var neg_log_likelihood(Var probs, std::span<const std::size_t> gold) {
  const Tensor& P = probs.value();
  if (gold.empty()) throw InputError("neg_log_likelihood: empty gold set");
  double mass = 0.0;
  for (std::size_t k : gold) {
    if (k >= P.size()) {
      throw InputError("gold index " + std::to_string(k) + " out of range for " +
                       std::to_string(P.size()) + " outputs");
    }
    mass += P[k];
  }
  const double denom = mass + kProbabilityFloor;
  std::vector<std::size_t> golds(gold.begin(), gold.end());
  return probs.tape->record(Tensor::scalar(-std::log(denom)), {probs},
                            [probs, golds, denom](Tape& t, const Tensor&, const Tensor& g) {
                              Tensor gp(t.value(probs).shape());
                              for (std::size_t k : golds) gp[k] += -g[0] / denom;
                              t.accumulate(probs, gp);
                            });
}

inline Var cross_entropy(Var probs, std::size_t gold) {
  return neg_log_likelihood(probs, std::span<const std::size_t>(&gold, 1));
}

}  // namespace seqmatch
