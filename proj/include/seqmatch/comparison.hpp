#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "seqmatch/autodiff.hpp"

namespace seqmatch {

enum class ComparisonKind { kNN, kNTN, kEucCos, kSub, kMult, kSubMultNN };

inline constexpr std::array<ComparisonKind, 6> kAllComparisonKinds = {
    ComparisonKind::kNN,  ComparisonKind::kNTN,  ComparisonKind::kEucCos,
    ComparisonKind::kSub, ComparisonKind::kMult, ComparisonKind::kSubMultNN};

inline std::string_view to_string(ComparisonKind kind) {
  switch (kind) {
    case ComparisonKind::kNN: return "nn";
    case ComparisonKind::kNTN: return "ntn";
    case ComparisonKind::kEucCos: return "euccos";
    case ComparisonKind::kSub: return "sub";
    case ComparisonKind::kMult: return "mult";
    case ComparisonKind::kSubMultNN: return "submult-nn";
  }
  return "?";
}

inline ComparisonKind parse_comparison_kind(std::string_view name) {
  for (ComparisonKind k : kAllComparisonKinds)
    if (to_string(k) == name) return k;
  throw ConfigError("unknown comparison kind '" + std::string(name) +
                    "' (expected nn, ntn, euccos, sub, mult or submult-nn)");
}

// Rows of the comparison output for hidden size l.
inline std::size_t comparison_output_dim(ComparisonKind kind, std::size_t l) {
  return kind == ComparisonKind::kEucCos ? 2 : l;
}

inline bool comparison_has_params(ComparisonKind kind) {
  return kind == ComparisonKind::kNN || kind == ComparisonKind::kNTN ||
         kind == ComparisonKind::kSubMultNN;
}

// NN and SubMult+NN use weight (l x 2l) and bias; NTN uses tensor (l x l x l)
// and bias; the element-wise kinds and EucCos use nothing.
struct ComparisonParams {
  std::optional<Var> weight;
  std::optional<Var> tensor;
  std::optional<Var> bias;
};

inline Var compare(ComparisonKind kind, const ComparisonParams& p, Var target, Var attended) {
  Tensor::require_same_shape(target.value(), attended.value(), "compare");
  const bool has_weight = p.weight.has_value(), has_tensor = p.tensor.has_value(),
             has_bias = p.bias.has_value();
  auto config_error = [kind] {
    return ConfigError("comparison parameters do not match kind '" + std::string(to_string(kind)) + "'");
  };
  switch (kind) {
    case ComparisonKind::kNN: {
      if (!has_weight || has_tensor || !has_bias) throw config_error();
      return relu(add_broadcast(matmul(*p.weight, concat_rows({target, attended})), *p.bias));
    }
    case ComparisonKind::kNTN: {
      if (has_weight || !has_tensor || !has_bias) throw config_error();
      return relu(add_broadcast(bilinear_slices(target, *p.tensor, attended), *p.bias));
    }
    case ComparisonKind::kEucCos: {
      if (has_weight || has_tensor || has_bias) throw config_error();
      return distance_cosine_columns(target, attended);
    }
    case ComparisonKind::kSub: {
      if (has_weight || has_tensor || has_bias) throw config_error();
      Var diff = sub(target, attended);
      return mul(diff, diff);
    }
    case ComparisonKind::kMult: {
      if (has_weight || has_tensor || has_bias) throw config_error();
      return mul(target, attended);
    }
    case ComparisonKind::kSubMultNN: {
      if (!has_weight || has_tensor || !has_bias) throw config_error();
      Var diff = sub(target, attended);
      Var features = concat_rows({mul(diff, diff), mul(target, attended)});
      return relu(add_broadcast(matmul(*p.weight, features), *p.bias));
    }
  }
  throw config_error();
}

}  // namespace seqmatch
