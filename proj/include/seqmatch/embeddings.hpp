#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqmatch/errors.hpp"
#include "seqmatch/tensor.hpp"

namespace seqmatch {

// Whitespace split + lowercase. Datasets that ship pre-tokenized lists skip
// this entirely.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Token <-> index map. Index 0 is padding and index 1 stands in for every
// token not seen when the vocabulary was built; both embed to zero.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() : tokens_{kPadToken, kUnkToken} {
    index_.emplace(kPadToken, kPad);
    index_.emplace(kUnkToken, kUnk);
  }

  std::size_t add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  std::size_t index(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(std::size_t i) const {
    if (i >= tokens_.size()) throw LookupError("vocabulary index " + std::to_string(i) + " out of range");
    return tokens_[i];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(std::span<const std::string> words) const {
    std::vector<std::size_t> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(index(w));
    return ids;
  }

  // Rebuilds a vocabulary from its token list (as stored in checkpoints).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 2 || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken) {
      throw FormatError("vocabulary must start with <pad>, <unk>");
    }
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      if (v.add(tokens[i]) != i) throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Word vectors stored column-wise, d x |V|. Always frozen.
struct EmbeddingTable {
  Tensor matrix;

  std::size_t dim() const { return matrix.rows(); }
  std::size_t vocab_size() const { return matrix.rank() == 2 ? matrix.cols() : 0; }
  static constexpr bool frozen = true;
};

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

// Reads `token v1 v2 ... vd` lines. Tokens present in the vocabulary get their
// vector; everything else (including padding) stays zero.
inline EmbeddingTable load_pretrained(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file '" + path + "'");
  if (vocab.size() == 0) throw ContractError("load_pretrained: empty vocabulary");

  std::size_t dim = 0;
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  std::vector<bool> seen(vocab.size(), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> vec;
    std::string field;
    while (ls >> field) {
      double v;
      if (!detail::parse_double(field, v)) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
      }
      vec.push_back(v);
    }
    if (dim == 0) {
      if (vec.empty()) throw FormatError(path + ":" + std::to_string(line_no) + ": no vector values");
      dim = vec.size();
    } else if (vec.size() != dim) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " values, found " + std::to_string(vec.size()));
    }
    if (!vocab.contains(token)) continue;
    const std::size_t id = vocab.index(token);
    if (id == Vocabulary::kPad || id == Vocabulary::kUnk || seen[id]) continue;
    seen[id] = true;
    rows.emplace_back(id, std::move(vec));
  }
  if (in.bad()) throw IoError("error reading embedding file '" + path + "'");
  if (dim == 0) throw FormatError(path + ": no embedding vectors found");

  EmbeddingTable table{Tensor({dim, vocab.size()})};
  for (const auto& [id, vec] : rows)
    for (std::size_t i = 0; i < dim; ++i) table.matrix.at(i, id) = vec[i];
  return table;
}

// Seeded N(0, 1) vectors for every real token; padding and unknown stay zero.
inline EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  EmbeddingTable table{Tensor({dim, vocab.size()})};
  for (std::size_t j = 2; j < vocab.size(); ++j)
    for (std::size_t i = 0; i < dim; ++i) table.matrix.at(i, j) = dist(rng);
  return table;
}

inline Tensor lookup(const EmbeddingTable& table, std::span<const std::size_t> tokens) {
  const std::size_t d = table.dim(), v = table.vocab_size();
  Tensor out({d, tokens.size()});
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    if (tokens[j] >= v) {
      throw LookupError("token index " + std::to_string(tokens[j]) + " at position " +
                        std::to_string(j) + " out of range for vocabulary of " + std::to_string(v));
    }
    for (std::size_t i = 0; i < d; ++i) out.at(i, j) = table.matrix.at(i, tokens[j]);
  }
  return out;
}

// Inverted dropout: survivors are scaled by 1/(1-rate) during training so
// evaluation is the identity.
template <typename Rng>
Tensor embedding_dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Tensor out = x;
  for (double& v : out.values()) v = keep(rng) ? v * s : 0.0;
  return out;
}

}  // namespace seqmatch
