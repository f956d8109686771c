#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "relret/error.hpp"

namespace relret {

/// Pretrained word vectors, one fixed-width row per word.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ValidationError("embedding dimension must be positive");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }

  void add(const std::string& word, std::vector<double> vec) {
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_)
      throw ValidationError("embedding for '" + word + "' has dimension " +
                            std::to_string(vec.size()) + ", expected " +
                            std::to_string(dim_));
    for (double v : vec)
      if (!std::isfinite(v))
        throw ValidationError("embedding for '" + word + "' has a non-finite value");
    if (!index_.emplace(word, words_.size()).second)
      throw ValidationError("duplicate embedding for '" + word + "'");
    words_.push_back(word);
    data_.insert(data_.end(), vec.begin(), vec.end());
  }

  bool contains(const std::string& word) const { return index_.count(word) > 0; }

  const double* vector(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end())
      throw ValidationError("no embedding for word '" + word + "'");
    return data_.data() + it->second * dim_;
  }

  const std::vector<std::string>& words() const { return words_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text format: one `word v1 .. vdim` line per word, single spaces, no header.
inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word))
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": missing word");
    std::vector<double> vec;
    double v;
    while (ls >> v) vec.push_back(v);
    if (!ls.eof())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": non-numeric vector component");
    if (vec.empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": no vector components");
    if (table.dim() != 0 && vec.size() != table.dim())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": dimension " + std::to_string(vec.size()) +
                       " disagrees with earlier lines (" +
                       std::to_string(table.dim()) + ")");
    try {
      table.add(word, std::move(vec));
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  if (table.size() == 0)
    throw ParseError("embedding file " + path.string() + " is empty");
  return table;
}

inline void save_embeddings(const EmbeddingTable& table,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embedding file " + path.string());
  out.precision(17);
  for (const auto& word : table.words()) {
    out << word;
    const double* v = table.vector(word);
    for (std::size_t i = 0; i < table.dim(); ++i) out << ' ' << v[i];
    out << '\n';
  }
}

inline double cosine_similarity(const double* a, const double* b,
                                std::size_t dim) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine_similarity(const EmbeddingTable& table,
                                const std::string& a, const std::string& b) {
  return cosine_similarity(table.vector(a), table.vector(b), table.dim());
}

/// Indices (into `words`) of the k nearest neighbours of words[query] by
/// cosine similarity, the query itself excluded.  Order: similarity
/// descending, then word index ascending, so ties resolve the same way on
/// every run; the top-j prefix of knn(k) equals knn(j) for j <= k.
inline std::vector<std::size_t> knn_indices(const EmbeddingTable& table,
                                            const std::vector<std::string>& words,
                                            std::size_t query, std::size_t k) {
  if (query >= words.size())
    throw ValidationError("knn_indices: query index out of range");
  const double* q = table.vector(words[query]);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(words.size() - 1);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i == query) continue;
    scored.emplace_back(
        cosine_similarity(q, table.vector(words[i]), table.dim()), i);
  }
  const std::size_t take = std::min(k, scored.size());
  auto cmp = [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), cmp);
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace relret
