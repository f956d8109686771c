#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "relret/corpus.hpp"
#include "relret/embeddings.hpp"
#include "relret/error.hpp"
#include "relret/sparse.hpp"
#include "relret/triples.hpp"

namespace relret {

/// Edge provenance flags; an edge's mask records every view that produced it.
inline constexpr unsigned kEdgeSemantic = 1u;      // embedding nearest-neighbour
inline constexpr unsigned kEdgeCooccurrence = 2u;  // sentence co-occurrence
inline constexpr unsigned kEdgeKnowledge = 4u;     // knowledge triple
inline constexpr unsigned kEdgeAllViews =
    kEdgeSemantic | kEdgeCooccurrence | kEdgeKnowledge;

/// Human-readable name for a provenance subset. The semantic view is the
/// backbone, so names are built from it: S, SC, SK, SCK + "R".
inline std::string mask_name(unsigned mask) {
  if (!(mask & kEdgeSemantic) || (mask & ~kEdgeAllViews))
    throw ValidationError("mask_name: unsupported view combination " +
                          std::to_string(mask));
  std::string name = "S";
  if (mask & kEdgeCooccurrence) name += "C";
  if (mask & kEdgeKnowledge) name += "K";
  return name + "R";
}

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double density_percent = 0.0;  // 2m / (n(n-1)) * 100
};

/// Undirected word graph over vocabulary ids 0..n-1, no self loops, one
/// provenance mask per edge.  Edges are kept in a sorted map so iteration,
/// serialization, and hashing are all deterministic.
class RelationGraph {
 public:
  RelationGraph() = default;
  explicit RelationGraph(std::size_t n_nodes) : n_(n_nodes) {}

  std::size_t num_nodes() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }

  void add_edge(std::size_t i, std::size_t j, unsigned mask) {
    if (i >= n_ || j >= n_)
      throw ValidationError("add_edge: node index out of range");
    if (i == j) throw ValidationError("add_edge: self loops are not allowed");
    if (mask == 0 || (mask & ~kEdgeAllViews))
      throw ValidationError("add_edge: invalid provenance mask " +
                            std::to_string(mask));
    edges_[normalize(i, j)] |= mask;
  }

  bool has_edge(std::size_t i, std::size_t j) const {
    if (i == j) return false;
    return edges_.count(normalize(i, j)) > 0;
  }

  unsigned edge_mask(std::size_t i, std::size_t j) const {
    auto it = edges_.find(normalize(i, j));
    return it == edges_.end() ? 0u : it->second;
  }

  /// Sorted (i, j, mask) with i < j.
  const std::map<std::pair<std::size_t, std::size_t>, unsigned>& edges() const {
    return edges_;
  }

  std::size_t degree(std::size_t node) const {
    std::size_t d = 0;
    for (const auto& [e, mask] : edges_)
      if (e.first == node || e.second == node) ++d;
    return d;
  }

  GraphStats stats() const {
    GraphStats s;
    s.nodes = n_;
    s.edges = edges_.size();
    s.density_percent =
        n_ < 2 ? 0.0
               : 200.0 * static_cast<double>(edges_.size()) /
                     (static_cast<double>(n_) * static_cast<double>(n_ - 1));
    return s;
  }

  /// New graph keeping only edges whose provenance intersects `keep_mask`;
  /// kept edges keep their full mask.
  RelationGraph filter_by_provenance(unsigned keep_mask) const {
    RelationGraph g(n_);
    for (const auto& [e, mask] : edges_)
      if (mask & keep_mask) g.edges_[e] = mask;
    return g;
  }

  /// Symmetric degree-renormalized propagation operator
  /// D^{-1/2} (A + I) D^{-1/2}, where D is the degree matrix of A + I.
  /// Shared by every text because the graph itself is.
  SparseMatrix propagation_matrix() const {
    if (n_ == 0)
      throw ValidationError("propagation_matrix: graph has no nodes");
    std::vector<double> degree_with_self(n_, 1.0);
    for (const auto& [e, mask] : edges_) {
      degree_with_self[e.first] += 1.0;
      degree_with_self[e.second] += 1.0;
    }
    std::vector<double> inv_sqrt(n_);
    for (std::size_t i = 0; i < n_; ++i)
      inv_sqrt[i] = 1.0 / std::sqrt(degree_with_self[i]);
    std::vector<SparseMatrix::Triplet> trips;
    trips.reserve(2 * edges_.size() + n_);
    for (std::size_t i = 0; i < n_; ++i)
      trips.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
    for (const auto& [e, mask] : edges_) {
      const double w = inv_sqrt[e.first] * inv_sqrt[e.second];
      trips.push_back({e.first, e.second, w});
      trips.push_back({e.second, e.first, w});
    }
    return SparseMatrix::from_triplets(n_, n_, trips);
  }

 private:
  static std::pair<std::size_t, std::size_t> normalize(std::size_t i,
                                                       std::size_t j) {
    return i < j ? std::make_pair(i, j) : std::make_pair(j, i);
  }

  std::size_t n_ = 0;
  std::map<std::pair<std::size_t, std::size_t>, unsigned> edges_;
};

/// Semantic view: connect w_i and w_j when either is among the other's k
/// nearest embedding neighbours by cosine similarity.  Every vocabulary word
/// must have an embedding.
inline RelationGraph build_semantic_graph(const Vocabulary& vocab,
                                          const EmbeddingTable& embeddings,
                                          std::size_t k) {
  if (k == 0) throw ConfigError("build_semantic_graph: k must be positive");
  for (const auto& w : vocab.words)
    if (!embeddings.contains(w))
      throw ValidationError("build_semantic_graph: no embedding for vocabulary word '" +
                            w + "'");
  RelationGraph g(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    for (std::size_t j : knn_indices(embeddings, vocab.words, i, k))
      g.add_edge(i, j, kEdgeSemantic);
  }
  return g;
}

/// Co-occurrence view: connect w_i and w_j when they appear in the same
/// sentence at least `epsilon` times across the whole corpus.  A pair counts
/// at most once per sentence, however often the words repeat inside it.
inline RelationGraph build_cooccurrence_graph(const std::vector<TextSample>& samples,
                                              const Vocabulary& vocab,
                                              std::size_t epsilon) {
  if (epsilon == 0)
    throw ConfigError("build_cooccurrence_graph: epsilon must be positive");
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
  std::set<std::size_t> in_sentence;
  for (const auto& s : samples) {
    for (const auto& [begin, end] : s.sentences) {
      in_sentence.clear();
      for (std::size_t t = begin; t < end; ++t)
        if (auto id = vocab.id_of(s.tokens[t])) in_sentence.insert(*id);
      for (auto it = in_sentence.begin(); it != in_sentence.end(); ++it) {
        auto jt = it;
        for (++jt; jt != in_sentence.end(); ++jt) ++counts[{*it, *jt}];
      }
    }
  }
  RelationGraph g(vocab.size());
  for (const auto& [pair, count] : counts)
    if (count >= epsilon) g.add_edge(pair.first, pair.second, kEdgeCooccurrence);
  return g;
}

/// Knowledge view: connect w_i and w_j when any triple links them, in either
/// direction; relation labels are ignored.
inline RelationGraph build_knowledge_graph(const Vocabulary& vocab,
                                           const TripleStore& triples) {
  RelationGraph g(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i)
    for (std::size_t j = i + 1; j < vocab.size(); ++j)
      if (triples.related(vocab.words[i], vocab.words[j]))
        g.add_edge(i, j, kEdgeKnowledge);
  return g;
}

/// Union of edge sets; a shared edge ORs its provenance masks together.
inline RelationGraph integrate(const std::vector<const RelationGraph*>& views) {
  if (views.empty()) throw ValidationError("integrate: no graphs given");
  const std::size_t n = views.front()->num_nodes();
  for (const RelationGraph* v : views)
    if (v->num_nodes() != n)
      throw ValidationError("integrate: graphs have different node counts");
  RelationGraph g(n);
  for (const RelationGraph* v : views)
    for (const auto& [e, mask] : v->edges()) g.add_edge(e.first, e.second, mask);
  return g;
}

/// Plain text, exact round-trip: `n m` header then one `i j mask` line per
/// edge in sorted order.
inline void save_graph(const RelationGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write graph file " + path.string());
  out << g.num_nodes() << ' ' << g.num_edges() << '\n';
  for (const auto& [e, mask] : g.edges())
    out << e.first << ' ' << e.second << ' ' << mask << '\n';
}

inline RelationGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path.string() + ": missing header line");
  std::size_t n = 0, m = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> n >> m))
      throw ParseError(path.string() + ": bad header, expected '<nodes> <edges>'");
  }
  RelationGraph g(n);
  std::size_t read = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t i, j;
    unsigned mask;
    if (!(ls >> i >> j >> mask))
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected '<i> <j> <mask>'");
    try {
      g.add_edge(i, j, mask);
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
    ++read;
  }
  if (read != m || g.num_edges() != m)
    throw ParseError(path.string() + ": header promises " + std::to_string(m) +
                     " edges, file contains " + std::to_string(read));
  return g;
}

/// FNV-1a over the canonical edge list; stable across runs and platforms,
/// used to pin a trained model to the graph it was trained on.
inline std::uint64_t graph_hash(const RelationGraph& g) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::uint64_t value) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (value >> (8 * byte)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(g.num_nodes());
  mix(g.num_edges());
  for (const auto& [e, mask] : g.edges()) {
    mix(e.first);
    mix(e.second);
    mix(mask);
  }
  return h;
}

}  // namespace relret
