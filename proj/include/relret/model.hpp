#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "relret/dense.hpp"
#include "relret/error.hpp"
#include "relret/kernels.hpp"
#include "relret/rng.hpp"
#include "relret/sparse.hpp"
#include "relret/tape.hpp"

namespace relret {

enum class Pool { mean, sum, flatten };
enum class LossKind { bce, contrastive };

inline Pool parse_pool(const std::string& s) {
  if (s == "mean") return Pool::mean;
  if (s == "sum") return Pool::sum;
  if (s == "flatten") return Pool::flatten;
  throw ConfigError("unknown pooling '" + s + "' (expected mean, sum, or flatten)");
}

inline std::string pool_name(Pool p) {
  switch (p) {
    case Pool::mean: return "mean";
    case Pool::sum: return "sum";
    case Pool::flatten: return "flatten";
  }
  throw ConfigError("invalid pooling value");
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "contrastive") return LossKind::contrastive;
  throw ConfigError("unknown loss '" + s + "' (expected bce or contrastive)");
}

inline std::string loss_name(LossKind l) {
  switch (l) {
    case LossKind::bce: return "bce";
    case LossKind::contrastive: return "contrastive";
  }
  throw ConfigError("invalid loss value");
}

/// Architecture hyperparameters.  The graph (and therefore vocab_size) is
/// shared by all texts; only node features vary per text.
struct ModelConfig {
  std::size_t vocab_size = 0;    // graph nodes
  std::size_t in_channels = 1;   // node feature channels
  std::size_t gcn_hidden = 32;
  std::size_t gcn_out = 16;
  std::size_t semantic_dim = 1024;  // shared space both paths project into
  std::size_t visual_dim = 0;
  Pool pool = Pool::mean;
  double dropout = 0.2;
  bool image_dropout = true;
  LossKind loss = LossKind::bce;
  double margin = 0.5;  // contrastive only

  std::size_t pooled_dim() const {
    return pool == Pool::flatten ? vocab_size * gcn_out : gcn_out;
  }

  void validate() const {
    if (vocab_size == 0) throw ConfigError("model: vocab_size must be positive");
    if (in_channels == 0) throw ConfigError("model: in_channels must be positive");
    if (gcn_hidden == 0) throw ConfigError("model: gcn_hidden must be positive");
    if (gcn_out == 0) throw ConfigError("model: gcn_out must be positive");
    if (semantic_dim == 0) throw ConfigError("model: semantic_dim must be positive");
    if (visual_dim == 0) throw ConfigError("model: visual_dim must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw ConfigError("model: dropout must lie in [0, 1)");
    if (!(margin > 0.0 && margin < 1.0))
      throw ConfigError("model: margin must lie in (0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// All trainable tensors.  visit() enumerates them in a fixed order with a
/// stable name and an is_weight flag (weight decay applies to weights only).
struct ModelParams {
  DenseMatrix gcn_w0, gcn_w1;      // graph conv layers
  DenseMatrix text_w, text_b;      // text projection into the shared space
  DenseMatrix img_w, img_b;        // image projection into the shared space
  DenseMatrix sim_w, sim_b;        // similarity head

  template <typename F>
  void visit(F&& f) {
    f("gcn_w0", gcn_w0, true);
    f("gcn_w1", gcn_w1, true);
    f("text_w", text_w, true);
    f("text_b", text_b, false);
    f("img_w", img_w, true);
    f("img_b", img_b, false);
    f("sim_w", sim_w, true);
    f("sim_b", sim_b, false);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams&>(*this).visit(
        [&f](const char* name, const DenseMatrix& m, bool is_weight) {
          f(name, m, is_weight);
        });
  }
};

namespace detail {

inline DenseMatrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i)
    m[i] = rng.uniform(-bound, bound);
  return m;
}

}  // namespace detail

/// Glorot-uniform weights, zero biases; deterministic in the seed.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  p.gcn_w0 = detail::glorot_uniform(cfg.in_channels, cfg.gcn_hidden, rng);
  p.gcn_w1 = detail::glorot_uniform(cfg.gcn_hidden, cfg.gcn_out, rng);
  p.text_w = detail::glorot_uniform(cfg.pooled_dim(), cfg.semantic_dim, rng);
  p.text_b = DenseMatrix(1, cfg.semantic_dim);
  p.img_w = detail::glorot_uniform(cfg.visual_dim, cfg.semantic_dim, rng);
  p.img_b = DenseMatrix(1, cfg.semantic_dim);
  p.sim_w = detail::glorot_uniform(cfg.semantic_dim, 1, rng);
  p.sim_b = DenseMatrix(1, 1);
  return p;
}

/// Tape ids of every parameter, so one forward/backward pass can read grads
/// back out per tensor.
struct TapeParams {
  Tape::Id gcn_w0, gcn_w1, text_w, text_b, img_w, img_b, sim_w, sim_b;
};

inline TapeParams attach_params(Tape& tape, const ModelParams& p) {
  TapeParams t;
  t.gcn_w0 = tape.input(p.gcn_w0);
  t.gcn_w1 = tape.input(p.gcn_w1);
  t.text_w = tape.input(p.text_w);
  t.text_b = tape.input(p.text_b);
  t.img_w = tape.input(p.img_w);
  t.img_b = tape.input(p.img_b);
  t.sim_w = tape.input(p.sim_w);
  t.sim_b = tape.input(p.sim_b);
  return t;
}

/// Text path: two graph convolutions over the shared propagation operator,
/// pooling over nodes, dropout, and a projection.  Returns a 1 x semantic_dim
/// row.  `prop` must outlive the tape.
inline Tape::Id text_forward(Tape& tape, const TapeParams& tp,
                             const ModelConfig& cfg, const SparseMatrix& prop,
                             const DenseMatrix& node_features, bool train,
                             Rng& rng) {
  if (node_features.rows() != cfg.vocab_size ||
      node_features.cols() != cfg.in_channels)
    throw ValidationError(
        "text_forward: node features are " + std::to_string(node_features.rows()) +
        "x" + std::to_string(node_features.cols()) + ", expected " +
        std::to_string(cfg.vocab_size) + "x" + std::to_string(cfg.in_channels));
  const Tape::Id x = tape.input(node_features);
  const Tape::Id h1 = tape.relu(tape.spmm(prop, tape.matmul(x, tp.gcn_w0)));
  const Tape::Id h2 = tape.relu(tape.spmm(prop, tape.matmul(h1, tp.gcn_w1)));
  Tape::Id pooled;
  switch (cfg.pool) {
    case Pool::mean: pooled = tape.mean_rows(h2); break;
    case Pool::sum: pooled = tape.sum_rows(h2); break;
    case Pool::flatten: pooled = tape.flatten(h2); break;
    default: throw ConfigError("invalid pooling value");
  }
  const Tape::Id dropped = tape.dropout(pooled, cfg.dropout, train, rng);
  return tape.add(tape.matmul(dropped, tp.text_w), tp.text_b);
}

/// Image path: dropout (optional) and a projection of the precomputed visual
/// feature row.  Returns a 1 x semantic_dim row.
inline Tape::Id image_forward(Tape& tape, const TapeParams& tp,
                              const ModelConfig& cfg,
                              const DenseMatrix& visual_features, bool train,
                              Rng& rng) {
  if (visual_features.rows() != 1 || visual_features.cols() != cfg.visual_dim)
    throw ValidationError("image_forward: visual features are " +
                          std::to_string(visual_features.rows()) + "x" +
                          std::to_string(visual_features.cols()) + ", expected 1x" +
                          std::to_string(cfg.visual_dim));
  Tape::Id v = tape.input(visual_features);
  if (cfg.image_dropout) v = tape.dropout(v, cfg.dropout, train, rng);
  return tape.add(tape.matmul(v, tp.img_w), tp.img_b);
}

/// sigmoid(w . (t ⊙ v) + b), a scalar in (0, 1).
inline Tape::Id similarity(Tape& tape, const TapeParams& tp, Tape::Id text_vec,
                           Tape::Id image_vec) {
  const Tape::Id joint = tape.hadamard(text_vec, image_vec);
  return tape.sigmoid(tape.add(tape.matmul(joint, tp.sim_w), tp.sim_b));
}

inline constexpr double kLogClamp = 1e-12;

/// Loss of one predicted similarity against a binary label.
inline Tape::Id pair_loss(Tape& tape, Tape::Id score, int label,
                          const ModelConfig& cfg) {
  if (label != 0 && label != 1)
    throw ValidationError("pair_loss: label must be 0 or 1");
  if (cfg.loss == LossKind::bce) {
    if (label == 1)
      return tape.map_unary(
          score, [](double s) { return -std::log(std::max(s, kLogClamp)); },
          [](double s, double) { return s > kLogClamp ? -1.0 / s : 0.0; });
    return tape.map_unary(
        score, [](double s) { return -std::log(std::max(1.0 - s, kLogClamp)); },
        [](double s, double) {
          return 1.0 - s > kLogClamp ? 1.0 / (1.0 - s) : 0.0;
        });
  }
  const double m = cfg.margin;
  if (label == 1)
    return tape.map_unary(
        score, [](double s) { return (1.0 - s) * (1.0 - s); },
        [](double s, double) { return -2.0 * (1.0 - s); });
  return tape.map_unary(
      score,
      [m](double s) {
        const double d = std::max(0.0, s - m);
        return d * d;
      },
      [m](double s, double) { return s > m ? 2.0 * (s - m) : 0.0; });
}

/// Deterministic single-sample inference (dropout off); the same graph the
/// trainer differentiates, evaluated without a backward pass.
inline DenseMatrix text_embed(const ModelParams& p, const ModelConfig& cfg,
                              const SparseMatrix& prop,
                              const DenseMatrix& node_features) {
  Tape tape;
  const TapeParams tp = attach_params(tape, p);
  Rng rng(0);
  return tape.value(text_forward(tape, tp, cfg, prop, node_features, false, rng));
}

inline DenseMatrix image_embed(const ModelParams& p, const ModelConfig& cfg,
                               const DenseMatrix& visual_features) {
  Tape tape;
  const TapeParams tp = attach_params(tape, p);
  Rng rng(0);
  return tape.value(image_forward(tape, tp, cfg, visual_features, false, rng));
}

/// Similarity of two already-projected semantic rows.
inline double score_pair(const ModelParams& p, const DenseMatrix& text_vec,
                         const DenseMatrix& image_vec) {
  if (!text_vec.same_shape(image_vec) || text_vec.rows() != 1)
    throw ValidationError("score_pair: semantic vectors must both be rows of equal width");
  double logit = p.sim_b(0, 0);
  for (std::size_t i = 0; i < text_vec.cols(); ++i)
    logit += text_vec(0, i) * image_vec(0, i) * p.sim_w(i, 0);
  return sigmoid(logit);
}

/// Precomputed image descriptors keyed by image id.
class VisualFeatureStore {
 public:
  VisualFeatureStore() = default;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }

  void add(const std::string& image_id, DenseMatrix row) {
    if (row.rows() != 1)
      throw ValidationError("visual features for '" + image_id +
                            "' must be a single row");
    if (dim_ == 0) dim_ = row.cols();
    if (row.cols() != dim_)
      throw ValidationError("visual features for '" + image_id +
                            "' have dimension " + std::to_string(row.cols()) +
                            ", expected " + std::to_string(dim_));
    if (!row.all_finite())
      throw ValidationError("visual features for '" + image_id +
                            "' contain a non-finite value");
    if (!rows_.emplace(image_id, std::move(row)).second)
      throw ValidationError("duplicate visual features for '" + image_id + "'");
    order_.push_back(image_id);
  }

  bool contains(const std::string& image_id) const {
    return rows_.count(image_id) > 0;
  }

  const DenseMatrix& features(const std::string& image_id) const {
    auto it = rows_.find(image_id);
    if (it == rows_.end())
      throw ValidationError("no visual features for image '" + image_id + "'");
    return it->second;
  }

  const std::vector<std::string>& image_ids() const { return order_; }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, DenseMatrix> rows_;
  std::vector<std::string> order_;
};

/// Text format: `<count> <dim>` header, then `image_id v1 .. vdim` per line.
inline VisualFeatureStore load_visual_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open visual feature file " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path.string() + ": missing header line");
  std::size_t count = 0, dim = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> count >> dim) || dim == 0)
      throw ParseError(path.string() + ": bad header, expected '<count> <dim>'");
  }
  VisualFeatureStore store;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id))
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": missing image id");
    DenseMatrix row(1, dim);
    for (std::size_t i = 0; i < dim; ++i)
      if (!(ls >> row(0, i)))
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected " + std::to_string(dim) + " values");
    double extra;
    if (ls >> extra)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": more than " + std::to_string(dim) + " values");
    try {
      store.add(id, std::move(row));
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  if (store.size() != count)
    throw ParseError(path.string() + ": header promises " + std::to_string(count) +
                     " rows, file contains " + std::to_string(store.size()));
  return store;
}

inline void save_visual_features(const VisualFeatureStore& store,
                                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write visual feature file " + path.string());
  out << store.size() << ' ' << store.dim() << '\n';
  out.precision(17);
  for (const auto& id : store.image_ids()) {
    out << id;
    const DenseMatrix& row = store.features(id);
    for (std::size_t i = 0; i < store.dim(); ++i) out << ' ' << row(0, i);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: binary, raw little-endian doubles, bitwise round-trip.

inline constexpr char kCheckpointMagic[8] = {'R', 'R', 'E', 'T',
                                             'C', 'K', 'P', '1'};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t graph_hash = 0;
};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(buf, 8);
}

inline std::uint64_t read_u64(std::istream& in, const std::string& what) {
  char buf[8];
  if (!in.read(buf, 8)) throw ParseError("checkpoint truncated reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

inline double read_f64(std::istream& in, const std::string& what) {
  const std::uint64_t bits = read_u64(in, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_matrix(std::ostream& out, const DenseMatrix& m) {
  write_u64(out, m.rows());
  write_u64(out, m.cols());
  for (std::size_t i = 0; i < m.rows() * m.cols(); ++i) write_f64(out, m[i]);
}

inline DenseMatrix read_matrix(std::istream& in, const std::string& name) {
  const std::size_t rows = read_u64(in, name + " rows");
  const std::size_t cols = read_u64(in, name + " cols");
  if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
    throw ParseError("checkpoint tensor " + name + " has implausible shape");
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i)
    m[i] = read_f64(in, name + " data");
  return m;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint file " + path.string());
  out.write(kCheckpointMagic, 8);
  const ModelConfig& c = ckpt.config;
  detail::write_u64(out, c.vocab_size);
  detail::write_u64(out, c.in_channels);
  detail::write_u64(out, c.gcn_hidden);
  detail::write_u64(out, c.gcn_out);
  detail::write_u64(out, c.semantic_dim);
  detail::write_u64(out, c.visual_dim);
  detail::write_u64(out, static_cast<std::uint64_t>(c.pool));
  detail::write_u64(out, static_cast<std::uint64_t>(c.loss));
  detail::write_u64(out, c.image_dropout ? 1 : 0);
  detail::write_f64(out, c.dropout);
  detail::write_f64(out, c.margin);
  detail::write_u64(out, ckpt.graph_hash);
  std::uint64_t n_tensors = 0;
  ckpt.params.visit([&](const char*, const DenseMatrix&, bool) { ++n_tensors; });
  detail::write_u64(out, n_tensors);
  ckpt.params.visit([&](const char* name, const DenseMatrix& m, bool) {
    const std::string n(name);
    detail::write_u64(out, n.size());
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
    detail::write_matrix(out, m);
  });
  if (!out) throw Error("failed writing checkpoint file " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint file " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ParseError(path.string() + " is not a checkpoint file (bad magic)");
  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  c.vocab_size = detail::read_u64(in, "vocab_size");
  c.in_channels = detail::read_u64(in, "in_channels");
  c.gcn_hidden = detail::read_u64(in, "gcn_hidden");
  c.gcn_out = detail::read_u64(in, "gcn_out");
  c.semantic_dim = detail::read_u64(in, "semantic_dim");
  c.visual_dim = detail::read_u64(in, "visual_dim");
  const std::uint64_t pool = detail::read_u64(in, "pool");
  if (pool > 2) throw ParseError("checkpoint has invalid pooling id");
  c.pool = static_cast<Pool>(pool);
  const std::uint64_t loss = detail::read_u64(in, "loss");
  if (loss > 1) throw ParseError("checkpoint has invalid loss id");
  c.loss = static_cast<LossKind>(loss);
  c.image_dropout = detail::read_u64(in, "image_dropout") != 0;
  c.dropout = detail::read_f64(in, "dropout");
  c.margin = detail::read_f64(in, "margin");
  ckpt.graph_hash = detail::read_u64(in, "graph_hash");
  c.validate();
  const std::uint64_t n_tensors = detail::read_u64(in, "tensor count");
  std::unordered_map<std::string, DenseMatrix> tensors;
  for (std::uint64_t t = 0; t < n_tensors; ++t) {
    const std::uint64_t name_len = detail::read_u64(in, "tensor name length");
    if (name_len == 0 || name_len > 256)
      throw ParseError("checkpoint tensor name has implausible length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw ParseError("checkpoint truncated reading tensor name");
    tensors.emplace(name, detail::read_matrix(in, name));
  }
  ckpt.params.visit([&](const char* name, DenseMatrix& m, bool) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ParseError("checkpoint is missing tensor '" + std::string(name) + "'");
    m = std::move(it->second);
    tensors.erase(it);
  });
  if (!tensors.empty())
    throw ParseError("checkpoint contains unknown tensor '" +
                     tensors.begin()->first + "'");
  // Cross-check tensor shapes against the stored architecture.
  const auto expect = [&](const DenseMatrix& m, std::size_t r, std::size_t cc,
                          const char* name) {
    if (m.rows() != r || m.cols() != cc)
      throw ParseError("checkpoint tensor '" + std::string(name) +
                       "' has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " +
                       std::to_string(r) + "x" + std::to_string(cc));
  };
  expect(ckpt.params.gcn_w0, c.in_channels, c.gcn_hidden, "gcn_w0");
  expect(ckpt.params.gcn_w1, c.gcn_hidden, c.gcn_out, "gcn_w1");
  expect(ckpt.params.text_w, c.pooled_dim(), c.semantic_dim, "text_w");
  expect(ckpt.params.text_b, 1, c.semantic_dim, "text_b");
  expect(ckpt.params.img_w, c.visual_dim, c.semantic_dim, "img_w");
  expect(ckpt.params.img_b, 1, c.semantic_dim, "img_b");
  expect(ckpt.params.sim_w, c.semantic_dim, 1, "sim_w");
  expect(ckpt.params.sim_b, 1, 1, "sim_b");
  return ckpt;
}

}  // namespace relret
