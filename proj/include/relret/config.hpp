#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "relret/adam.hpp"
#include "relret/corpus.hpp"
#include "relret/error.hpp"
#include "relret/model.hpp"
#include "relret/trainer.hpp"

namespace relret {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v +
                      "' is not a nonnegative integer");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v +
                      "' is not an unsigned integer");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v +
                    "' is not a boolean (true/false/1/0)");
}

}  // namespace detail

/// Everything a full pipeline run needs, as one flat key=value config.
/// Defaults reproduce the reference setup; any key can be overridden by file
/// or command line.
struct ProjectConfig {
  // inputs
  std::string corpus_path;
  std::string corpus_format = "jsonl";
  std::string embedding_path;
  std::string triple_path;
  std::string visual_path;
  std::string noun_lexicon_path;  // empty: alphabetic df-threshold fallback
  std::string stopword_path;      // empty: no stopword filtering
  std::string node_feature_path;  // empty: word-count node features

  // graph construction
  std::size_t knn_k = 8;
  std::size_t cooccur_epsilon = 5;
  std::size_t min_df = 2;

  // architecture
  std::size_t gcn_hidden = 32;
  std::size_t gcn_out = 16;
  std::size_t semantic_dim = 1024;
  std::string pool = "mean";
  double dropout = 0.2;
  bool image_dropout = true;
  std::string loss = "bce";
  double margin = 0.5;

  // optimization
  double learning_rate = 0.001;
  double weight_decay = 0.005;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t eval_every = 5;

  // pairs, splits, evaluation
  std::size_t n_pos = 40000;
  std::size_t n_neg = 40000;
  std::string alignment = "same_category";
  double train_frac = 0.8;
  double val_frac = 0.1;
  std::size_t map_k = 100;

  std::uint64_t seed = 42;

  void set(const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_size;
    using detail::parse_u64;
    if (key == "corpus_path") corpus_path = value;
    else if (key == "corpus_format") corpus_format = value;
    else if (key == "embedding_path") embedding_path = value;
    else if (key == "triple_path") triple_path = value;
    else if (key == "visual_path") visual_path = value;
    else if (key == "noun_lexicon_path") noun_lexicon_path = value;
    else if (key == "stopword_path") stopword_path = value;
    else if (key == "node_feature_path") node_feature_path = value;
    else if (key == "knn_k") knn_k = parse_size(key, value);
    else if (key == "cooccur_epsilon") cooccur_epsilon = parse_size(key, value);
    else if (key == "min_df") min_df = parse_size(key, value);
    else if (key == "gcn_hidden") gcn_hidden = parse_size(key, value);
    else if (key == "gcn_out") gcn_out = parse_size(key, value);
    else if (key == "semantic_dim") semantic_dim = parse_size(key, value);
    else if (key == "pool") pool = value;
    else if (key == "dropout") dropout = parse_double(key, value);
    else if (key == "image_dropout") image_dropout = parse_bool(key, value);
    else if (key == "loss") loss = value;
    else if (key == "margin") margin = parse_double(key, value);
    else if (key == "learning_rate") learning_rate = parse_double(key, value);
    else if (key == "weight_decay") weight_decay = parse_double(key, value);
    else if (key == "adam_beta1") adam_beta1 = parse_double(key, value);
    else if (key == "adam_beta2") adam_beta2 = parse_double(key, value);
    else if (key == "adam_eps") adam_eps = parse_double(key, value);
    else if (key == "epochs") epochs = parse_size(key, value);
    else if (key == "batch_size") batch_size = parse_size(key, value);
    else if (key == "eval_every") eval_every = parse_size(key, value);
    else if (key == "n_pos") n_pos = parse_size(key, value);
    else if (key == "n_neg") n_neg = parse_size(key, value);
    else if (key == "alignment") alignment = value;
    else if (key == "train_frac") train_frac = parse_double(key, value);
    else if (key == "val_frac") val_frac = parse_double(key, value);
    else if (key == "map_k") map_k = parse_size(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }

  /// Canonical key=value listing; parsing the dump reproduces the config.
  std::string dump() const {
    std::ostringstream out;
    out.precision(17);
    out << "corpus_path=" << corpus_path << '\n'
        << "corpus_format=" << corpus_format << '\n'
        << "embedding_path=" << embedding_path << '\n'
        << "triple_path=" << triple_path << '\n'
        << "visual_path=" << visual_path << '\n'
        << "noun_lexicon_path=" << noun_lexicon_path << '\n'
        << "stopword_path=" << stopword_path << '\n'
        << "node_feature_path=" << node_feature_path << '\n'
        << "knn_k=" << knn_k << '\n'
        << "cooccur_epsilon=" << cooccur_epsilon << '\n'
        << "min_df=" << min_df << '\n'
        << "gcn_hidden=" << gcn_hidden << '\n'
        << "gcn_out=" << gcn_out << '\n'
        << "semantic_dim=" << semantic_dim << '\n'
        << "pool=" << pool << '\n'
        << "dropout=" << dropout << '\n'
        << "image_dropout=" << (image_dropout ? "true" : "false") << '\n'
        << "loss=" << loss << '\n'
        << "margin=" << margin << '\n'
        << "learning_rate=" << learning_rate << '\n'
        << "weight_decay=" << weight_decay << '\n'
        << "adam_beta1=" << adam_beta1 << '\n'
        << "adam_beta2=" << adam_beta2 << '\n'
        << "adam_eps=" << adam_eps << '\n'
        << "epochs=" << epochs << '\n'
        << "batch_size=" << batch_size << '\n'
        << "eval_every=" << eval_every << '\n'
        << "n_pos=" << n_pos << '\n'
        << "n_neg=" << n_neg << '\n'
        << "alignment=" << alignment << '\n'
        << "train_frac=" << train_frac << '\n'
        << "val_frac=" << val_frac << '\n'
        << "map_k=" << map_k << '\n'
        << "seed=" << seed << '\n';
    return out.str();
  }

  /// Checks cross-field constraints that set() cannot see in isolation.
  void validate() const {
    parse_corpus_format(corpus_format);
    parse_pool(pool);
    parse_loss(loss);
    parse_alignment(alignment);
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw ConfigError("config: dropout must lie in [0, 1)");
    if (!(margin > 0.0 && margin < 1.0))
      throw ConfigError("config: margin must lie in (0, 1)");
    if (learning_rate <= 0) throw ConfigError("config: learning_rate must be positive");
    if (weight_decay < 0) throw ConfigError("config: weight_decay must be nonnegative");
    if (knn_k == 0) throw ConfigError("config: knn_k must be positive");
    if (cooccur_epsilon == 0)
      throw ConfigError("config: cooccur_epsilon must be positive");
    if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
    if (map_k == 0) throw ConfigError("config: map_k must be positive");
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
      throw ConfigError("config: train_frac/val_frac must be nonnegative and sum to <= 1");
  }

  ModelConfig model_config(std::size_t vocab_size, std::size_t in_channels,
                           std::size_t visual_dim) const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.in_channels = in_channels;
    m.gcn_hidden = gcn_hidden;
    m.gcn_out = gcn_out;
    m.semantic_dim = semantic_dim;
    m.visual_dim = visual_dim;
    m.pool = parse_pool(pool);
    m.dropout = dropout;
    m.image_dropout = image_dropout;
    m.loss = parse_loss(loss);
    m.margin = margin;
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.eval_every = eval_every;
    t.map_k = map_k;
    t.adam.lr = learning_rate;
    t.adam.weight_decay = weight_decay;
    t.adam.beta1 = adam_beta1;
    t.adam.beta2 = adam_beta2;
    t.adam.eps = adam_eps;
    t.seed = seed;
    return t;
  }
};

/// `key=value` lines; '#' starts a comment, blank lines are skipped.
inline ProjectConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  ProjectConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected key=value");
    try {
      cfg.set(detail::trim(trimmed.substr(0, eq)),
              detail::trim(trimmed.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return cfg;
}

}  // namespace relret
