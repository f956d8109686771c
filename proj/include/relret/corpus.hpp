#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "relret/dense.hpp"
#include "relret/error.hpp"
#include "relret/rng.hpp"

namespace relret {

/// One text of the paired dataset. Sentences are [begin, end) index ranges
/// into `tokens` and partition it.
struct TextSample {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::pair<std::size_t, std::size_t>> sentences;
  int category = 0;
  std::string image_id;
};

enum class CorpusFormat { jsonl, tsv };

inline CorpusFormat parse_corpus_format(const std::string& s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "tsv") return CorpusFormat::tsv;
  throw ConfigError("unknown corpus format '" + s + "' (expected jsonl or tsv)");
}

namespace detail {

inline bool is_ascii_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9');
}

inline bool is_sentence_terminal(char c) {
  return c == '.' || c == '!' || c == '?';
}

}  // namespace detail

/// Lowercases, strips punctuation (any non-alphanumeric ASCII byte acts as a
/// token separator; bytes >= 0x80 are kept verbatim) and splits sentences on
/// '.', '!', '?'.  Deterministic: same bytes in, same tokens out.
inline void tokenize(const std::string& text, std::vector<std::string>& tokens,
                     std::vector<std::pair<std::size_t, std::size_t>>& sentences) {
  tokens.clear();
  sentences.clear();
  std::string current;
  std::size_t sentence_begin = 0;
  auto flush_token = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  auto flush_sentence = [&] {
    if (tokens.size() > sentence_begin) {
      sentences.emplace_back(sentence_begin, tokens.size());
      sentence_begin = tokens.size();
    }
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (detail::is_ascii_alnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (c >= 0x80) {
      current.push_back(ch);
    } else {
      flush_token();
      if (detail::is_sentence_terminal(ch)) flush_sentence();
    }
  }
  flush_token();
  flush_sentence();
}

inline std::vector<TextSample> load_corpus(const std::filesystem::path& path,
                                           CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path.string());
  std::vector<TextSample> samples;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    TextSample s;
    std::string text;
    if (format == CorpusFormat::jsonl) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        s.id = j.at("id").get<std::string>();
        text = j.at("text").get<std::string>();
        s.category = j.at("category").get<int>();
        s.image_id = j.at("image_id").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": malformed record: " + e.what());
      }
    } else {
      std::vector<std::string> fields;
      std::size_t start = 0;
      for (std::size_t pos = line.find('\t'); pos != std::string::npos;
           start = pos + 1, pos = line.find('\t', start))
        fields.push_back(line.substr(start, pos - start));
      fields.push_back(line.substr(start));
      if (fields.size() != 4)
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected 4 tab-separated fields, got " +
                         std::to_string(fields.size()));
      s.id = fields[0];
      text = fields[1];
      try {
        s.category = std::stoi(fields[2]);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": category is not an integer: '" + fields[2] + "'");
      }
      s.image_id = fields[3];
    }
    if (s.id.empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": empty id");
    if (!seen_ids.insert(s.id).second)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": duplicate id '" + s.id + "'");
    tokenize(text, s.tokens, s.sentences);
    samples.push_back(std::move(s));
  }
  return samples;
}

/// Noun dictionary over the training texts; ids are dense, 0..size-1, in
/// descending document frequency with lexicographic tie-break.
struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::size_t> doc_freq;

  std::size_t size() const { return words.size(); }

  std::optional<std::size_t> id_of(const std::string& w) const {
    auto it = index.find(w);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  static Vocabulary from_words(std::vector<std::string> ordered_words) {
    Vocabulary v;
    v.words = std::move(ordered_words);
    v.doc_freq.assign(v.words.size(), 0);
    for (std::size_t i = 0; i < v.words.size(); ++i) v.index[v.words[i]] = i;
    if (v.index.size() != v.words.size())
      throw ValidationError("vocabulary contains duplicate words");
    return v;
  }
};

namespace detail {

inline bool is_alphabetic(const std::string& w) {
  if (w.empty()) return false;
  for (unsigned char c : w)
    if (c < 'a' || c > 'z') return false;
  return true;
}

}  // namespace detail

/// With a noun lexicon: keep tokens in the lexicon (minus stopwords). Without
/// one, the fallback heuristic keeps alphabetic non-stopword tokens whose
/// document frequency is at least min_df.
inline Vocabulary build_vocabulary(
    const std::vector<TextSample>& samples,
    const std::optional<std::unordered_set<std::string>>& noun_lexicon,
    const std::unordered_set<std::string>& stopwords, std::size_t min_df) {
  if (samples.empty())
    throw ConfigError("build_vocabulary: no samples to build from");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& s : samples) {
    std::unordered_set<std::string> distinct(s.tokens.begin(), s.tokens.end());
    for (const auto& w : distinct) ++df[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [word, count] : df) {
    if (stopwords.count(word)) continue;
    if (noun_lexicon) {
      if (!noun_lexicon->count(word)) continue;
    } else {
      if (!detail::is_alphabetic(word) || count < min_df) continue;
    }
    kept.emplace_back(word, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (kept.empty())
    throw ConfigError("build_vocabulary: resulting vocabulary is empty");
  Vocabulary v;
  v.words.reserve(kept.size());
  v.doc_freq.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    v.words.push_back(kept[i].first);
    v.doc_freq.push_back(kept[i].second);
    v.index[kept[i].first] = i;
  }
  return v;
}

/// One word per line, UTF-8.
inline std::unordered_set<std::string> load_word_set(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open word file " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (!line.empty()) words.insert(line);
  }
  return words;
}

inline void save_vocabulary(const Vocabulary& vocab,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary file " + path.string());
  for (const auto& w : vocab.words) out << w << '\n';
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocabulary file " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  if (words.empty())
    throw ConfigError("vocabulary file " + path.string() + " is empty");
  return Vocabulary::from_words(std::move(words));
}

struct PairSample {
  std::string text_id;
  std::string image_id;
  int label = 0;  // 1 = positive, 0 = negative
};

enum class Alignment { exact_pair, same_category };

inline Alignment parse_alignment(const std::string& s) {
  if (s == "exact_pair") return Alignment::exact_pair;
  if (s == "same_category") return Alignment::same_category;
  throw ConfigError("unknown alignment '" + s +
                    "' (expected exact_pair or same_category)");
}

/// Draws exactly n_pos positives and n_neg negatives, with replacement (the
/// requested counts routinely exceed the number of distinct combinations).
/// Deterministic under a fixed seed; negatives never satisfy the alignment
/// rule.
inline std::vector<PairSample> sample_pairs(const std::vector<TextSample>& samples,
                                            std::size_t n_pos, std::size_t n_neg,
                                            Alignment alignment,
                                            std::uint64_t seed) {
  if (samples.empty() && (n_pos > 0 || n_neg > 0))
    throw ValidationError("sample_pairs: no samples to draw from");
  struct ImageRef {
    std::string id;
    int category;
  };
  std::vector<ImageRef> images;
  images.reserve(samples.size());
  std::unordered_map<int, std::vector<std::size_t>> images_by_category;
  std::unordered_set<std::string> distinct_image_ids;
  for (const auto& s : samples) {
    images.push_back({s.image_id, s.category});
    images_by_category[s.category].push_back(images.size() - 1);
    distinct_image_ids.insert(s.image_id);
  }

  if (n_neg > 0) {
    if (alignment == Alignment::same_category && images_by_category.size() < 2)
      throw ValidationError(
          "sample_pairs: cannot form negatives, only one category present");
    if (alignment == Alignment::exact_pair && distinct_image_ids.size() < 2)
      throw ValidationError(
          "sample_pairs: cannot form negatives, only one distinct image");
  }

  Rng rng(seed);
  std::vector<PairSample> out;
  out.reserve(n_pos + n_neg);
  for (std::size_t i = 0; i < n_pos; ++i) {
    const TextSample& t = samples[rng.uniform_int(samples.size())];
    if (alignment == Alignment::exact_pair) {
      out.push_back({t.id, t.image_id, 1});
    } else {
      const auto& pool = images_by_category[t.category];
      const ImageRef& img = images[pool[rng.uniform_int(pool.size())]];
      out.push_back({t.id, img.id, 1});
    }
  }
  for (std::size_t i = 0; i < n_neg; ++i) {
    for (;;) {
      const TextSample& t = samples[rng.uniform_int(samples.size())];
      const ImageRef& img = images[rng.uniform_int(images.size())];
      const bool aligned = alignment == Alignment::exact_pair
                               ? img.id == t.image_id
                               : img.category == t.category;
      if (!aligned) {
        out.push_back({t.id, img.id, 0});
        break;
      }
    }
  }
  return out;
}

/// Disjoint train/val/test id lists covering the dataset.
struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t rng_seed = 0;
};

inline SplitSpec make_split(const std::vector<TextSample>& samples,
                            double train_frac, double val_frac,
                            std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
    throw ConfigError("make_split: fractions must be nonnegative and sum to <= 1");
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  Rng rng(seed);
  rng.shuffle(ids);
  const std::size_t n = ids.size();
  const std::size_t n_train = static_cast<std::size_t>(train_frac * n);
  const std::size_t n_val = static_cast<std::size_t>(val_frac * n);
  SplitSpec split;
  split.rng_seed = seed;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

/// Word-frequency node features: entry i counts occurrences of vocabulary
/// word i in the sample. Out-of-vocabulary tokens are dropped.
struct SparseFeatures {
  std::size_t dim = 0;
  std::vector<std::pair<std::size_t, double>> entries;  // sorted by node id

  DenseMatrix to_dense_column() const {
    DenseMatrix x(dim, 1);
    for (const auto& [i, v] : entries) x(i, 0) = v;
    return x;
  }
};

inline SparseFeatures text_node_features(const TextSample& sample,
                                         const Vocabulary& vocab) {
  std::unordered_map<std::size_t, double> counts;
  for (const auto& tok : sample.tokens)
    if (auto id = vocab.id_of(tok)) ++counts[*id];
  SparseFeatures f;
  f.dim = vocab.size();
  f.entries.assign(counts.begin(), counts.end());
  std::sort(f.entries.begin(), f.entries.end());
  return f;
}

/// Precomputed per-node feature matrices keyed by text id; overrides the
/// frequency features for the texts it lists.
struct ExternalFeatures {
  std::size_t n_nodes = 0;
  std::size_t channels = 0;
  std::unordered_map<std::string, DenseMatrix> by_text;

  const DenseMatrix* find(const std::string& text_id) const {
    auto it = by_text.find(text_id);
    return it == by_text.end() ? nullptr : &it->second;
  }
};

inline ExternalFeatures load_external_node_features(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open node feature file " + path.string());
  ExternalFeatures ext;
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path.string() + ": missing header line");
  {
    std::istringstream hs(line);
    if (!(hs >> ext.n_nodes >> ext.channels) || ext.n_nodes == 0 ||
        ext.channels == 0)
      throw ParseError(path.string() + ": bad header, expected '<n_nodes> <channels>'");
  }
  std::string text_id;
  while (std::getline(in, line)) {
    text_id = line;
    while (!text_id.empty() && text_id.back() == '\r') text_id.pop_back();
    if (text_id.empty()) continue;
    DenseMatrix m(ext.n_nodes, ext.channels);
    for (std::size_t r = 0; r < ext.n_nodes; ++r) {
      if (!std::getline(in, line))
        throw ValidationError(path.string() + ": text '" + text_id +
                              "': expected " + std::to_string(ext.n_nodes) +
                              " feature rows, file ended at row " +
                              std::to_string(r));
      std::istringstream rs(line);
      for (std::size_t c = 0; c < ext.channels; ++c)
        if (!(rs >> m(r, c)))
          throw ValidationError(path.string() + ": text '" + text_id +
                                "': row " + std::to_string(r) + " does not have " +
                                std::to_string(ext.channels) + " values");
      double extra;
      if (rs >> extra)
        throw ValidationError(path.string() + ": text '" + text_id + "': row " +
                              std::to_string(r) + " has more than " +
                              std::to_string(ext.channels) + " values");
    }
    if (!m.all_finite())
      throw ValidationError(path.string() + ": text '" + text_id +
                            "': non-finite feature value");
    ext.by_text[text_id] = std::move(m);
  }
  return ext;
}

inline void save_external_node_features(const ExternalFeatures& ext,
                                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write node feature file " + path.string());
  out << ext.n_nodes << ' ' << ext.channels << '\n';
  out.precision(17);
  std::vector<std::string> ids;
  ids.reserve(ext.by_text.size());
  for (const auto& [id, m] : ext.by_text) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const DenseMatrix& m = ext.by_text.at(id);
    out << id << '\n';
    for (std::size_t r = 0; r < ext.n_nodes; ++r) {
      for (std::size_t c = 0; c < ext.channels; ++c)
        out << (c ? " " : "") << m(r, c);
      out << '\n';
    }
  }
}

}  // namespace relret
