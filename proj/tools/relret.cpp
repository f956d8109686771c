// relret: build word relation graphs from a paired text-image corpus, train
// the two-path retrieval model on them, and score retrieval both ways.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relret/relret.hpp"

namespace fs = std::filesystem;
using namespace relret;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string workdir = ".";
  std::vector<std::string> overrides;  // key=value
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--workdir", args.workdir,
                  "directory for generated artifacts (default: .)");
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set knn_k=4 (repeatable)");
  cmd->add_option("--seed", args.seed, "override the config seed");
}

ProjectConfig resolve_config(const CommonArgs& args) {
  ProjectConfig cfg;
  if (!args.config_path.empty()) cfg = load_config(args.config_path);
  for (const auto& kv : args.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();
  return cfg;
}

unsigned parse_mask(const std::string& name) {
  for (unsigned mask : standard_ablation_masks())
    if (mask_name(mask) == name) return mask;
  throw ConfigError("unknown graph variant '" + name +
                    "' (expected SR, SCR, SKR, or SCKR)");
}

// Artifact paths under the workdir.
fs::path vocab_file(const CommonArgs& a) { return fs::path(a.workdir) / "vocab.txt"; }
fs::path graph_file(const CommonArgs& a) { return fs::path(a.workdir) / "graph.txt"; }
fs::path config_dump_file(const CommonArgs& a) {
  return fs::path(a.workdir) / "config_used.txt";
}
fs::path checkpoint_file(const CommonArgs& a, const std::string& mask) {
  return fs::path(a.workdir) / ("model_" + mask + ".ckpt");
}
fs::path train_log_file(const CommonArgs& a, const std::string& mask) {
  return fs::path(a.workdir) / ("train_log_" + mask + ".tsv");
}
fs::path report_file(const CommonArgs& a) {
  return fs::path(a.workdir) / "report.tsv";
}

void require_artifact(const fs::path& path, const std::string& what,
                      const std::string& producing_command) {
  if (!fs::exists(path))
    throw ConfigError("missing " + what + " " + path.string() + "; run `relret " +
                      producing_command + "` first");
}

void require_input(const std::string& path, const std::string& config_key) {
  if (path.empty())
    throw ConfigError("config key '" + config_key + "' is not set");
  if (!fs::exists(path))
    throw ConfigError("input file " + path + " (config key '" + config_key +
                      "') does not exist");
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<TextSample> load_corpus_checked(const ProjectConfig& cfg) {
  require_input(cfg.corpus_path, "corpus_path");
  return load_corpus(cfg.corpus_path, parse_corpus_format(cfg.corpus_format));
}

Vocabulary build_vocab_from_config(const ProjectConfig& cfg,
                                   const std::vector<TextSample>& samples) {
  std::optional<std::unordered_set<std::string>> lexicon;
  if (!cfg.noun_lexicon_path.empty()) {
    require_input(cfg.noun_lexicon_path, "noun_lexicon_path");
    lexicon = load_word_set(cfg.noun_lexicon_path);
  }
  std::unordered_set<std::string> stopwords;
  if (!cfg.stopword_path.empty()) {
    require_input(cfg.stopword_path, "stopword_path");
    stopwords = load_word_set(cfg.stopword_path);
  }
  return build_vocabulary(samples, lexicon, stopwords, cfg.min_df);
}

FeatureProvider make_features(const ProjectConfig& cfg, const Vocabulary& vocab) {
  std::optional<ExternalFeatures> external;
  if (!cfg.node_feature_path.empty()) {
    require_input(cfg.node_feature_path, "node_feature_path");
    external = load_external_node_features(cfg.node_feature_path);
  }
  return FeatureProvider(vocab, std::move(external));
}

// Everything train/eval/query/ablate share.
struct Pipeline {
  ProjectConfig cfg;
  std::vector<TextSample> samples;
  Vocabulary vocab;
  RelationGraph integrated;
  FeatureProvider features;
  VisualFeatureStore visuals;
  SplitSpec split;

  static Pipeline load(const CommonArgs& args) {
    ProjectConfig cfg = resolve_config(args);
    require_artifact(vocab_file(args), "vocabulary file", "build-vocab");
    require_artifact(graph_file(args), "graph file", "build-graph");
    std::vector<TextSample> samples = load_corpus_checked(cfg);
    Vocabulary vocab = load_vocabulary(vocab_file(args));
    RelationGraph graph = load_graph(graph_file(args));
    if (graph.num_nodes() != vocab.size())
      throw ValidationError("graph has " + std::to_string(graph.num_nodes()) +
                            " nodes but the vocabulary has " +
                            std::to_string(vocab.size()) +
                            " words; rebuild with `relret build-graph`");
    FeatureProvider features = make_features(cfg, vocab);
    require_input(cfg.visual_path, "visual_path");
    VisualFeatureStore visuals = load_visual_features(cfg.visual_path);
    for (const auto& s : samples)
      if (!visuals.contains(s.image_id))
        throw ValidationError("no visual features for image '" + s.image_id +
                              "' (text '" + s.id + "')");
    SplitSpec split = make_split(samples, cfg.train_frac, cfg.val_frac,
                                 derive_seed(cfg.seed, kSeedSplit));
    return Pipeline{std::move(cfg),     std::move(samples), std::move(vocab),
                    std::move(graph),   std::move(features), std::move(visuals),
                    std::move(split)};
  }

  std::vector<TextSample> subset(const std::vector<std::string>& ids) const {
    std::unordered_map<std::string, const TextSample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::vector<TextSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(*by_id.at(id));
    return out;
  }

  EvalSet eval_set_for(const std::vector<std::string>& ids) const {
    EvalSet set;
    set.alignment = parse_alignment(cfg.alignment);
    set.text_ids = ids;
    for (const auto& s : subset(ids)) set.image_ids.push_back(s.image_id);
    return set;
  }

  ModelConfig model_config() const {
    return cfg.model_config(vocab.size(), features.channels(), visuals.dim());
  }

  std::vector<PairSample> training_pairs() const {
    return sample_pairs(subset(split.train), cfg.n_pos, cfg.n_neg,
                        parse_alignment(cfg.alignment),
                        derive_seed(cfg.seed, kSeedPairs));
  }

  std::optional<EvalSet> validation_set() const {
    if (split.val.empty()) return std::nullopt;
    return eval_set_for(split.val);
  }
};

int cmd_build_vocab(const CommonArgs& args) {
  const ProjectConfig cfg = resolve_config(args);
  const auto samples = load_corpus_checked(cfg);
  const Vocabulary vocab = build_vocab_from_config(cfg, samples);
  fs::create_directories(args.workdir);
  save_vocabulary(vocab, vocab_file(args));
  std::cerr << "wrote " << vocab.size() << " words to "
            << vocab_file(args).string() << " (from " << samples.size()
            << " texts)\n";
  return 0;
}

int cmd_build_graph(const CommonArgs& args) {
  const ProjectConfig cfg = resolve_config(args);
  require_artifact(vocab_file(args), "vocabulary file", "build-vocab");
  const Vocabulary vocab = load_vocabulary(vocab_file(args));
  const auto samples = load_corpus_checked(cfg);
  require_input(cfg.embedding_path, "embedding_path");
  const EmbeddingTable embeddings = load_embeddings(cfg.embedding_path);
  require_input(cfg.triple_path, "triple_path");
  const TripleStore triples = load_triples(cfg.triple_path);

  const RelationGraph sr = build_semantic_graph(vocab, embeddings, cfg.knn_k);
  const RelationGraph cr =
      build_cooccurrence_graph(samples, vocab, cfg.cooccur_epsilon);
  const RelationGraph kr = build_knowledge_graph(vocab, triples);
  const RelationGraph g = integrate({&sr, &cr, &kr});

  fs::create_directories(args.workdir);
  save_graph(g, graph_file(args));
  const GraphStats stats = g.stats();
  std::cerr << "wrote " << graph_file(args).string() << ": " << stats.nodes
            << " nodes, " << stats.edges << " edges ("
            << sr.num_edges() << " semantic, " << cr.num_edges()
            << " co-occurrence, " << kr.num_edges() << " knowledge)\n";
  return 0;
}

int cmd_stats(const CommonArgs& args) {
  require_artifact(graph_file(args), "graph file", "build-graph");
  const RelationGraph g = load_graph(graph_file(args));
  const GraphStats s = g.stats();
  char density[32];
  std::snprintf(density, sizeof density, "%.4f", s.density_percent);
  std::cout << s.nodes << ' ' << s.edges << ' ' << density << '\n';
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& mask_str) {
  const unsigned mask = parse_mask(mask_str);
  const Pipeline p = Pipeline::load(args);
  const RelationGraph g = p.integrated.filter_by_provenance(mask);

  const TrainReport report =
      train_model(p.model_config(), p.cfg.train_config(), g, p.features,
                  p.samples, p.visuals, p.training_pairs(), p.validation_set());

  fs::create_directories(args.workdir);
  save_checkpoint(report.checkpoint, checkpoint_file(args, mask_str));
  write_text_file(train_log_file(args, mask_str), format_train_log(report));
  write_text_file(config_dump_file(args), p.cfg.dump());
  std::cerr << "trained " << mask_str << " for " << report.rows.size()
            << " epochs";
  if (report.best_epoch > 0)
    std::cerr << "; best validation MAP " << report.best_val_map << " at epoch "
              << report.best_epoch;
  std::cerr << "\nwrote " << checkpoint_file(args, mask_str).string() << " and "
            << train_log_file(args, mask_str).string() << '\n';
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& mask_str) {
  const unsigned mask = parse_mask(mask_str);
  const Pipeline p = Pipeline::load(args);
  require_artifact(checkpoint_file(args, mask_str), "checkpoint",
                   "train --mask " + mask_str);
  const Checkpoint ckpt = load_checkpoint(checkpoint_file(args, mask_str));
  const RelationGraph g = p.integrated.filter_by_provenance(mask);
  const MapReport map =
      evaluate_checkpoint(ckpt, g, p.features, p.samples, p.visuals,
                          p.eval_set_for(p.split.test), p.cfg.map_k);
  std::cout << format_report({{mask_str, map}});
  return 0;
}

int cmd_query(const CommonArgs& args, const std::string& mask_str,
              const std::string& text_id, const std::string& image_id,
              std::size_t top) {
  if (text_id.empty() == image_id.empty())
    throw ConfigError("query: give exactly one of --text or --image");
  const unsigned mask = parse_mask(mask_str);
  const Pipeline p = Pipeline::load(args);
  require_artifact(checkpoint_file(args, mask_str), "checkpoint",
                   "train --mask " + mask_str);
  const Checkpoint ckpt = load_checkpoint(checkpoint_file(args, mask_str));
  const RelationGraph g = p.integrated.filter_by_provenance(mask);
  if (ckpt.graph_hash != graph_hash(g))
    throw ValidationError("checkpoint was trained on a different graph");
  const SparseMatrix prop = g.propagation_matrix();

  std::unordered_map<std::string, const TextSample*> by_id;
  for (const auto& s : p.samples) by_id[s.id] = &s;

  std::vector<RankedCandidate> ranked;
  if (!text_id.empty()) {
    auto it = by_id.find(text_id);
    if (it == by_id.end())
      throw ValidationError("unknown text id '" + text_id + "'");
    const DenseMatrix t = text_embed(ckpt.params, ckpt.config, prop,
                                     p.features.features_for(*it->second));
    for (const auto& iid : p.visuals.image_ids())
      ranked.push_back(
          {iid, score_pair(ckpt.params, t,
                           image_embed(ckpt.params, ckpt.config,
                                       p.visuals.features(iid)))});
  } else {
    if (!p.visuals.contains(image_id))
      throw ValidationError("unknown image id '" + image_id + "'");
    const DenseMatrix v =
        image_embed(ckpt.params, ckpt.config, p.visuals.features(image_id));
    for (const auto& s : p.samples)
      ranked.push_back(
          {s.id, score_pair(ckpt.params,
                            text_embed(ckpt.params, ckpt.config, prop,
                                       p.features.features_for(s)),
                            v)});
  }
  rank_candidates(ranked);
  const std::size_t n = std::min(top, ranked.size());
  for (std::size_t i = 0; i < n; ++i)
    std::printf("%zu\t%s\t%.6f\n", i + 1, ranked[i].id.c_str(), ranked[i].score);
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  const Pipeline p = Pipeline::load(args);
  const auto results = ablation_sweep(
      p.model_config(), p.cfg.train_config(), p.integrated, p.features,
      p.samples, p.visuals, p.training_pairs(), p.validation_set(),
      p.eval_set_for(p.split.test), standard_ablation_masks());

  fs::create_directories(args.workdir);
  for (const auto& r : results) {
    const std::string name = mask_name(r.mask);
    save_checkpoint(r.train.checkpoint, checkpoint_file(args, name));
    write_text_file(train_log_file(args, name), format_train_log(r.train));
    std::cerr << name << ": " << r.stats.edges << " edges, test MAP "
              << r.test_map.average << '\n';
  }
  const std::string report = format_report(ablation_report(results));
  write_text_file(report_file(args), report);
  write_text_file(config_dump_file(args), p.cfg.dump());
  std::cout << report;
  std::cerr << "wrote " << report_file(args).string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-view word-graph retrieval pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string mask = "SCKR";
  std::string query_text, query_image;
  std::size_t query_top = 10;

  CLI::App* build_vocab = app.add_subcommand(
      "build-vocab", "extract the corpus vocabulary and write vocab.txt");
  add_common(build_vocab, args);

  CLI::App* build_graph = app.add_subcommand(
      "build-graph",
      "build the integrated word relation graph and write graph.txt");
  add_common(build_graph, args);

  CLI::App* train = app.add_subcommand(
      "train", "train a model on one graph variant and write a checkpoint");
  add_common(train, args);
  train->add_option("--mask", mask, "graph variant: SR, SCR, SKR, SCKR");

  CLI::App* eval = app.add_subcommand(
      "eval", "score a trained checkpoint on the test split (TSV to stdout)");
  add_common(eval, args);
  eval->add_option("--mask", mask, "graph variant: SR, SCR, SKR, SCKR");

  CLI::App* query = app.add_subcommand(
      "query", "rank candidates for one text or image with a trained model");
  add_common(query, args);
  query->add_option("--mask", mask, "graph variant: SR, SCR, SKR, SCKR");
  query->add_option("--text", query_text, "text id to query with");
  query->add_option("--image", query_image, "image id to query with");
  query->add_option("--top", query_top, "how many candidates to print");

  CLI::App* stats = app.add_subcommand(
      "stats", "print `nodes edges density%` for the built graph");
  add_common(stats, args);

  CLI::App* ablate = app.add_subcommand(
      "ablate", "train and score every graph variant and write report.tsv");
  add_common(ablate, args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (build_vocab->parsed()) return cmd_build_vocab(args);
    if (build_graph->parsed()) return cmd_build_graph(args);
    if (stats->parsed()) return cmd_stats(args);
    if (train->parsed()) return cmd_train(args, mask);
    if (eval->parsed()) return cmd_eval(args, mask);
    if (query->parsed())
      return cmd_query(args, mask, query_text, query_image, query_top);
    if (ablate->parsed()) return cmd_ablate(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
