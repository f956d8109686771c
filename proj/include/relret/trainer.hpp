#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relret/adam.hpp"
#include "relret/corpus.hpp"
#include "relret/error.hpp"
#include "relret/eval.hpp"
#include "relret/features.hpp"
#include "relret/graph.hpp"
#include "relret/model.hpp"
#include "relret/rng.hpp"
#include "relret/tape.hpp"

namespace relret {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t eval_every = 5;  // validation cadence in epochs; 0 disables
  std::size_t map_k = 100;
  AdamConfig adam;
  std::uint64_t seed = 42;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (map_k == 0) throw ConfigError("train: map_k must be positive");
  }
};

/// Texts and images to rank during evaluation, with the rule that decides
/// which pairs count as relevant.
struct EvalSet {
  std::vector<std::string> text_ids;
  std::vector<std::string> image_ids;
  Alignment alignment = Alignment::same_category;
};

struct EpochRow {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<double> val_map;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  Checkpoint checkpoint;        // best validation MAP; final weights if no validation ran
  ModelParams final_params;     // weights after the last step regardless
  std::size_t best_epoch = 0;   // 0 when no validation ran
  double best_val_map = 0.0;
};

namespace detail {

struct SampleIndex {
  std::unordered_map<std::string, const TextSample*> text_by_id;
  std::unordered_map<std::string, int> category_by_image;

  explicit SampleIndex(const std::vector<TextSample>& samples) {
    for (const auto& s : samples) {
      text_by_id[s.id] = &s;
      auto [it, inserted] = category_by_image.emplace(s.image_id, s.category);
      if (!inserted && it->second != s.category)
        throw ValidationError("image '" + s.image_id +
                              "' is paired with texts of different categories");
    }
  }

  const TextSample& text(const std::string& id) const {
    auto it = text_by_id.find(id);
    if (it == text_by_id.end())
      throw ValidationError("unknown text id '" + id + "'");
    return *it->second;
  }

  int image_category(const std::string& id) const {
    auto it = category_by_image.find(id);
    if (it == category_by_image.end())
      throw ValidationError("unknown image id '" + id + "'");
    return it->second;
  }
};

}  // namespace detail

/// Ranks with the given weights: embeds every listed text and image once,
/// scores all pairs through the similarity head, and reports MAP@k both ways.
inline MapReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                                const SparseMatrix& prop,
                                const FeatureProvider& features,
                                const std::vector<TextSample>& samples,
                                const VisualFeatureStore& visuals,
                                const EvalSet& eval_set, std::size_t map_k) {
  const detail::SampleIndex index(samples);
  std::unordered_map<std::string, DenseMatrix> text_vecs, image_vecs;
  for (const auto& tid : eval_set.text_ids)
    text_vecs.emplace(
        tid, text_embed(params, cfg, prop, features.features_for(index.text(tid))));
  for (const auto& iid : eval_set.image_ids)
    image_vecs.emplace(iid, image_embed(params, cfg, visuals.features(iid)));

  const ScoreFn score = [&](const std::string& tid, const std::string& iid) {
    return score_pair(params, text_vecs.at(tid), image_vecs.at(iid));
  };
  const RelevanceFn relevant = [&](const std::string& tid, const std::string& iid) {
    if (eval_set.alignment == Alignment::exact_pair)
      return index.text(tid).image_id == iid;
    return index.text(tid).category == index.image_category(iid);
  };
  return map_at_k(eval_set.text_ids, eval_set.image_ids, score, relevant, map_k);
}

/// Single-threaded training over labelled text-image pairs with minibatch
/// gradient averaging and Adam.  Fully deterministic in the seed: one RNG
/// stream drives epoch shuffles and dropout masks in a fixed order.
inline TrainReport train_model(const ModelConfig& model_cfg,
                               const TrainConfig& train_cfg,
                               const RelationGraph& graph,
                               const FeatureProvider& features,
                               const std::vector<TextSample>& samples,
                               const VisualFeatureStore& visuals,
                               const std::vector<PairSample>& train_pairs,
                               const std::optional<EvalSet>& val_set) {
  model_cfg.validate();
  train_cfg.validate();
  if (train_pairs.empty() && train_cfg.epochs > 0)
    throw ValidationError("train: no training pairs");

  const detail::SampleIndex index(samples);
  for (const auto& pair : train_pairs) {
    index.text(pair.text_id);             // throws on unknown ids
    (void)visuals.features(pair.image_id);
    if (pair.label != 0 && pair.label != 1)
      throw ValidationError("train: pair label must be 0 or 1");
  }
  if (val_set && (val_set->text_ids.empty() || val_set->image_ids.empty()))
    throw ValidationError("train: validation set given but empty");

  const SparseMatrix prop = graph.propagation_matrix();
  ModelParams params = init_params(model_cfg, derive_seed(train_cfg.seed, kSeedInit));
  Rng rng(derive_seed(train_cfg.seed, kSeedTrain));

  std::unordered_map<std::string, AdamState> opt_state;
  params.visit([&](const char* name, DenseMatrix& m, bool) {
    opt_state.emplace(name, AdamState::zeros_like(m));
  });

  TrainReport report;
  report.checkpoint.config = model_cfg;
  report.checkpoint.graph_hash = graph_hash(graph);
  std::size_t adam_step_count = 0;
  bool have_best = false;

  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size();
         start += train_cfg.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + train_cfg.batch_size);
      const double batch_n = static_cast<double>(stop - start);

      std::unordered_map<std::string, DenseMatrix> grad_acc;
      params.visit([&](const char* name, DenseMatrix& m, bool) {
        grad_acc.emplace(name, DenseMatrix(m.rows(), m.cols()));
      });

      for (std::size_t b = start; b < stop; ++b) {
        const PairSample& pair = train_pairs[order[b]];
        const TextSample& text = index.text(pair.text_id);

        Tape tape;
        const TapeParams tp = attach_params(tape, params);
        const Tape::Id t = text_forward(tape, tp, model_cfg, prop,
                                        features.features_for(text), true, rng);
        const Tape::Id v = image_forward(tape, tp, model_cfg,
                                         visuals.features(pair.image_id), true, rng);
        const Tape::Id loss =
            pair_loss(tape, similarity(tape, tp, t, v), pair.label, model_cfg);
        const double loss_value = tape.scalar(loss);
        if (!std::isfinite(loss_value))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += loss_value;
        tape.backward(loss);

        const auto add_grad = [&](const char* name, Tape::Id id) {
          DenseMatrix& acc = grad_acc.at(name);
          const DenseMatrix& g = tape.grad(id);
          for (std::size_t i = 0; i < acc.rows() * acc.cols(); ++i)
            acc[i] += g[i] / batch_n;
        };
        add_grad("gcn_w0", tp.gcn_w0);
        add_grad("gcn_w1", tp.gcn_w1);
        add_grad("text_w", tp.text_w);
        add_grad("text_b", tp.text_b);
        add_grad("img_w", tp.img_w);
        add_grad("img_b", tp.img_b);
        add_grad("sim_w", tp.sim_w);
        add_grad("sim_b", tp.sim_b);
      }

      ++adam_step_count;
      params.visit([&](const char* name, DenseMatrix& m, bool is_weight) {
        adam_step(m, grad_acc.at(name), opt_state.at(name),
                  static_cast<std::int64_t>(adam_step_count), train_cfg.adam,
                  is_weight ? train_cfg.adam.weight_decay : 0.0, name);
      });
    }

    EpochRow row;
    row.epoch = epoch;
    row.mean_loss = loss_sum / static_cast<double>(train_pairs.size());
    const bool eval_now =
        val_set && train_cfg.eval_every > 0 &&
        (epoch % train_cfg.eval_every == 0 || epoch == train_cfg.epochs);
    if (eval_now) {
      const MapReport val = evaluate_model(params, model_cfg, prop, features,
                                           samples, visuals, *val_set,
                                           train_cfg.map_k);
      row.val_map = val.average;
      if (!have_best || val.average > report.best_val_map) {
        have_best = true;
        report.best_val_map = val.average;
        report.best_epoch = epoch;
        report.checkpoint.params = params;
      }
    }
    report.rows.push_back(row);
  }

  report.final_params = params;
  if (!have_best) report.checkpoint.params = std::move(params);
  return report;
}

/// `epoch<TAB>mean_loss[<TAB>val_map]` per line, 17 significant digits so the
/// log is bit-faithful to the run.
inline std::string format_train_log(const TrainReport& report) {
  std::string out;
  char buf[64];
  for (const auto& row : report.rows) {
    out += std::to_string(row.epoch);
    std::snprintf(buf, sizeof buf, "\t%.17g", row.mean_loss);
    out += buf;
    if (row.val_map) {
      std::snprintf(buf, sizeof buf, "\t%.17g", *row.val_map);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Evaluates a saved checkpoint against a graph, refusing to score a model on
/// a graph other than the one it was trained with.
inline MapReport evaluate_checkpoint(const Checkpoint& ckpt,
                                     const RelationGraph& graph,
                                     const FeatureProvider& features,
                                     const std::vector<TextSample>& samples,
                                     const VisualFeatureStore& visuals,
                                     const EvalSet& eval_set, std::size_t map_k) {
  const std::uint64_t actual = graph_hash(graph);
  if (ckpt.graph_hash != actual)
    throw ValidationError(
        "checkpoint was trained on a different graph (stored hash " +
        std::to_string(ckpt.graph_hash) + ", this graph hashes to " +
        std::to_string(actual) + ")");
  return evaluate_model(ckpt.params, ckpt.config, graph.propagation_matrix(),
                        features, samples, visuals, eval_set, map_k);
}

}  // namespace relret
