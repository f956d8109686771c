#pragma once

#include <optional>
#include <vector>

#include "relret/eval.hpp"
#include "relret/graph.hpp"
#include "relret/trainer.hpp"

namespace relret {

/// The standard comparison ladder: semantic edges alone, then with
/// co-occurrence, knowledge, and both added back in.
inline std::vector<unsigned> standard_ablation_masks() {
  return {kEdgeSemantic, kEdgeSemantic | kEdgeCooccurrence,
          kEdgeSemantic | kEdgeKnowledge, kEdgeAllViews};
}

struct AblationResult {
  unsigned mask = 0;
  GraphStats stats;
  TrainReport train;
  MapReport test_map;
};

/// Trains and scores one model per provenance subset of the integrated graph.
/// Every run shares the seed, pairs, and splits; only the edge set changes,
/// so the rows are directly comparable.
inline std::vector<AblationResult> ablation_sweep(
    const ModelConfig& model_cfg, const TrainConfig& train_cfg,
    const RelationGraph& integrated, const FeatureProvider& features,
    const std::vector<TextSample>& samples, const VisualFeatureStore& visuals,
    const std::vector<PairSample>& train_pairs,
    const std::optional<EvalSet>& val_set, const EvalSet& test_set,
    const std::vector<unsigned>& masks) {
  std::vector<AblationResult> results;
  results.reserve(masks.size());
  for (unsigned mask : masks) {
    AblationResult r;
    r.mask = mask;
    const RelationGraph g = integrated.filter_by_provenance(mask);
    r.stats = g.stats();
    r.train = train_model(model_cfg, train_cfg, g, features, samples, visuals,
                          train_pairs, val_set);
    r.test_map =
        evaluate_checkpoint(r.train.checkpoint, g, features, samples, visuals,
                            test_set, train_cfg.map_k);
    results.push_back(std::move(r));
  }
  return results;
}

inline std::vector<ReportRow> ablation_report(
    const std::vector<AblationResult>& results) {
  std::vector<ReportRow> rows;
  rows.reserve(results.size());
  for (const auto& r : results) rows.push_back({mask_name(r.mask), r.test_map});
  return rows;
}

}  // namespace relret
