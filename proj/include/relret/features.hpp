#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>

#include "relret/corpus.hpp"
#include "relret/dense.hpp"
#include "relret/error.hpp"

namespace relret {

/// Produces the per-text node feature matrix X (one row per vocabulary word).
/// By default a text contributes its word counts as a single channel; a
/// precomputed feature file, when given, overrides that for the texts it
/// lists, and texts it omits fall back to counts in channel 0 with the
/// remaining channels zero.
class FeatureProvider {
 public:
  // Owns its vocabulary copy so the provider stays valid however long the
  // caller keeps it (the CLI builds one and returns it across scopes).
  explicit FeatureProvider(Vocabulary vocab,
                           std::optional<ExternalFeatures> external = std::nullopt)
      : vocab_(std::move(vocab)), external_(std::move(external)) {
    if (external_) {
      if (external_->n_nodes != vocab_.size())
        throw ValidationError(
            "external features describe " + std::to_string(external_->n_nodes) +
            " nodes but the vocabulary has " + std::to_string(vocab_.size()));
      if (external_->channels == 0)
        throw ValidationError("external features have zero channels");
    }
  }

  std::size_t channels() const { return external_ ? external_->channels : 1; }

  DenseMatrix features_for(const TextSample& sample) const {
    if (external_) {
      if (const DenseMatrix* m = external_->find(sample.id)) return *m;
    }
    DenseMatrix x(vocab_.size(), channels());
    for (const auto& [node, count] : text_node_features(sample, vocab_).entries)
      x(node, 0) = count;
    return x;
  }

 private:
  Vocabulary vocab_;
  std::optional<ExternalFeatures> external_;
};

}  // namespace relret
