#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "relret/error.hpp"

namespace relret {

/// AP@k over a ranked 0/1 relevance list: the sum of precision@r at each
/// relevant rank r <= k, normalized by min(total_relevant, k).
/// `total_relevant` counts relevant items in the whole candidate pool, not
/// just the top k.  A query with no relevant candidates scores 0.
inline double average_precision_at_k(const std::vector<int>& relevance,
                                     std::size_t k, std::size_t total_relevant) {
  if (k == 0) throw ValidationError("average_precision_at_k: k must be positive");
  for (int r : relevance)
    if (r != 0 && r != 1)
      throw ValidationError("average_precision_at_k: relevance must be 0/1");
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, relevance.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (relevance[r]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min(total_relevant, k));
}

struct RankedCandidate {
  std::string id;
  double score = 0.0;
};

/// Sorts candidates by score descending, id ascending on ties — the one rank
/// order every ranking in the project uses.
inline void rank_candidates(std::vector<RankedCandidate>& candidates) {
  std::sort(candidates.begin(), candidates.end(),
            [](const RankedCandidate& a, const RankedCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
}

using ScoreFn = std::function<double(const std::string& text_id,
                                     const std::string& image_id)>;
using RelevanceFn = std::function<bool(const std::string& text_id,
                                       const std::string& image_id)>;

namespace detail {

/// AP@k for one query against a candidate pool.  `query_is_text` fixes which
/// argument slot of the text/image score and relevance callbacks the query
/// occupies.
inline double query_ap(const std::string& query,
                       const std::vector<std::string>& candidates,
                       const ScoreFn& score, const RelevanceFn& relevant,
                       std::size_t k, bool query_is_text) {
  std::vector<RankedCandidate> ranked;
  ranked.reserve(candidates.size());
  for (const auto& c : candidates)
    ranked.push_back({c, query_is_text ? score(query, c) : score(c, query)});
  rank_candidates(ranked);
  std::vector<int> rel;
  rel.reserve(ranked.size());
  std::size_t total_relevant = 0;
  for (const auto& rc : ranked) {
    const bool is_rel =
        query_is_text ? relevant(query, rc.id) : relevant(rc.id, query);
    rel.push_back(is_rel ? 1 : 0);
    total_relevant += is_rel ? 1 : 0;
  }
  return average_precision_at_k(rel, k, total_relevant);
}

}  // namespace detail

/// Mean AP@k in both retrieval directions plus their average.  Values are
/// fractions in [0, 1]; reports multiply by 100.
struct MapReport {
  double text_to_image = 0.0;
  double image_to_text = 0.0;
  double average = 0.0;
};

inline MapReport map_at_k(const std::vector<std::string>& text_ids,
                          const std::vector<std::string>& image_ids,
                          const ScoreFn& score, const RelevanceFn& relevant,
                          std::size_t k) {
  if (text_ids.empty() || image_ids.empty())
    throw ValidationError("map_at_k: empty query or candidate pool");
  MapReport report;
  for (const auto& t : text_ids)
    report.text_to_image +=
        detail::query_ap(t, image_ids, score, relevant, k, true);
  report.text_to_image /= static_cast<double>(text_ids.size());
  for (const auto& i : image_ids)
    report.image_to_text +=
        detail::query_ap(i, text_ids, score, relevant, k, false);
  report.image_to_text /= static_cast<double>(image_ids.size());
  report.average = 0.5 * (report.text_to_image + report.image_to_text);
  return report;
}

struct ReportRow {
  std::string model;
  MapReport map;
};

namespace detail {

inline std::string percent_1dp(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

}  // namespace detail

/// TSV: header `model  Q_T  Q_I  Avg`, one row per variant, percentages with
/// one decimal.
inline std::string format_report(const std::vector<ReportRow>& rows) {
  std::string out = "model\tQ_T\tQ_I\tAvg\n";
  for (const auto& row : rows) {
    out += row.model;
    out += '\t';
    out += detail::percent_1dp(row.map.text_to_image);
    out += '\t';
    out += detail::percent_1dp(row.map.image_to_text);
    out += '\t';
    out += detail::percent_1dp(row.map.average);
    out += '\n';
  }
  return out;
}

}  // namespace relret
