#pragma once
// Filtered ranking protocol and aggregate MRR / Hits@k reporting with the
// target-present / target-absent coverage breakdown.

#include <cmath>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgr3/context.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/model.hpp"

namespace kgr3 {

// Expected-rank convention: strictly greater scores count 1, equal scores
// count 0.5, filtered entities and the gold itself count 0.
template <typename T>
double filtered_rank(const Tensor<T>& logits, EntityId gold,
                     const std::unordered_set<EntityId>& known_positives) {
  if (logits.rows != 1) throw std::invalid_argument("logits must be 1xN");
  if (gold < 0 || static_cast<std::size_t>(gold) >= logits.cols)
    throw std::out_of_range("gold index out of range");
  const T gold_score = logits.data[static_cast<std::size_t>(gold)];
  double rank = 1.0;
  for (std::size_t e = 0; e < logits.cols; ++e) {
    if (static_cast<EntityId>(e) == gold) continue;
    if (known_positives.count(static_cast<EntityId>(e))) continue;
    if (logits.data[e] > gold_score)
      rank += 1.0;
    else if (logits.data[e] == gold_score)
      rank += 0.5;
  }
  return rank;
}

struct MetricsSummary {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
};

inline MetricsSummary summarize(const std::vector<double>& ranks) {
  MetricsSummary s;
  s.count = ranks.size();
  if (ranks.empty()) return s;
  for (double r : ranks) {
    s.mrr += 1.0 / r;
    if (r <= 1.0) s.hits1 += 1.0;
    if (r <= 3.0) s.hits3 += 1.0;
    if (r <= 10.0) s.hits10 += 1.0;
  }
  const double n = static_cast<double>(ranks.size());
  s.mrr /= n;
  s.hits1 /= n;
  s.hits3 /= n;
  s.hits10 /= n;
  return s;
}

struct RankingReport {
  std::vector<double> ranks;                 // per query, >= 1
  std::vector<std::uint8_t> target_present;  // per query
  MetricsSummary overall;
  MetricsSummary present_slice;
  MetricsSummary absent_slice;
  double coverage = 0.0;

  void finalize() {
    overall = summarize(ranks);
    std::vector<double> present, absent;
    for (std::size_t i = 0; i < ranks.size(); ++i)
      (target_present[i] ? present : absent).push_back(ranks[i]);
    present_slice = summarize(present);
    absent_slice = summarize(absent);
    coverage = ranks.empty() ? 0.0
                             : static_cast<double>(present.size()) /
                                   static_cast<double>(ranks.size());
  }
};

// Scores every context with a frozen model; known positives for the
// filtered protocol come from the KG's all-split fact set.
template <typename T>
RankingReport evaluate(const ModelParams<T>& params, const KnowledgeGraph& kg,
                       const std::vector<SubgraphContext>& contexts) {
  RankingReport report;
  for (const auto& ctx : contexts) {
    if (!ctx.query.gold_target)
      throw std::invalid_argument("evaluate: query has no gold target");
    EntityId gold = *ctx.query.gold_target;
    Tape<T> tape;
    ReaderGraph<T> graph(tape, params, /*requires_grad=*/false);
    auto fwd = graph.forward(ctx.query, ctx);
    const Tensor<T>& logits = tape.value(fwd.logits);
    std::unordered_set<EntityId> filters;
    for (EntityId t : kg.known_tails(ctx.query.source, ctx.query.relation))
      if (t != gold) filters.insert(t);
    report.ranks.push_back(filtered_rank(logits, gold, filters));
    bool present = false;
    for (EntityId n : ctx.nodes)
      if (n == gold) {
        present = true;
        break;
      }
    report.target_present.push_back(present ? 1 : 0);
  }
  report.finalize();
  return report;
}

inline nlohmann::json summary_to_json(const MetricsSummary& s) {
  return {{"mrr", s.mrr},
          {"hits1", s.hits1},
          {"hits3", s.hits3},
          {"hits10", s.hits10},
          {"count", s.count}};
}

inline nlohmann::json report_to_json(const RankingReport& r,
                                     const std::string& split,
                                     const std::string& strategy,
                                     bool include_per_query = false) {
  nlohmann::json j;
  j["split"] = split;
  j["strategy"] = strategy;
  j["mrr"] = r.overall.mrr;
  j["hits1"] = r.overall.hits1;
  j["hits3"] = r.overall.hits3;
  j["hits10"] = r.overall.hits10;
  j["coverage"] = r.coverage;
  j["slices"] = {{"present", summary_to_json(r.present_slice)},
                 {"absent", summary_to_json(r.absent_slice)}};
  if (include_per_query) j["per_query"] = r.ranks;
  return j;
}

inline void save_metrics(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write metrics file " + path);
  f << j.dump(2) << '\n';
}

}  // namespace kgr3
