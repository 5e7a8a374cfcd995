#pragma once
// End-to-end glue: query construction, retrieval dispatch, the
// translational-embedding hop scorer behind the built-in beam search,
// experiment runs and the ablation suite.

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kgr3/context.hpp"
#include "kgr3/eval.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/model.hpp"
#include "kgr3/retriever.hpp"
#include "kgr3/synth.hpp"
#include "kgr3/train.hpp"

namespace kgr3 {

// Both prediction directions: (h, r, ?) plus the head corruption rewritten
// as (t, r_inv, ?).
inline std::vector<Query> make_queries(const std::vector<Triple>& triples,
                                       const Vocabulary& vocab,
                                       bool both_directions = true) {
  std::vector<Query> out;
  for (const auto& t : triples) {
    out.push_back({t.head, t.relation, t.tail});
    if (both_directions)
      out.push_back({t.tail, vocab.inverse_of(t.relation), t.head});
  }
  return out;
}

// Shallow translational embeddings trained for a few epochs; they back the
// informed beam-search scorer in place of an RL-trained path policy.
struct HopEmbeddings {
  Tensor<double> entities;   // |E| x dim
  Tensor<double> relations;  // |R| x dim

  double dot_toward(EntityId source, RelationId relation,
                    EntityId candidate) const {
    double s = 0.0;
    for (std::size_t j = 0; j < entities.cols; ++j)
      s += (entities.at(static_cast<std::size_t>(source), j) +
            relations.at(static_cast<std::size_t>(relation), j)) *
           entities.at(static_cast<std::size_t>(candidate), j);
    return s;
  }
};

struct HopEmbeddingOptions {
  std::size_t dim = 32;
  std::size_t epochs = 5;
  double lr = 0.05;
  std::uint64_t seed = 13;
};

inline HopEmbeddings pretrain_hop_embeddings(const KnowledgeGraph& kg,
                                             const HopEmbeddingOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  HopEmbeddings emb;
  emb.entities =
      Tensor<double>::randn(kg.num_entities(), opt.dim, rng, 0.1);
  emb.relations =
      Tensor<double>::randn(kg.num_relations(), opt.dim, rng, 0.1);
  std::uniform_int_distribution<EntityId> neg(
      0, static_cast<EntityId>(kg.num_entities()) - 1);
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    for (const auto& t : kg.triples()) {
      EntityId corrupt = neg(rng);
      // one positive + one corrupted-tail logistic step
      for (int sign = 0; sign < 2; ++sign) {
        EntityId tail = sign == 0 ? t.tail : corrupt;
        double label = sign == 0 ? 1.0 : 0.0;
        double score = emb.dot_toward(t.head, t.relation, tail);
        double g = sigmoid(score) - label;
        for (std::size_t j = 0; j < opt.dim; ++j) {
          double hj = emb.entities.at(static_cast<std::size_t>(t.head), j);
          double rj =
              emb.relations.at(static_cast<std::size_t>(t.relation), j);
          double tj = emb.entities.at(static_cast<std::size_t>(tail), j);
          emb.entities.at(static_cast<std::size_t>(t.head), j) -=
              opt.lr * g * tj;
          emb.relations.at(static_cast<std::size_t>(t.relation), j) -=
              opt.lr * g * tj;
          emb.entities.at(static_cast<std::size_t>(tail), j) -=
              opt.lr * g * (hj + rj);
        }
      }
    }
  }
  return emb;
}

// Prefers hops whose endpoint looks like the query's predicted answer
// under the pretrained embeddings.
inline HopScorer embedding_scorer(const HopEmbeddings& emb) {
  return [&emb](const Query& q, const std::vector<Triple>&, const Triple& e) {
    return emb.dot_toward(q.source, q.relation, e.tail);
  };
}

// Relation-sequence statistics: for each query relation, how often each
// sequence of edge relations (up to max_hops) connects a training query's
// source to its answer. Sequences generalize to unseen entity pairs where
// pointwise embeddings cannot.
struct PathPatternModel {
  std::size_t max_hops = 2;
  std::map<RelationId, std::map<std::vector<RelationId>, double>> counts;
};

inline PathPatternModel learn_path_patterns(const KnowledgeGraph& kg,
                                            const Vocabulary& vocab,
                                            const std::vector<Triple>& facts,
                                            std::size_t max_hops = 2) {
  PathPatternModel model;
  model.max_hops = max_hops;
  auto count_paths = [&](EntityId source, RelationId query_rel,
                         EntityId target, const Triple& skip,
                         const Triple& skip_inv) {
    // DFS over bounded-length paths source -> target, skipping the queried
    // fact's own edge in either direction
    std::vector<RelationId> rels;
    std::function<void(EntityId, std::size_t)> walk = [&](EntityId at,
                                                          std::size_t depth) {
      if (depth == max_hops) return;
      for (const auto& [r, t] : kg.out_edges(at)) {
        Triple e{at, r, t};
        if (e == skip || e == skip_inv) continue;
        rels.push_back(r);
        if (t == target) model.counts[query_rel][rels] += 1.0;
        walk(t, depth + 1);
        rels.pop_back();
      }
    };
    walk(source, 0);
  };
  for (const auto& f : facts) {
    Triple inv{f.tail, vocab.inverse_of(f.relation), f.head};
    count_paths(f.head, f.relation, f.tail, f, inv);
    count_paths(f.tail, inv.relation, f.head, f, inv);
  }
  return model;
}

// Scores a hop by the total weight of learned sequences that extend the
// partial path's relation prefix.
inline HopScorer pattern_scorer(const PathPatternModel& model) {
  return [&model](const Query& q, const std::vector<Triple>& path,
                  const Triple& e) {
    auto it = model.counts.find(q.relation);
    if (it == model.counts.end()) return 0.0;
    std::vector<RelationId> prefix;
    prefix.reserve(path.size() + 1);
    for (const auto& step : path) prefix.push_back(step.relation);
    prefix.push_back(e.relation);
    double score = 0.0;
    for (const auto& [seq, weight] : it->second)
      if (seq.size() >= prefix.size() &&
          std::equal(prefix.begin(), prefix.end(), seq.begin()))
        score += weight;
    return score;
  };
}

enum class Strategy { kBfs, kOneHop, kPathUnion, kBeam };

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "bfs") return Strategy::kBfs;
  if (s == "onehop") return Strategy::kOneHop;
  if (s == "paths") return Strategy::kPathUnion;
  if (s == "beam") return Strategy::kBeam;
  throw std::invalid_argument("unknown retrieval strategy: " + s);
}

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kBfs: return "bfs";
    case Strategy::kOneHop: return "onehop";
    case Strategy::kPathUnion: return "paths";
    case Strategy::kBeam: return "beam";
  }
  return "?";
}

struct RetrieverConfig {
  Strategy strategy = Strategy::kBfs;
  std::size_t budget = 8;
  std::uint64_t seed = 0;
  std::size_t beam_width = 4;
  std::size_t max_hops = 2;
  RetrieverOptions options;
  const PathPatternModel* path_patterns = nullptr;     // beam strategy
  const HopEmbeddings* hop_embeddings = nullptr;       // beam fallback
  const std::map<std::uint64_t, std::vector<std::vector<Triple>>>*
      precomputed_paths = nullptr;                     // paths strategy
};

inline std::uint64_t query_key(const Query& q) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(q.source))
          << 32) |
         static_cast<std::uint32_t>(q.relation);
}

inline SubgraphContext retrieve(const KnowledgeGraph& kg,
                                const Vocabulary& vocab, const Query& query,
                                const RetrieverConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::kBfs:
      return retrieve_bfs(kg, vocab, query, cfg.budget, cfg.options);
    case Strategy::kOneHop:
      return retrieve_one_hop(kg, vocab, query, cfg.budget,
                              cfg.seed ^ query_key(query), cfg.options);
    case Strategy::kPathUnion: {
      if (!cfg.precomputed_paths)
        throw std::invalid_argument("paths strategy needs a path file");
      auto it = cfg.precomputed_paths->find(query_key(query));
      std::vector<std::vector<Triple>> paths =
          it == cfg.precomputed_paths->end()
              ? std::vector<std::vector<Triple>>{}
              : it->second;
      auto ctx = retrieve_path_union(query, paths, cfg.budget);
      ctx.query = query;
      return ctx;
    }
    case Strategy::kBeam: {
      HopScorer scorer = uniform_scorer();
      if (cfg.hop_embeddings) scorer = embedding_scorer(*cfg.hop_embeddings);
      if (cfg.path_patterns) scorer = pattern_scorer(*cfg.path_patterns);
      auto paths = beam_search_paths(kg, vocab, query, cfg.beam_width,
                                     cfg.max_hops, scorer, cfg.options);
      auto ctx = retrieve_path_union(query, paths, cfg.budget);
      ctx.strategy = "beam";
      return ctx;
    }
  }
  throw std::logic_error("unreachable");
}

inline std::vector<SubgraphContext> retrieve_all(
    const KnowledgeGraph& kg, const Vocabulary& vocab,
    const std::vector<Query>& queries, const RetrieverConfig& cfg) {
  std::vector<SubgraphContext> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(retrieve(kg, vocab, q, cfg));
  return out;
}

// Retrieval for training: gold edges and their inverses are stripped from
// every context before it becomes a TrainInstance.
inline std::vector<TrainInstance> build_train_instances(
    const KnowledgeGraph& kg, const Vocabulary& vocab,
    const std::vector<Query>& queries, const RetrieverConfig& cfg) {
  std::vector<TrainInstance> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    if (!q.gold_target)
      throw std::invalid_argument("training query has no gold target");
    auto ctx = retrieve(kg, vocab, q, cfg);
    Triple gold{q.source, q.relation, *q.gold_target};
    out.push_back({q, strip_query_edge(ctx, gold, vocab)});
  }
  return out;
}

// Path file: one JSON object per line, {"query":[s,r],"paths":[[[h,r,t],...],...]}.
inline std::map<std::uint64_t, std::vector<std::vector<Triple>>>
load_path_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read path file " + path);
  std::map<std::uint64_t, std::vector<std::vector<Triple>>> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    Query q{j.at("query").at(0).get<EntityId>(),
            j.at("query").at(1).get<RelationId>(), std::nullopt};
    std::vector<std::vector<Triple>> paths;
    for (const auto& jp : j.at("paths")) {
      std::vector<Triple> p;
      for (const auto& je : jp)
        p.push_back({je.at(0).get<EntityId>(), je.at(1).get<RelationId>(),
                     je.at(2).get<EntityId>()});
      paths.push_back(std::move(p));
    }
    out[query_key(q)] = std::move(paths);
  }
  return out;
}

inline void save_path_file(
    const std::string& path,
    const std::map<std::uint64_t, std::vector<std::vector<Triple>>>& paths) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write path file " + path);
  for (const auto& [key, plist] : paths) {
    nlohmann::json j;
    j["query"] = {static_cast<EntityId>(key >> 32),
                  static_cast<RelationId>(key & 0xffffffffu)};
    auto jp = nlohmann::json::array();
    for (const auto& p : plist) {
      auto je = nlohmann::json::array();
      for (const auto& t : p)
        je.push_back({t.head, t.relation, t.tail});
      jp.push_back(je);
    }
    j["paths"] = jp;
    f << j.dump() << '\n';
  }
}

struct ExperimentConfig {
  RetrieverConfig retriever;
  ModelConfig model;
  TrainOptions training;
  std::uint64_t init_seed = 1;
};

struct ExperimentResult {
  RankingReport test_report;
  std::vector<StepRecord> loss_curve;
  ModelParams<float> params;
};

// Train on d.train queries and evaluate on d.test queries with the same
// retriever configuration.
inline ExperimentResult run_experiment(const Dataset& d,
                                       const ExperimentConfig& cfg) {
  KnowledgeGraph kg = d.build_graph();
  auto train_queries = make_queries(d.train, d.vocab);
  auto test_queries = make_queries(d.test, d.vocab);
  auto instances =
      build_train_instances(kg, d.vocab, train_queries, cfg.retriever);
  ExperimentResult result{
      {}, {}, ModelParams<float>::init(cfg.model, cfg.init_seed)};
  result.loss_curve = train(result.params, instances, cfg.training);
  auto contexts = retrieve_all(kg, d.vocab, test_queries, cfg.retriever);
  result.test_report = evaluate(result.params, kg, contexts);
  return result;
}

struct AblationRow {
  std::string reader_variant;
  std::string retriever;
  RankingReport report;
};

// Reader variants x retrieval strategies over a shared dataset and seed.
inline std::vector<AblationRow> ablation_suite(
    const Dataset& d, const ExperimentConfig& base,
    const PathPatternModel& patterns) {
  struct Variant {
    const char* name;
    void (*apply)(ModelConfig&);
  };
  const Variant variants[] = {
      {"full", [](ModelConfig&) {}},
      {"no_cross_attention",
       [](ModelConfig& c) { c.no_cross_attention = true; }},
      {"full_attention", [](ModelConfig& c) { c.full_attention = true; }},
      {"no_subgraph_repr", [](ModelConfig& c) { c.no_subgraph_repr = true; }},
      {"no_query_repr", [](ModelConfig& c) { c.no_query_repr = true; }},
  };
  const Strategy retrievers[] = {Strategy::kBeam, Strategy::kBfs,
                                 Strategy::kOneHop};
  std::vector<AblationRow> rows;
  for (Strategy s : retrievers) {
    for (const auto& v : variants) {
      ExperimentConfig cfg = base;
      cfg.retriever.strategy = s;
      cfg.retriever.path_patterns = &patterns;
      v.apply(cfg.model);
      auto result = run_experiment(d, cfg);
      rows.push_back({v.name, strategy_name(s), result.test_report});
    }
  }
  return rows;
}

}  // namespace kgr3
