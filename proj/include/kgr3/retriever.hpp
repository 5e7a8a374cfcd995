#pragma once
// Subgraph retrieval strategies: deterministic BFS, seeded one-hop
// sampling, path-union over provided paths, and a built-in beam search
// over the adjacency with a pluggable per-hop scorer.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgr3/context.hpp"
#include "kgr3/kg.hpp"

namespace kgr3 {

struct RetrieverOptions {
  // The original MINERVA setup never says whether retrieval walks inverse
  // edges; default is to walk both directions.
  bool traverse_inverses = true;
};

namespace detail {

inline bool edge_allowed(const Vocabulary& vocab, RelationId r,
                         const RetrieverOptions& opt) {
  return opt.traverse_inverses || !vocab.is_inverse(r);
}

}  // namespace detail

// First `budget` edges in breadth-first order from the source: FIFO node
// frontier, per-node edges in adjacency order, each stored edge emitted at
// most once. Terminals are the nodes of the deepest discovered layer plus
// any node whose out-edges were never expanded.
inline SubgraphContext retrieve_bfs(const KnowledgeGraph& kg,
                                    const Vocabulary& vocab,
                                    const Query& query, std::size_t budget,
                                    const RetrieverOptions& opt = {}) {
  std::vector<Triple> edges;
  std::unordered_map<EntityId, int> depth;
  std::unordered_map<EntityId, int> expanded;
  std::queue<EntityId> frontier;
  depth[query.source] = 0;
  expanded[query.source] = 0;
  frontier.push(query.source);
  bool done = budget == 0;
  while (!frontier.empty() && !done) {
    EntityId u = frontier.front();
    frontier.pop();
    for (const auto& [r, t] : kg.out_edges(u)) {
      if (!detail::edge_allowed(vocab, r, opt)) continue;
      if (edges.size() == budget) {
        done = true;
        break;
      }
      edges.push_back({u, r, t});
      ++expanded[u];
      if (!depth.count(t)) {
        depth[t] = depth[u] + 1;
        expanded[t] = 0;
        frontier.push(t);
      }
    }
  }
  int max_depth = 0;
  for (const auto& [e, d] : depth) max_depth = std::max(max_depth, d);
  std::unordered_set<EntityId> terminals;
  for (const auto& [e, d] : depth)
    if (d == max_depth || expanded[e] == 0) terminals.insert(e);
  return make_context(query, std::move(edges), terminals, "bfs");
}

// Uniform sample without replacement of min(budget, degree) outgoing
// edges, re-emitted in adjacency order. All non-source nodes are terminal.
inline SubgraphContext retrieve_one_hop(const KnowledgeGraph& kg,
                                        const Vocabulary& vocab,
                                        const Query& query, std::size_t budget,
                                        std::uint64_t seed,
                                        const RetrieverOptions& opt = {}) {
  std::vector<std::size_t> candidates;
  const auto& adj = kg.out_edges(query.source);
  for (std::size_t i = 0; i < adj.size(); ++i)
    if (detail::edge_allowed(vocab, adj[i].first, opt)) candidates.push_back(i);

  std::size_t take = std::min(budget, candidates.size());
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates over candidate positions
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(take);
  std::sort(candidates.begin(), candidates.end());

  std::vector<Triple> edges;
  std::unordered_set<EntityId> terminals;
  for (std::size_t i : candidates) {
    edges.push_back({query.source, adj[i].first, adj[i].second});
    if (adj[i].second != query.source) terminals.insert(adj[i].second);
  }
  return make_context(query, std::move(edges), terminals, "onehop");
}

// Deduplicated union of path edges in first-occurrence order, truncated to
// the budget. Terminals are the end entities of paths that survive the
// truncation in full.
inline SubgraphContext retrieve_path_union(
    const Query& query, const std::vector<std::vector<Triple>>& paths,
    std::size_t budget) {
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    for (std::size_t s = 0; s < path.size(); ++s) {
      EntityId expect = s == 0 ? query.source : path[s - 1].tail;
      if (path[s].head != expect)
        throw std::invalid_argument(
            "path validation error: path " + std::to_string(p) + " step " +
            std::to_string(s) + " breaks the chain");
    }
  }
  std::vector<Triple> edges;
  std::unordered_set<Triple, TripleHash> seen;
  for (const auto& path : paths)
    for (const auto& e : path)
      if (edges.size() < budget && seen.insert(e).second) edges.push_back(e);
  std::unordered_set<Triple, TripleHash> kept(edges.begin(), edges.end());
  std::unordered_set<EntityId> terminals;
  for (const auto& path : paths) {
    if (path.empty()) continue;
    bool complete = true;
    for (const auto& e : path)
      if (!kept.count(e)) {
        complete = false;
        break;
      }
    if (complete) terminals.insert(path.back().tail);
  }
  return make_context(query, std::move(edges), terminals, "paths", paths);
}

// Scores one candidate hop given the query and the path walked so far.
using HopScorer = std::function<double(const Query& query,
                                       const std::vector<Triple>& path,
                                       const Triple& edge)>;

inline HopScorer uniform_scorer() {
  return [](const Query&, const std::vector<Triple>&, const Triple&) {
    return 0.0;
  };
}

// Up to beam_width paths of length <= max_hops, each chained from the
// source. Candidate order is (score desc, tail entity asc, relation asc);
// dead-end beams are dropped.
inline std::vector<std::vector<Triple>> beam_search_paths(
    const KnowledgeGraph& kg, const Vocabulary& vocab, const Query& query,
    std::size_t beam_width, std::size_t max_hops, const HopScorer& scorer,
    const RetrieverOptions& opt = {}) {
  if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  if (max_hops < 1) throw std::invalid_argument("max_hops must be >= 1");

  struct Beam {
    std::vector<Triple> path;
    double score = 0.0;
    EntityId at;
  };
  std::vector<Beam> beams{{{}, 0.0, query.source}};
  for (std::size_t hop = 0; hop < max_hops; ++hop) {
    std::vector<Beam> candidates;
    for (const auto& b : beams) {
      for (const auto& [r, t] : kg.out_edges(b.at)) {
        if (!detail::edge_allowed(vocab, r, opt)) continue;
        Triple e{b.at, r, t};
        Beam nb;
        nb.path = b.path;
        nb.path.push_back(e);
        nb.score = b.score + scorer(query, b.path, e);
        nb.at = t;
        candidates.push_back(std::move(nb));
      }
    }
    if (candidates.empty()) return {};
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Beam& x, const Beam& y) {
                       if (x.score != y.score) return x.score > y.score;
                       if (x.at != y.at) return x.at < y.at;
                       return x.path.back().relation < y.path.back().relation;
                     });
    if (candidates.size() > beam_width) candidates.resize(beam_width);
    beams = std::move(candidates);
  }
  std::vector<std::vector<Triple>> out;
  out.reserve(beams.size());
  for (auto& b : beams) out.push_back(std::move(b.path));
  return out;
}

// Removes the query's own edge (source, r, gold) and its inverse form
// from the context; node list and terminal flags are rebuilt over the
// surviving edges.
inline SubgraphContext strip_query_edge(const SubgraphContext& ctx,
                                        const Triple& query_triple,
                                        const Vocabulary& vocab) {
  Triple inverse{query_triple.tail, vocab.inverse_of(query_triple.relation),
                 query_triple.head};
  SubgraphContext out;
  out.query = ctx.query;
  out.strategy = ctx.strategy;
  for (const auto& e : ctx.edges)
    if (!(e == query_triple) && !(e == inverse)) out.edges.push_back(e);
  std::unordered_set<EntityId> terminals;
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i)
    if (ctx.terminal_flags[i]) terminals.insert(ctx.nodes[i]);
  out.nodes = collect_nodes(ctx.query.source, out.edges);
  for (EntityId n : out.nodes)
    out.terminal_flags.push_back(terminals.count(n) ? 1 : 0);
  for (const auto& p : ctx.paths) {
    bool clean = true;
    for (const auto& e : p)
      if (e == query_triple || e == inverse) {
        clean = false;
        break;
      }
    if (clean) out.paths.push_back(p);
  }
  return out;
}

// Fraction of contexts whose node set contains the paired gold target.
inline double coverage_stats(const std::vector<SubgraphContext>& contexts) {
  if (contexts.empty()) return 0.0;
  std::size_t covered = 0;
  for (const auto& ctx : contexts) {
    if (!ctx.query.gold_target)
      throw std::invalid_argument("coverage_stats: query has no gold target");
    EntityId gold = *ctx.query.gold_target;
    for (EntityId n : ctx.nodes)
      if (n == gold) {
        ++covered;
        break;
      }
  }
  return static_cast<double>(covered) / static_cast<double>(contexts.size());
}

}  // namespace kgr3
