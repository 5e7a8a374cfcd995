#pragma once
// Retrieved subgraph contexts and their JSON Lines serialization.

#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgr3/kg.hpp"

namespace kgr3 {

// Per-query retrieved edge set. nodes[0] is always the query source, even
// when edges is empty; terminal_flags parallels nodes and feeds the
// segment embedding channel.
struct SubgraphContext {
  Query query;
  std::vector<Triple> edges;
  std::vector<EntityId> nodes;
  std::vector<std::uint8_t> terminal_flags;
  std::string strategy;
  std::vector<std::vector<Triple>> paths;  // provenance, informed retrieval

  bool is_terminal(std::size_t node_pos) const {
    return terminal_flags[node_pos] != 0;
  }
};

// Deduplicated node list in first-appearance order, source first.
inline std::vector<EntityId> collect_nodes(EntityId source,
                                           const std::vector<Triple>& edges) {
  std::vector<EntityId> nodes;
  std::unordered_set<EntityId> seen;
  nodes.push_back(source);
  seen.insert(source);
  for (const auto& e : edges) {
    if (seen.insert(e.head).second) nodes.push_back(e.head);
    if (seen.insert(e.tail).second) nodes.push_back(e.tail);
  }
  return nodes;
}

inline SubgraphContext make_context(
    const Query& query, std::vector<Triple> edges,
    const std::unordered_set<EntityId>& terminal_nodes, std::string strategy,
    std::vector<std::vector<Triple>> paths = {}) {
  SubgraphContext ctx;
  ctx.query = query;
  ctx.edges = std::move(edges);
  ctx.nodes = collect_nodes(query.source, ctx.edges);
  ctx.terminal_flags.reserve(ctx.nodes.size());
  for (EntityId n : ctx.nodes)
    ctx.terminal_flags.push_back(terminal_nodes.count(n) ? 1 : 0);
  ctx.strategy = std::move(strategy);
  ctx.paths = std::move(paths);
  return ctx;
}

inline nlohmann::json context_to_json(const SubgraphContext& ctx) {
  nlohmann::json j;
  j["query"] = {ctx.query.source, ctx.query.relation};
  j["edges"] = nlohmann::json::array();
  for (const auto& e : ctx.edges)
    j["edges"].push_back({e.head, e.relation, e.tail});
  j["terminals"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i)
    if (ctx.terminal_flags[i]) j["terminals"].push_back(ctx.nodes[i]);
  if (!ctx.paths.empty()) {
    j["paths"] = nlohmann::json::array();
    for (const auto& p : ctx.paths) {
      nlohmann::json jp = nlohmann::json::array();
      for (const auto& e : p) jp.push_back({e.head, e.relation, e.tail});
      j["paths"].push_back(jp);
    }
  }
  j["strategy"] = ctx.strategy;
  return j;
}

inline SubgraphContext context_from_json(const nlohmann::json& j) {
  SubgraphContext ctx;
  ctx.query.source = j.at("query").at(0).get<EntityId>();
  ctx.query.relation = j.at("query").at(1).get<RelationId>();
  for (const auto& je : j.at("edges"))
    ctx.edges.push_back({je.at(0).get<EntityId>(), je.at(1).get<RelationId>(),
                         je.at(2).get<EntityId>()});
  ctx.nodes = collect_nodes(ctx.query.source, ctx.edges);
  std::unordered_set<EntityId> terminals;
  for (const auto& jt : j.at("terminals"))
    terminals.insert(jt.get<EntityId>());
  for (EntityId n : ctx.nodes)
    ctx.terminal_flags.push_back(terminals.count(n) ? 1 : 0);
  if (j.contains("paths")) {
    for (const auto& jp : j.at("paths")) {
      std::vector<Triple> path;
      for (const auto& je : jp)
        path.push_back({je.at(0).get<EntityId>(), je.at(1).get<RelationId>(),
                        je.at(2).get<EntityId>()});
      ctx.paths.push_back(std::move(path));
    }
  }
  ctx.strategy = j.value("strategy", std::string());
  return ctx;
}

inline void save_contexts(const std::string& path,
                          const std::vector<SubgraphContext>& contexts) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write context file " + path);
  for (const auto& ctx : contexts) f << context_to_json(ctx).dump() << '\n';
}

inline std::vector<SubgraphContext> load_contexts(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read context file " + path);
  std::vector<SubgraphContext> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(context_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace kgr3
