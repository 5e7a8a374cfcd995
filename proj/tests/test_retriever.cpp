#include "kgr3/retriever.hpp"

#include <gtest/gtest.h>

#include <random>

#include "kgr3/pipeline.hpp"
#include "kgr3/synth.hpp"

namespace kgr3 {
namespace {

Query desk_query(const Dataset& d, const char* src, const char* rel) {
  return {*d.vocab.find_entity(src), *d.vocab.find_relation(rel),
          std::nullopt};
}

TEST(Bfs, DeskBudgetThreeOriginalsOnly) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  RetrieverOptions opt;
  opt.traverse_inverses = false;
  auto ctx = retrieve_bfs(kg, d.vocab, desk_query(d, "a", "r1"), 3, opt);
  ASSERT_EQ(ctx.edges.size(), 3u);
  EXPECT_EQ(ctx.edges[0], (Triple{0, 0, 1}));  // (a, r1, b)
  EXPECT_EQ(ctx.edges[1], (Triple{0, 0, 3}));  // (a, r1, d)
  EXPECT_EQ(ctx.edges[2], (Triple{0, 2, 5}));  // (a, r3, f)
  EXPECT_EQ(ctx.nodes[0], 0);
}

TEST(Bfs, BudgetZeroYieldsSourceOnly) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  auto ctx = retrieve_bfs(kg, d.vocab, desk_query(d, "a", "r1"), 0);
  EXPECT_TRUE(ctx.edges.empty());
  ASSERT_EQ(ctx.nodes.size(), 1u);
  EXPECT_EQ(ctx.nodes[0], 0);
  EXPECT_EQ(ctx.terminal_flags.size(), 1u);
}

TEST(Bfs, IsolatedSourceYieldsEmptyContext) {
  Vocabulary vocab;
  vocab.intern_entity("x");
  vocab.intern_entity("y");
  vocab.intern_entity("lone");
  vocab.intern_relation("r");
  vocab.augment();
  KnowledgeGraph kg({{0, 0, 1}, {1, 1, 0}}, {{0, 0, 1}}, vocab);
  auto ctx = retrieve_bfs(kg, vocab, {2, 0, std::nullopt}, 5);
  EXPECT_TRUE(ctx.edges.empty());
  EXPECT_EQ(ctx.nodes, (std::vector<EntityId>{2}));
}

TEST(Bfs, TerminalsAreDeepestLayer) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  RetrieverOptions opt;
  opt.traverse_inverses = false;
  // budget 4: (a,r1,b),(a,r1,d),(a,r3,f),(b,r2,c) -> c at depth 2
  auto ctx = retrieve_bfs(kg, d.vocab, desk_query(d, "a", "r1"), 4, opt);
  ASSERT_EQ(ctx.edges.size(), 4u);
  std::unordered_map<EntityId, bool> terminal;
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i)
    terminal[ctx.nodes[i]] = ctx.terminal_flags[i] != 0;
  EXPECT_TRUE(terminal.at(2));   // c: deepest layer
  EXPECT_TRUE(terminal.at(3));   // d: discovered, never expanded
  EXPECT_TRUE(terminal.at(5));   // f: discovered, never expanded
  EXPECT_FALSE(terminal.at(0));  // a expanded
}

TEST(OneHop, FullNeighborhoodInAdjacencyOrder) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  RetrieverOptions opt;
  opt.traverse_inverses = false;
  auto ctx =
      retrieve_one_hop(kg, d.vocab, desk_query(d, "a", "r1"), 10, 42, opt);
  ASSERT_EQ(ctx.edges.size(), 3u);
  EXPECT_EQ(ctx.edges[0], (Triple{0, 0, 1}));
  EXPECT_EQ(ctx.edges[1], (Triple{0, 0, 3}));
  EXPECT_EQ(ctx.edges[2], (Triple{0, 2, 5}));
  // all non-source nodes terminal
  for (std::size_t i = 1; i < ctx.nodes.size(); ++i)
    EXPECT_TRUE(ctx.terminal_flags[i]);
  EXPECT_FALSE(ctx.terminal_flags[0]);
}

TEST(OneHop, SeedReproducible) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  auto q = desk_query(d, "a", "r1");
  auto a = retrieve_one_hop(kg, d.vocab, q, 2, 7);
  auto b = retrieve_one_hop(kg, d.vocab, q, 2, 7);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.nodes, b.nodes);
  EXPECT_EQ(a.edges.size(), 2u);
  auto c = retrieve_one_hop(kg, d.vocab, q, 2, 8);
  EXPECT_EQ(c.edges.size(), 2u);  // same size, possibly different sample
}

TEST(PathUnion, DisjointPaths) {
  Dataset d = desk_kg();
  Query q = desk_query(d, "a", "r2");
  // a->b->c and a->d
  std::vector<std::vector<Triple>> paths{
      {{0, 0, 1}, {1, 1, 2}},
      {{0, 0, 3}},
  };
  auto ctx = retrieve_path_union(q, paths, 10);
  EXPECT_EQ(ctx.edges.size(), 3u);
  std::unordered_map<EntityId, bool> terminal;
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i)
    terminal[ctx.nodes[i]] = ctx.terminal_flags[i] != 0;
  EXPECT_TRUE(terminal.at(2));
  EXPECT_TRUE(terminal.at(3));
  EXPECT_FALSE(terminal.at(0));
  EXPECT_FALSE(terminal.at(1));
}

TEST(PathUnion, DuplicatePathIsIdempotent) {
  Dataset d = desk_kg();
  Query q = desk_query(d, "a", "r2");
  std::vector<Triple> path{{0, 0, 1}, {1, 1, 2}};
  auto once = retrieve_path_union(q, {path}, 10);
  auto twice = retrieve_path_union(q, {path, path}, 10);
  EXPECT_EQ(once.edges, twice.edges);
  EXPECT_EQ(once.nodes, twice.nodes);
  EXPECT_EQ(once.terminal_flags, twice.terminal_flags);
}

TEST(PathUnion, ChainViolationNamesPathAndStep) {
  Dataset d = desk_kg();
  Query q = desk_query(d, "a", "r2");
  std::vector<std::vector<Triple>> paths{{{0, 0, 1}, {3, 1, 2}}};
  try {
    retrieve_path_union(q, paths, 10);
    FAIL() << "expected validation error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("path 0"), std::string::npos);
    EXPECT_NE(msg.find("step 1"), std::string::npos);
  }
}

TEST(PathUnion, TruncationDropsTerminalOfIncompletePath) {
  Dataset d = desk_kg();
  Query q = desk_query(d, "a", "r2");
  std::vector<std::vector<Triple>> paths{
      {{0, 0, 1}, {1, 1, 2}},  // survives
      {{0, 0, 3}, {3, 1, 4}},  // second edge truncated
  };
  auto ctx = retrieve_path_union(q, paths, 3);
  EXPECT_EQ(ctx.edges.size(), 3u);
  std::unordered_map<EntityId, bool> terminal;
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i)
    terminal[ctx.nodes[i]] = ctx.terminal_flags[i] != 0;
  EXPECT_TRUE(terminal.at(2));
  EXPECT_FALSE(terminal.at(3));
}

TEST(BeamSearch, DeskUniformScorerBeamTwoOneHop) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  RetrieverOptions opt;
  opt.traverse_inverses = false;
  auto paths = beam_search_paths(kg, d.vocab, desk_query(d, "a", "r1"), 2, 1,
                                 uniform_scorer(), opt);
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[0], (std::vector<Triple>{{0, 0, 1}}));  // (a, r1, b)
  EXPECT_EQ(paths[1], (std::vector<Triple>{{0, 0, 3}}));  // (a, r1, d)
}

TEST(BeamSearch, ScorerPreferringRelationWins) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  RetrieverOptions opt;
  opt.traverse_inverses = false;
  RelationId r3 = *d.vocab.find_relation("r3");
  HopScorer prefer_r3 = [r3](const Query&, const std::vector<Triple>&,
                             const Triple& e) {
    return e.relation == r3 ? 1.0 : 0.0;
  };
  auto paths = beam_search_paths(kg, d.vocab, desk_query(d, "a", "r1"), 1, 2,
                                 prefer_r3, opt);
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0][0], (Triple{0, 2, 5}));  // starts (a, r3, f)
}

TEST(BeamSearch, PreconditionsRejected) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  auto q = desk_query(d, "a", "r1");
  EXPECT_THROW(
      beam_search_paths(kg, d.vocab, q, 0, 1, uniform_scorer()),
      std::invalid_argument);
  EXPECT_THROW(
      beam_search_paths(kg, d.vocab, q, 1, 0, uniform_scorer()),
      std::invalid_argument);
}

TEST(BeamSearch, DeadEndSourceYieldsNoPaths) {
  Vocabulary vocab;
  vocab.intern_entity("x");
  vocab.intern_entity("lone");
  vocab.intern_relation("r");
  vocab.augment();
  KnowledgeGraph kg({{0, 0, 0}}, {}, vocab);
  auto paths = beam_search_paths(kg, vocab, {1, 0, std::nullopt}, 3, 2,
                                 uniform_scorer());
  EXPECT_TRUE(paths.empty());
}

TEST(StripQueryEdge, RemovesExactlyTheQueryTriple) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  Query q{0, 0, 1};  // (a, r1, b)
  auto ctx = retrieve_bfs(kg, d.vocab, q, 5);
  std::size_t before = ctx.edges.size();
  auto stripped = strip_query_edge(ctx, {0, 0, 1}, d.vocab);
  EXPECT_EQ(stripped.edges.size(), before - 1);
  for (const auto& e : stripped.edges) EXPECT_NE(e, (Triple{0, 0, 1}));
}

TEST(StripQueryEdge, IdentityWhenAbsent) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  Query q{0, 1, 2};
  auto ctx = retrieve_bfs(kg, d.vocab, q, 3);
  auto stripped = strip_query_edge(ctx, {2, 1, 4}, d.vocab);
  EXPECT_EQ(stripped.edges, ctx.edges);
  EXPECT_EQ(stripped.nodes, ctx.nodes);
  EXPECT_EQ(stripped.terminal_flags, ctx.terminal_flags);
}

TEST(StripQueryEdge, RemovesInverseForm) {
  Dataset d = desk_kg();
  Query q{1, 3, 0};  // (b, r1_inv, ?) with gold a
  SubgraphContext ctx =
      make_context(q, {{1, 3, 0}, {1, 1, 2}}, {2}, "manual");
  auto stripped = strip_query_edge(ctx, {0, 0, 1}, d.vocab);
  ASSERT_EQ(stripped.edges.size(), 1u);
  EXPECT_EQ(stripped.edges[0], (Triple{1, 1, 2}));
}

TEST(Coverage, DeskFractionOneHalf) {
  Dataset d = desk_kg();
  std::vector<SubgraphContext> ctxs;
  for (int i = 0; i < 4; ++i) {
    Query q{0, 0, 1};  // gold b
    bool covered = i < 2;
    ctxs.push_back(make_context(
        q, covered ? std::vector<Triple>{{0, 0, 1}} : std::vector<Triple>{},
        {}, "manual"));
  }
  EXPECT_DOUBLE_EQ(coverage_stats(ctxs), 0.5);
}

TEST(Coverage, MissingGoldRejected) {
  std::vector<SubgraphContext> ctxs{
      make_context({0, 0, std::nullopt}, {}, {}, "manual")};
  EXPECT_THROW(coverage_stats(ctxs), std::invalid_argument);
}

// Property block: budget law, source inclusion, subgraph soundness and
// determinism over random queries on the synthetic KG.
TEST(Properties, RandomizedRetrievalInvariants) {
  Dataset d = synth_kg({.entities = 30, .seed = 11});
  KnowledgeGraph kg = d.build_graph();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<EntityId> ent(0, 29);
  std::uniform_int_distribution<RelationId> rel(
      0, static_cast<RelationId>(d.vocab.num_relations()) - 1);
  std::unordered_set<Triple, TripleHash> stored(kg.triples().begin(),
                                                kg.triples().end());
  for (int trial = 0; trial < 50; ++trial) {
    Query q{ent(rng), rel(rng), std::nullopt};
    std::size_t budget = trial % 7;
    for (int mode = 0; mode < 3; ++mode) {
      SubgraphContext ctx;
      if (mode == 0)
        ctx = retrieve_bfs(kg, d.vocab, q, budget);
      else if (mode == 1)
        ctx = retrieve_one_hop(kg, d.vocab, q, budget, 17);
      else {
        auto paths = beam_search_paths(kg, d.vocab, q, 3, 2,
                                       uniform_scorer());
        ctx = retrieve_path_union(q, paths, budget);
      }
      EXPECT_LE(ctx.edges.size(), budget);
      ASSERT_FALSE(ctx.nodes.empty());
      EXPECT_EQ(ctx.nodes[0], q.source);
      EXPECT_EQ(ctx.terminal_flags.size(), ctx.nodes.size());
      for (const auto& e : ctx.edges) EXPECT_TRUE(stored.count(e));
      // every edge endpoint appears in nodes
      std::unordered_set<EntityId> nodes(ctx.nodes.begin(), ctx.nodes.end());
      for (const auto& e : ctx.edges) {
        EXPECT_TRUE(nodes.count(e.head));
        EXPECT_TRUE(nodes.count(e.tail));
      }
    }
  }
}

TEST(PathPatterns, DeskRuleForParallelEdge) {
  Dataset d = desk_kg();
  KnowledgeGraph kg = d.build_graph();
  auto model = learn_path_patterns(kg, d.vocab, d.train, 2);
  RelationId r2 = *d.vocab.find_relation("r2");
  RelationId r3 = *d.vocab.find_relation("r3");
  // (b, r3, e) is paralleled by b -r2-> c -r3^-1-> e
  ASSERT_TRUE(model.counts.count(r3));
  const auto& rules = model.counts.at(r3);
  std::vector<RelationId> seq{r2, d.vocab.inverse_of(r3)};
  ASSERT_TRUE(rules.count(seq));
  EXPECT_GE(rules.at(seq), 1.0);
}

TEST(PathPatterns, SynthGoalDominatedByComposition) {
  Dataset d = synth_kg({.entities = 60, .seed = 3});
  KnowledgeGraph kg = d.build_graph();
  auto model = learn_path_patterns(kg, d.vocab, d.train, 2);
  RelationId r1 = *d.vocab.find_relation("r1");
  RelationId r2 = *d.vocab.find_relation("r2");
  RelationId rg = *d.vocab.find_relation("r_goal");
  ASSERT_TRUE(model.counts.count(rg));
  const auto& rules = model.counts.at(rg);
  std::vector<RelationId> comp{r1, r2};
  ASSERT_TRUE(rules.count(comp));
  double best = 0.0;
  for (const auto& [seq, w] : rules) best = std::max(best, w);
  EXPECT_EQ(rules.at(comp), best);
}

TEST(PathPatterns, ScorerSumsMatchingPrefixes) {
  PathPatternModel model;
  model.counts[7][{1, 2}] = 3.0;
  model.counts[7][{1, 4}] = 2.0;
  model.counts[7][{5}] = 1.0;
  auto scorer = pattern_scorer(model);
  Query q{0, 7, std::nullopt};
  EXPECT_DOUBLE_EQ(scorer(q, {}, {0, 1, 1}), 5.0);
  EXPECT_DOUBLE_EQ(scorer(q, {}, {0, 5, 1}), 1.0);
  EXPECT_DOUBLE_EQ(scorer(q, {{0, 1, 1}}, {1, 2, 2}), 3.0);
  EXPECT_DOUBLE_EQ(scorer(q, {{0, 1, 1}}, {1, 9, 2}), 0.0);
  Query unknown{0, 8, std::nullopt};
  EXPECT_DOUBLE_EQ(scorer(unknown, {}, {0, 1, 1}), 0.0);
}

TEST(PathPatterns, BeamWithPatternsCoversSynthGoals) {
  Dataset d = synth_kg({.entities = 60, .seed = 2});
  KnowledgeGraph kg = d.build_graph();
  auto model = learn_path_patterns(kg, d.vocab, d.train, 2);
  auto scorer = pattern_scorer(model);
  int covered = 0, total = 0;
  for (const auto& t : d.test) {
    Query q{t.head, t.relation, t.tail};
    auto paths = beam_search_paths(kg, d.vocab, q, 8, 2, scorer);
    auto ctx = retrieve_path_union(q, paths, 16);
    ++total;
    bool hit = false;
    for (EntityId n : ctx.nodes) hit = hit || n == t.tail;
    if (hit) ++covered;
  }
  EXPECT_GE(static_cast<double>(covered) / total, 0.8);
}

TEST(Properties, BitIdenticalReruns) {
  Dataset d = synth_kg({.entities = 25, .seed = 4});
  KnowledgeGraph kg = d.build_graph();
  Query q{3, 0, std::nullopt};
  auto a1 = retrieve_bfs(kg, d.vocab, q, 6);
  auto a2 = retrieve_bfs(kg, d.vocab, q, 6);
  EXPECT_EQ(a1.edges, a2.edges);
  EXPECT_EQ(a1.terminal_flags, a2.terminal_flags);
  auto b1 = retrieve_one_hop(kg, d.vocab, q, 4, 9);
  auto b2 = retrieve_one_hop(kg, d.vocab, q, 4, 9);
  EXPECT_EQ(b1.edges, b2.edges);
  HopEmbeddings emb = pretrain_hop_embeddings(kg);
  auto p1 = beam_search_paths(kg, d.vocab, q, 4, 2, embedding_scorer(emb));
  auto p2 = beam_search_paths(kg, d.vocab, q, 4, 2, embedding_scorer(emb));
  EXPECT_EQ(p1, p2);
}

}  // namespace
}  // namespace kgr3
