#pragma once
// Desk-scale fixtures: the canonical 8-triple KG used across tests and
// docs, and a seed-deterministic compositional generator (r1 then r2
// implies r_goal) whose held-out goal facts are reachable by exactly one
// 2-hop path.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgr3/kg.hpp"

namespace kgr3 {

struct Dataset {
  Vocabulary vocab;  // augmented
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;

  std::vector<Triple> all_facts() const {
    std::vector<Triple> all = train;
    all.insert(all.end(), valid.begin(), valid.end());
    all.insert(all.end(), test.begin(), test.end());
    return all;
  }

  KnowledgeGraph build_graph() const {
    Vocabulary v = vocab;  // augment_inverses needs a mutable copy
    std::vector<Triple> augmented;
    augmented.reserve(train.size() * 2);
    augmented = train;
    for (const auto& t : train)
      augmented.push_back({t.tail, vocab.inverse_of(t.relation), t.head});
    return KnowledgeGraph(std::move(augmented), all_facts(), vocab);
  }
};

inline Dataset desk_kg() {
  Dataset d;
  for (const char* e : {"a", "b", "c", "d", "e", "f"})
    d.vocab.intern_entity(e);
  for (const char* r : {"r1", "r2", "r3"}) d.vocab.intern_relation(r);
  d.vocab.augment();
  auto E = [&](const char* n) { return *d.vocab.find_entity(n); };
  auto R = [&](const char* n) { return *d.vocab.find_relation(n); };
  d.train = {{E("a"), R("r1"), E("b")}, {E("b"), R("r2"), E("c")},
             {E("a"), R("r1"), E("d")}, {E("d"), R("r2"), E("e")},
             {E("e"), R("r3"), E("c")}, {E("a"), R("r3"), E("f")},
             {E("f"), R("r1"), E("c")}, {E("b"), R("r3"), E("e")}};
  return d;
}

struct SynthOptions {
  std::size_t entities = 60;
  std::uint64_t seed = 0;
  std::size_t r1_edges_per_entity = 2;
  std::size_t r2_edges_per_entity = 2;
  double goal_train_fraction = 0.5;
};

// Base edges use relations r1 and r2; every entity pair (a, c) connected
// by exactly one a --r1--> b --r2--> c composition yields a goal fact
// (a, r_goal, c). Goal facts are split between train and test so the test
// targets are only reachable through their 2-hop path.
inline Dataset synth_kg(const SynthOptions& opt) {
  Dataset d;
  for (std::size_t i = 0; i < opt.entities; ++i)
    d.vocab.intern_entity("e" + std::to_string(i));
  RelationId r1 = d.vocab.intern_relation("r1");
  RelationId r2 = d.vocab.intern_relation("r2");
  RelationId rg = d.vocab.intern_relation("r_goal");
  d.vocab.augment();

  std::mt19937_64 rng(opt.seed);
  auto n = static_cast<EntityId>(opt.entities);
  std::uniform_int_distribution<EntityId> pick(0, n - 1);
  std::vector<Triple> base;
  std::set<std::pair<EntityId, EntityId>> r1_seen, r2_seen;
  for (EntityId a = 0; a < n; ++a)
    for (std::size_t k = 0; k < opt.r1_edges_per_entity; ++k) {
      EntityId b = pick(rng);
      if (b != a && r1_seen.insert({a, b}).second) base.push_back({a, r1, b});
    }
  for (EntityId b = 0; b < n; ++b)
    for (std::size_t k = 0; k < opt.r2_edges_per_entity; ++k) {
      EntityId c = pick(rng);
      if (c != b && r2_seen.insert({b, c}).second) base.push_back({b, r2, c});
    }

  // derivation count per (a, c) pair
  std::map<std::pair<EntityId, EntityId>, std::size_t> derivations;
  for (const auto& [a, b] : r1_seen)
    for (const auto& [b2, c] : r2_seen)
      if (b == b2 && a != c) ++derivations[{a, c}];
  std::vector<Triple> goals;
  for (const auto& [pair, count] : derivations)
    if (count == 1) goals.push_back({pair.first, rg, pair.second});

  std::shuffle(goals.begin(), goals.end(), rng);
  std::size_t train_goals = static_cast<std::size_t>(
      static_cast<double>(goals.size()) * opt.goal_train_fraction);
  d.train = base;
  d.train.insert(d.train.end(), goals.begin(), goals.begin() + train_goals);
  d.test.assign(goals.begin() + train_goals, goals.end());
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& dir) {
  auto write = [&](const std::string& name, const std::vector<Triple>& ts) {
    std::ofstream f(dir + "/" + name);
    if (!f) throw std::runtime_error("cannot write " + dir + "/" + name);
    for (const auto& t : ts)
      f << d.vocab.entity_name(t.head) << '\t'
        << d.vocab.relation_name(t.relation) << '\t'
        << d.vocab.entity_name(t.tail) << '\n';
  };
  write("train.txt", d.train);
  write("valid.txt", d.valid);
  write("test.txt", d.test);
}

inline Dataset load_dataset(const std::string& train_path,
                            const std::string& valid_path,
                            const std::string& test_path) {
  Dataset d;
  d.train = load_triples(train_path, d.vocab);
  d.vocab.freeze();
  if (!valid_path.empty()) d.valid = load_triples(valid_path, d.vocab);
  if (!test_path.empty()) d.test = load_triples(test_path, d.vocab);
  d.vocab.augment();
  return d;
}

}  // namespace kgr3
