#pragma once
// Knowledge graph core: vocabulary, triple store, adjacency indices and
// inverse-relation augmentation. Head-side queries (?, r, t) are rewritten
// as tail-side queries (t, r_inv, ?) so retrieval and scoring share one
// code path.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgr3 {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::size_t h = static_cast<std::size_t>(t.head);
    h = h * 1000003u + static_cast<std::size_t>(t.relation);
    h = h * 1000003u + static_cast<std::size_t>(t.tail);
    return h;
  }
};

// Dense, 0-based, first-seen-order name tables. Relation names hold the
// originals first; augment() appends one inverse per original.
class Vocabulary {
 public:
  EntityId intern_entity(const std::string& name) {
    auto it = entity_index_.find(name);
    if (it != entity_index_.end()) return it->second;
    if (frozen_) {
      throw std::runtime_error("vocabulary error: unknown entity '" + name +
                              "' with frozen vocabulary");
    }
    EntityId id = static_cast<EntityId>(entity_names_.size());
    entity_names_.push_back(name);
    entity_index_.emplace(name, id);
    return id;
  }

  RelationId intern_relation(const std::string& name) {
    auto it = relation_index_.find(name);
    if (it != relation_index_.end()) return it->second;
    if (frozen_) {
      throw std::runtime_error("vocabulary error: unknown relation '" + name +
                              "' with frozen vocabulary");
    }
    if (augmented_) {
      throw std::logic_error("cannot intern new relations after augmentation");
    }
    RelationId id = static_cast<RelationId>(relation_names_.size());
    relation_names_.push_back(name);
    relation_index_.emplace(name, id);
    return id;
  }

  // Appends one inverse relation per original. Idempotent.
  void augment() {
    if (augmented_) return;
    num_original_relations_ = relation_names_.size();
    for (std::size_t r = 0; r < num_original_relations_; ++r) {
      std::string inv = relation_names_[r] + "_inv";
      relation_names_.push_back(inv);
      relation_index_.emplace(inv, static_cast<RelationId>(
                                       num_original_relations_ + r));
    }
    augmented_ = true;
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  bool augmented() const { return augmented_; }

  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_relations() const { return relation_names_.size(); }
  std::size_t num_original_relations() const {
    return augmented_ ? num_original_relations_ : relation_names_.size();
  }

  RelationId inverse_of(RelationId r) const {
    if (!augmented_) throw std::logic_error("vocabulary not augmented");
    auto n = static_cast<RelationId>(num_original_relations_);
    return r < n ? r + n : r - n;
  }
  bool is_inverse(RelationId r) const {
    return augmented_ &&
           r >= static_cast<RelationId>(num_original_relations_);
  }

  const std::string& entity_name(EntityId e) const {
    return entity_names_.at(static_cast<std::size_t>(e));
  }
  const std::string& relation_name(RelationId r) const {
    return relation_names_.at(static_cast<std::size_t>(r));
  }
  std::optional<EntityId> find_entity(const std::string& name) const {
    auto it = entity_index_.find(name);
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<RelationId> find_relation(const std::string& name) const {
    auto it = relation_index_.find(name);
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const {
    return relation_names_;
  }

  // One name per line, line number = index. Relations are stored without
  // the synthesized inverses; augment() regenerates them.
  void save(const std::string& entities_path,
            const std::string& relations_path) const {
    std::ofstream ef(entities_path);
    if (!ef) throw std::runtime_error("cannot write " + entities_path);
    for (const auto& n : entity_names_) ef << n << '\n';
    std::ofstream rf(relations_path);
    if (!rf) throw std::runtime_error("cannot write " + relations_path);
    for (std::size_t r = 0; r < num_original_relations(); ++r)
      rf << relation_names_[r] << '\n';
  }

  static Vocabulary load(const std::string& entities_path,
                         const std::string& relations_path) {
    Vocabulary v;
    std::ifstream ef(entities_path);
    if (!ef) throw std::runtime_error("cannot read " + entities_path);
    std::string line;
    while (std::getline(ef, line))
      if (!line.empty()) v.intern_entity(line);
    std::ifstream rf(relations_path);
    if (!rf) throw std::runtime_error("cannot read " + relations_path);
    while (std::getline(rf, line))
      if (!line.empty()) v.intern_relation(line);
    return v;
  }

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::size_t num_original_relations_ = 0;
  bool augmented_ = false;
  bool frozen_ = false;
};

// A tail-side link prediction query (source, relation, ?). Head-side
// queries arrive here already rewritten through the inverse relation.
struct Query {
  EntityId source = 0;
  RelationId relation = 0;
  std::optional<EntityId> gold_target;

  friend bool operator==(const Query&, const Query&) = default;
};

// Tab-separated head<TAB>relation<TAB>tail, one per non-empty line.
inline std::vector<Triple> load_triples(const std::string& path,
                                        Vocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read triple file " + path);
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos
                                             : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos) {
      throw std::runtime_error("parse error: " + path + ":" +
                               std::to_string(line_no) +
                               ": expected 3 tab-separated fields");
    }
    Triple t;
    t.head = vocab.intern_entity(line.substr(0, t1));
    t.relation = vocab.intern_relation(line.substr(t1 + 1, t2 - t1 - 1));
    t.tail = vocab.intern_entity(line.substr(t2 + 1));
    triples.push_back(t);
  }
  return triples;
}

// For each (h, r, t) appends (t, r_inv, h); inverses follow the originals.
inline std::vector<Triple> augment_inverses(const std::vector<Triple>& triples,
                                            Vocabulary& vocab) {
  vocab.augment();
  std::vector<Triple> out;
  out.reserve(triples.size() * 2);
  out = triples;
  for (const auto& t : triples)
    out.push_back({t.tail, vocab.inverse_of(t.relation), t.head});
  return out;
}

// Immutable after construction; safe for concurrent readers.
class KnowledgeGraph {
 public:
  // `augmented_train` must already contain inverses. `all_split_facts`
  // covers train+valid+test in un-augmented form; the fact set stores
  // each with its inverse for the filtered evaluation protocol.
  KnowledgeGraph(std::vector<Triple> augmented_train,
                 const std::vector<Triple>& all_split_facts,
                 const Vocabulary& vocab)
      : triples_(std::move(augmented_train)),
        num_entities_(vocab.num_entities()),
        num_relations_(vocab.num_relations()) {
    out_adjacency_.resize(num_entities_);
    for (const auto& t : triples_) {
      check_bounds(t);
      out_adjacency_[static_cast<std::size_t>(t.head)].push_back(
          {t.relation, t.tail});
    }
    for (const auto& t : all_split_facts) {
      check_bounds(t);
      insert_fact(t);
      insert_fact({t.tail, vocab.inverse_of(t.relation), t.head});
    }
  }

  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }

  const std::vector<std::pair<RelationId, EntityId>>& out_edges(
      EntityId e) const {
    return out_adjacency_.at(static_cast<std::size_t>(e));
  }

  bool is_known_fact(const Triple& t) const { return fact_set_.count(t) > 0; }

  // All tails t with (source, relation, t) in any split; used by the
  // filtered ranking protocol.
  const std::vector<EntityId>& known_tails(EntityId source,
                                           RelationId relation) const {
    static const std::vector<EntityId> kEmpty;
    auto it = sr_index_.find(sr_key(source, relation));
    return it == sr_index_.end() ? kEmpty : it->second;
  }

 private:
  static std::uint64_t sr_key(EntityId source, RelationId relation) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(source))
            << 32) |
           static_cast<std::uint32_t>(relation);
  }

  void insert_fact(const Triple& t) {
    if (fact_set_.insert(t).second)
      sr_index_[sr_key(t.head, t.relation)].push_back(t.tail);
  }

  void check_bounds(const Triple& t) const {
    if (t.head < 0 || t.tail < 0 ||
        t.head >= static_cast<EntityId>(num_entities_) ||
        t.tail >= static_cast<EntityId>(num_entities_) || t.relation < 0 ||
        t.relation >= static_cast<RelationId>(num_relations_)) {
      throw std::out_of_range("triple index out of vocabulary bounds");
    }
  }

  std::vector<Triple> triples_;
  std::vector<std::vector<std::pair<RelationId, EntityId>>> out_adjacency_;
  std::unordered_set<Triple, TripleHash> fact_set_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> sr_index_;
  std::size_t num_entities_;
  std::size_t num_relations_;
};

}  // namespace kgr3
