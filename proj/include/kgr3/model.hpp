#pragma once
// Two-tower Transformer reader: query tower (3 tokens, full attention),
// subgraph tower (graph-induced masked attention), cross-attention fusion
// from query states onto subgraph states, and a weight-tied entity scoring
// head.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgr3/autograd.hpp"
#include "kgr3/context.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/tensor.hpp"

namespace kgr3 {

struct ModelConfig {
  std::size_t layers = 3;
  std::size_t heads = 8;
  std::size_t hidden = 320;
  std::size_t ffn_dim = 1280;
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;  // augmented count
  bool no_cross_attention = false;
  bool full_attention = false;
  bool no_subgraph_repr = false;
  bool no_query_repr = false;

  std::size_t head_dim() const { return hidden / heads; }

  void validate() const {
    if (heads == 0 || hidden % heads != 0)
      throw std::invalid_argument("hidden must be divisible by heads");
    if (num_entities == 0 || num_relations == 0)
      throw std::invalid_argument("vocabulary sizes must be set");
    if (no_subgraph_repr && no_query_repr)
      throw std::invalid_argument(
          "no_subgraph_repr and no_query_repr are mutually exclusive");
  }
};

// Token type channel indices.
inline constexpr std::int32_t kTypeEntity = 0;
inline constexpr std::int32_t kTypeRelation = 1;
// Segment channel indices.
inline constexpr std::int32_t kSegOther = 0;
inline constexpr std::int32_t kSegTerminal = 1;

// Named parameter tensors; iteration order (std::map) is the canonical
// order for checkpoints and optimizer state.
template <typename T>
struct ModelParams {
  ModelConfig config;
  std::map<std::string, Tensor<T>> tensors;

  static std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>
  shape_spec(const ModelConfig& c) {
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> s;
    const std::size_t d = c.hidden;
    s.push_back({"entity_table", {c.num_entities, d}});
    s.push_back({"relation_table", {c.num_relations, d}});
    s.push_back({"type_table", {2, d}});
    s.push_back({"segment_table", {2, d}});
    s.push_back({"cls_vector", {1, d}});
    s.push_back({"mask_token_vector", {1, d}});
    s.push_back({"head.W", {d, 2 * d}});
    for (const char* stack : {"query", "subgraph", "cross"}) {
      for (std::size_t l = 0; l < c.layers; ++l) {
        std::string p = std::string(stack) + ".l" + std::to_string(l) + ".";
        s.push_back({p + "Wq", {d, d}});
        s.push_back({p + "Wk", {d, d}});
        s.push_back({p + "Wv", {d, d}});
        s.push_back({p + "Wo", {d, d}});
        s.push_back({p + "ln1.g", {1, d}});
        s.push_back({p + "ln1.b", {1, d}});
        s.push_back({p + "ffn.W1", {c.ffn_dim, d}});
        s.push_back({p + "ffn.b1", {1, c.ffn_dim}});
        s.push_back({p + "ffn.W2", {d, c.ffn_dim}});
        s.push_back({p + "ffn.b2", {1, d}});
        s.push_back({p + "ln2.g", {1, d}});
        s.push_back({p + "ln2.b", {1, d}});
      }
    }
    return s;
  }

  static ModelParams init(const ModelConfig& config, std::uint64_t seed,
                          T stddev = T(0.02)) {
    config.validate();
    ModelParams p;
    p.config = config;
    std::mt19937_64 rng(seed);
    for (const auto& [name, shape] : shape_spec(config)) {
      bool is_gain = name.ends_with("ln1.g") || name.ends_with("ln2.g");
      bool is_bias = name.ends_with(".b") || name.ends_with("b1") ||
                     name.ends_with("b2");
      if (is_gain)
        p.tensors.emplace(name, Tensor<T>::ones(shape.first, shape.second));
      else if (is_bias)
        p.tensors.emplace(name, Tensor<T>::zeros(shape.first, shape.second));
      else
        p.tensors.emplace(name, Tensor<T>::randn(shape.first, shape.second,
                                                 rng, stddev));
    }
    return p;
  }

  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::invalid_argument("unknown parameter " + name);
    return it->second;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    for (const auto& [name, t] : tensors)
      out.tensors.emplace(name, t.template cast<U>());
    return out;
  }
};

// Node tokens in ctx.nodes order followed by edge tokens in ctx.edges
// order; every edge is its own token even under a repeated predicate.
struct TokenSequence {
  struct Token {
    std::int32_t index;  // entity id for node tokens, relation id for edges
    bool is_edge;
    bool terminal;  // segment channel; always false for edge tokens
    bool is_mask = false;  // the <MASK> answer slot (no_query_repr ablation)
  };
  std::vector<Token> tokens;
  std::size_t node_count = 0;
  std::size_t edge_count = 0;

  std::size_t size() const { return tokens.size(); }
};

inline TokenSequence build_tokens(const SubgraphContext& ctx) {
  TokenSequence seq;
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i)
    seq.tokens.push_back({ctx.nodes[i], false, ctx.terminal_flags[i] != 0});
  for (const auto& e : ctx.edges)
    seq.tokens.push_back({e.relation, true, false});
  seq.node_count = ctx.nodes.size();
  seq.edge_count = ctx.edges.size();
  return seq;
}

// Graph-induced attention structure: node-node, edge-edge, head-edge and
// edge-tail incidence per triple, and the diagonal. Symmetric.
inline BoolMask build_attention_mask(const TokenSequence& seq,
                                     const SubgraphContext& ctx,
                                     bool full_attention = false) {
  const std::size_t m = seq.node_count;
  const std::size_t n = seq.edge_count;
  BoolMask mask(m + n, m + n);
  if (full_attention) {
    std::fill(mask.allow.begin(), mask.allow.end(), std::uint8_t(1));
    return mask;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) mask.at(i, j) = 1;
  for (std::size_t i = m; i < m + n; ++i)
    for (std::size_t j = m; j < m + n; ++j) mask.at(i, j) = 1;
  std::unordered_map<EntityId, std::size_t> node_pos;
  for (std::size_t i = 0; i < m; ++i)
    node_pos[seq.tokens[i].index] = i;
  for (std::size_t k = 0; k < n; ++k) {
    const Triple& e = ctx.edges[k];
    std::size_t et = m + k;
    std::size_t h = node_pos.at(e.head);
    std::size_t t = node_pos.at(e.tail);
    mask.at(h, et) = mask.at(et, h) = 1;
    mask.at(t, et) = mask.at(et, t) = 1;
  }
  for (std::size_t i = 0; i < m + n; ++i) mask.at(i, i) = 1;
  return mask;
}

template <typename T>
struct ReaderOutput {
  Tensor<T> logits;            // 1 x |E|
  Tensor<T> fused_query_repr;  // 1 x d
  Tensor<T> source_ctx_repr;   // 1 x d
};

// Builds reader forward passes on a tape. Parameters are registered as
// differentiable leaves once per tape; gradients are read back by name
// after backward().
template <typename T>
class ReaderGraph {
 public:
  using Id = typename Tape<T>::Id;

  ReaderGraph(Tape<T>& tape, const ModelParams<T>& params,
              bool requires_grad = true)
      : tape_(tape), config_(params.config) {
    config_.validate();
    for (const auto& [name, tensor] : params.tensors)
      leaves_.emplace(name, tape_.leaf(tensor, requires_grad));
  }

  const ModelConfig& config() const { return config_; }

  Id param(const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end())
      throw std::invalid_argument("unknown parameter " + name);
    return it->second;
  }

  Tensor<T> gradient(const std::string& name) const {
    return tape_.grad(param(name));
  }

  // Token embedding: lookup + type + segment, no positional term.
  Id embed_subgraph(const TokenSequence& seq) {
    std::vector<Id> rows;
    std::vector<std::int32_t> ent_idx, rel_idx, type_idx, seg_idx;
    for (const auto& tok : seq.tokens) {
      type_idx.push_back(tok.is_edge ? kTypeRelation : kTypeEntity);
      seg_idx.push_back(tok.terminal ? kSegTerminal : kSegOther);
    }
    // lookups kept in token order by emitting per-token single-row gathers
    // only where the mask token interrupts a run
    std::vector<Id> parts;
    std::vector<std::int32_t> run;
    bool run_is_edge = false;
    auto flush = [&]() {
      if (run.empty()) return;
      parts.push_back(tape_.gather_rows(
          param(run_is_edge ? "relation_table" : "entity_table"), run));
      run.clear();
    };
    for (const auto& tok : seq.tokens) {
      if (tok.is_mask) {
        flush();
        parts.push_back(param("mask_token_vector"));
        continue;
      }
      if (!run.empty() && run_is_edge != tok.is_edge) flush();
      run_is_edge = tok.is_edge;
      run.push_back(tok.index);
    }
    flush();
    Id lookup = parts.size() == 1 ? parts[0] : tape_.concat_rows(parts);
    Id typed = tape_.add(lookup, tape_.gather_rows(param("type_table"),
                                                   std::move(type_idx)));
    return tape_.add(typed, tape_.gather_rows(param("segment_table"),
                                              std::move(seg_idx)));
  }

  // [CLS], source entity, query relation; segment "other" throughout.
  Id embed_query(const Query& query) {
    Id cls = tape_.add(param("cls_vector"),
                       tape_.gather_rows(param("type_table"), {kTypeEntity}));
    Id src = tape_.add(
        tape_.gather_rows(param("entity_table"), {query.source}),
        tape_.gather_rows(param("type_table"), {kTypeEntity}));
    Id rel = tape_.add(
        tape_.gather_rows(param("relation_table"), {query.relation}),
        tape_.gather_rows(param("type_table"), {kTypeRelation}));
    Id stacked = tape_.concat_rows({cls, src, rel});
    std::vector<std::int32_t> segs(3, kSegOther);
    return tape_.add(stacked,
                     tape_.gather_rows(param("segment_table"), segs));
  }

  // One post-norm Transformer sublayer pair: masked multi-head attention
  // (+residual+LN) then position-wise FFN (+residual+LN).
  Id self_attention_layer(Id states, const BoolMask& mask,
                          const std::string& prefix) {
    Id attended = multi_head_attention(states, states, &mask, prefix);
    return ffn_block(residual_norm(states, attended, prefix + "ln1"), prefix);
  }

  // Queries from the query tower, keys/values from subgraph states, no
  // attention mask.
  Id cross_attention_layer(Id query_states, Id subgraph_states,
                           const std::string& prefix) {
    Id attended =
        multi_head_attention(query_states, subgraph_states, nullptr, prefix);
    return ffn_block(residual_norm(query_states, attended, prefix + "ln1"),
                     prefix);
  }

  // W_head.concat(fused, source_ctx), then inner product with the entity
  // lookup table (weight tying).
  Id score_entities(Id fused_query_repr, Id source_ctx_repr) {
    Id feature = tape_.matmul_nt(
        tape_.concat_cols(fused_query_repr, source_ctx_repr),
        param("head.W"));
    return tape_.matmul_nt(feature, param("entity_table"));
  }

  // Ablation heads score a bare d-vector against the entity table.
  Id score_single(Id repr) { return tape_.matmul_nt(repr, param("entity_table")); }

  struct Forward {
    Id logits;
    Id fused_query_repr = -1;
    Id source_ctx_repr = -1;
  };

  Forward forward(const Query& query, const SubgraphContext& ctx) {
    Forward out;
    const auto& c = config_;

    if (c.no_subgraph_repr) {
      // query tower only ([CLS]-only baseline)
      Id q = encode_query(query);
      Id cls = tape_.slice_rows(q, 0, 1);
      out.fused_query_repr = cls;
      out.logits = score_single(cls);
      return out;
    }

    TokenSequence seq = build_tokens(ctx);
    SubgraphContext local = ctx;
    if (c.no_query_repr) {
      // attach (source, r, <MASK>) and read the answer off the MASK slot
      local.edges.push_back({query.source, query.relation, kMaskNodeId});
      seq.tokens.push_back({kMaskNodeId, false, false, true});
      std::size_t mask_pos = seq.node_count;
      // keep node tokens contiguous: move the mask node before edge tokens
      std::rotate(seq.tokens.begin() + mask_pos,
                  seq.tokens.end() - 1, seq.tokens.end());
      seq.node_count += 1;
      seq.tokens.push_back({query.relation, true, false});
      seq.edge_count += 1;
      local.nodes.push_back(kMaskNodeId);
      local.terminal_flags.push_back(0);
      Id sub = encode_subgraph(seq, local);
      Id mask_repr = tape_.slice_rows(sub, mask_pos, mask_pos + 1);
      out.source_ctx_repr = tape_.slice_rows(sub, 0, 1);
      out.logits = score_single(mask_repr);
      return out;
    }

    Id sub = encode_subgraph(seq, local);
    Id q = encode_query(query);
    if (!c.no_cross_attention) {
      for (std::size_t l = 0; l < c.layers; ++l)
        q = cross_attention_layer(q, sub, "cross.l" + std::to_string(l) + ".");
    }
    out.fused_query_repr = tape_.slice_rows(q, 0, 1);
    out.source_ctx_repr = tape_.slice_rows(sub, 0, 1);
    out.logits = score_entities(out.fused_query_repr, out.source_ctx_repr);
    return out;
  }

  Id loss(const Forward& f, EntityId gold) {
    return tape_.cross_entropy(f.logits, gold);
  }

  ReaderOutput<T> output(const Forward& f) const {
    ReaderOutput<T> out;
    out.logits = tape_.value(f.logits);
    if (f.fused_query_repr >= 0)
      out.fused_query_repr = tape_.value(f.fused_query_repr);
    if (f.source_ctx_repr >= 0)
      out.source_ctx_repr = tape_.value(f.source_ctx_repr);
    return out;
  }

  Id encode_subgraph(const TokenSequence& seq, const SubgraphContext& ctx) {
    BoolMask mask = build_attention_mask(seq, ctx, config_.full_attention);
    Id h = embed_subgraph(seq);
    for (std::size_t l = 0; l < config_.layers; ++l)
      h = self_attention_layer(h, mask,
                               "subgraph.l" + std::to_string(l) + ".");
    return h;
  }

  Id encode_query(const Query& query) {
    Id h = embed_query(query);
    BoolMask full(3, 3);
    std::fill(full.allow.begin(), full.allow.end(), std::uint8_t(1));
    for (std::size_t l = 0; l < config_.layers; ++l)
      h = self_attention_layer(h, full, "query.l" + std::to_string(l) + ".");
    return h;
  }

  // Sentinel entity index carried by the <MASK> node token; never used as
  // a lookup index.
  static constexpr std::int32_t kMaskNodeId = -1;

 private:
  Id multi_head_attention(Id q_states, Id kv_states, const BoolMask* mask,
                          const std::string& prefix) {
    const std::size_t heads = config_.heads;
    const std::size_t dk = config_.head_dim();
    Id Q = tape_.matmul_nt(q_states, param(prefix + "Wq"));
    Id K = tape_.matmul_nt(kv_states, param(prefix + "Wk"));
    Id V = tape_.matmul_nt(kv_states, param(prefix + "Wv"));
    const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(dk));
    std::vector<Id> head_outputs;
    for (std::size_t k = 0; k < heads; ++k) {
      Id Qk = tape_.slice_cols(Q, k * dk, (k + 1) * dk);
      Id Kk = tape_.slice_cols(K, k * dk, (k + 1) * dk);
      Id Vk = tape_.slice_cols(V, k * dk, (k + 1) * dk);
      Id scores = tape_.scale(tape_.matmul_nt(Qk, Kk), inv_sqrt_dk);
      Id weights = mask ? tape_.masked_softmax_rows(scores, *mask)
                        : tape_.softmax_rows(scores);
      head_outputs.push_back(tape_.matmul(weights, Vk));
    }
    Id concat = head_outputs[0];
    for (std::size_t k = 1; k < heads; ++k)
      concat = tape_.concat_cols(concat, head_outputs[k]);
    return tape_.matmul_nt(concat, param(prefix + "Wo"));
  }

  Id residual_norm(Id residual, Id sublayer_out, const std::string& ln) {
    return tape_.layer_norm_rows(tape_.add(residual, sublayer_out),
                                 param(ln + ".g"), param(ln + ".b"));
  }

  Id ffn_block(Id states, const std::string& prefix) {
    Id h = tape_.relu(tape_.add(tape_.matmul_nt(states, param(prefix + "ffn.W1")),
                                param(prefix + "ffn.b1")));
    Id o = tape_.add(tape_.matmul_nt(h, param(prefix + "ffn.W2")),
                     param(prefix + "ffn.b2"));
    return residual_norm(states, o, prefix + "ln2");
  }

  Tape<T>& tape_;
  ModelConfig config_;
  std::map<std::string, Id> leaves_;
};

// Numerically stabilized -log softmax(logits)[gold] without a tape.
template <typename T>
T cross_entropy_loss(const Tensor<T>& logits, EntityId gold) {
  if (logits.rows != 1) throw std::invalid_argument("logits must be 1xN");
  if (gold < 0 || static_cast<std::size_t>(gold) >= logits.cols)
    throw std::out_of_range("gold index out of range");
  T mx = logits.data[0];
  for (T v : logits.data) mx = std::max(mx, v);
  T denom = T(0);
  for (T v : logits.data) denom += std::exp(v - mx);
  return std::log(denom) + mx - logits.data[static_cast<std::size_t>(gold)];
}

// --- checkpoint container -------------------------------------------------
// Layout: 8-byte magic, u64 little-endian manifest length, JSON manifest
// {dtype, config, tensors:[{name,rows,cols,offset}]}, then raw row-major
// little-endian arrays at the stated offsets.

inline constexpr char kCheckpointMagic[8] = {'K', 'G', 'R', '3',
                                             'C', 'K', 'P', 'T'};

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& params) {
  nlohmann::json manifest;
  manifest["dtype"] = sizeof(T) == 4 ? "float32" : "float64";
  manifest["config"] = {{"layers", params.config.layers},
                        {"heads", params.config.heads},
                        {"hidden", params.config.hidden},
                        {"ffn_dim", params.config.ffn_dim},
                        {"num_entities", params.config.num_entities},
                        {"num_relations", params.config.num_relations}};
  std::uint64_t offset = 0;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params.tensors) {
    manifest["tensors"].push_back({{"name", name},
                                   {"rows", t.rows},
                                   {"cols", t.cols},
                                   {"offset", offset}});
    offset += t.size() * sizeof(T);
  }
  std::string mstr = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kCheckpointMagic, 8);
  std::uint64_t mlen = mstr.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, t] : params.tensors)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
ModelParams<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  std::uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mstr(mlen, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(mlen));
  nlohmann::json manifest = nlohmann::json::parse(mstr);
  std::string want = sizeof(T) == 4 ? "float32" : "float64";
  if (manifest.at("dtype").get<std::string>() != want)
    throw std::runtime_error("checkpoint dtype mismatch in " + path);
  ModelParams<T> params;
  const auto& jc = manifest.at("config");
  params.config.layers = jc.at("layers").get<std::size_t>();
  params.config.heads = jc.at("heads").get<std::size_t>();
  params.config.hidden = jc.at("hidden").get<std::size_t>();
  params.config.ffn_dim = jc.at("ffn_dim").get<std::size_t>();
  params.config.num_entities = jc.at("num_entities").get<std::size_t>();
  params.config.num_relations = jc.at("num_relations").get<std::size_t>();
  std::uint64_t data_start = 16 + mlen;
  for (const auto& jt : manifest.at("tensors")) {
    Tensor<T> t(jt.at("rows").get<std::size_t>(),
                jt.at("cols").get<std::size_t>());
    f.seekg(static_cast<std::streamoff>(data_start +
                                        jt.at("offset").get<std::uint64_t>()));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!f) throw std::runtime_error("truncated checkpoint " + path);
    params.tensors.emplace(jt.at("name").get<std::string>(), std::move(t));
  }
  return params;
}

}  // namespace kgr3
