#pragma once
// Run configuration: documented defaults for every knob, a key=value config
// file parser that rejects unknown keys, and precedence handling where
// command-line flags override the config file which overrides defaults.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "kgr3/model.hpp"
#include "kgr3/pipeline.hpp"

namespace kgr3 {

struct RunConfig {
  // data and outputs
  std::string dataset_dir;         // directory with train/valid/test.txt
  std::string output_dir = "runs"; // parent of per-run directories

  // retrieval
  std::string strategy = "bfs";    // bfs | one_hop | path_union | beam
  std::size_t budget = 8;          // max context edges
  std::uint64_t seed = 7;          // retrieval sampling seed
  std::size_t beam_width = 4;
  std::size_t max_hops = 2;
  bool traverse_inverses = true;

  // reader
  std::size_t layers = 3;
  std::size_t heads = 8;
  std::size_t hidden = 320;
  std::size_t ffn_dim = 1280;
  bool no_subgraph_repr = false;
  bool no_query_repr = false;
  bool no_cross_attention = false;
  bool full_attention = false;

  // optimization
  double peak_lr = 1e-3;           // chosen default; tune per dataset
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t init_seed = 1;     // parameter init seed

  void set(const std::string& key, const std::string& value);

  ModelConfig model_config(std::size_t num_entities,
                           std::size_t num_relations) const {
    ModelConfig m;
    m.layers = layers;
    m.heads = heads;
    m.hidden = hidden;
    m.ffn_dim = ffn_dim;
    m.num_entities = num_entities;
    m.num_relations = num_relations;
    m.no_subgraph_repr = no_subgraph_repr;
    m.no_query_repr = no_query_repr;
    m.no_cross_attention = no_cross_attention;
    m.full_attention = full_attention;
    m.validate();
    return m;
  }

  RetrieverConfig retriever_config() const {
    RetrieverConfig rc;
    rc.strategy = strategy_from_string(strategy);
    rc.budget = budget;
    rc.seed = seed;
    rc.beam_width = beam_width;
    rc.max_hops = max_hops;
    rc.options.traverse_inverses = traverse_inverses;
    return rc;
  }

  std::string snapshot() const;
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

inline std::size_t parse_size(const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
  return static_cast<std::size_t>(n);
}

inline double parse_double(const std::string& v) {
  std::size_t pos = 0;
  double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad number '" + v + "'");
  return d;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "dataset_dir") dataset_dir = value;
  else if (key == "output_dir") output_dir = value;
  else if (key == "strategy") strategy = value;
  else if (key == "budget") budget = parse_size(value);
  else if (key == "seed") seed = parse_size(value);
  else if (key == "beam_width") beam_width = parse_size(value);
  else if (key == "max_hops") max_hops = parse_size(value);
  else if (key == "traverse_inverses") traverse_inverses = parse_bool(value);
  else if (key == "layers") layers = parse_size(value);
  else if (key == "heads") heads = parse_size(value);
  else if (key == "hidden") hidden = parse_size(value);
  else if (key == "ffn_dim") ffn_dim = parse_size(value);
  else if (key == "no_subgraph_repr") no_subgraph_repr = parse_bool(value);
  else if (key == "no_query_repr") no_query_repr = parse_bool(value);
  else if (key == "no_cross_attention")
    no_cross_attention = parse_bool(value);
  else if (key == "full_attention") full_attention = parse_bool(value);
  else if (key == "peak_lr") peak_lr = parse_double(value);
  else if (key == "epochs") epochs = parse_size(value);
  else if (key == "batch_size") batch_size = parse_size(value);
  else if (key == "init_seed") init_seed = parse_size(value);
  else
    throw std::invalid_argument("unknown config key '" + key + "'");
}

// Lines are `key = value`; blank lines and `#` comments are skipped.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key = value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const std::exception& ex) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               ex.what());
    }
  }
}

inline std::string RunConfig::snapshot() const {
  std::ostringstream s;
  s.precision(17);
  s << "dataset_dir = " << dataset_dir << '\n'
    << "output_dir = " << output_dir << '\n'
    << "strategy = " << strategy << '\n'
    << "budget = " << budget << '\n'
    << "seed = " << seed << '\n'
    << "beam_width = " << beam_width << '\n'
    << "max_hops = " << max_hops << '\n'
    << "traverse_inverses = " << (traverse_inverses ? "true" : "false")
    << '\n'
    << "layers = " << layers << '\n'
    << "heads = " << heads << '\n'
    << "hidden = " << hidden << '\n'
    << "ffn_dim = " << ffn_dim << '\n'
    << "no_subgraph_repr = " << (no_subgraph_repr ? "true" : "false") << '\n'
    << "no_query_repr = " << (no_query_repr ? "true" : "false") << '\n'
    << "no_cross_attention = " << (no_cross_attention ? "true" : "false")
    << '\n'
    << "full_attention = " << (full_attention ? "true" : "false") << '\n'
    << "peak_lr = " << peak_lr << '\n'
    << "epochs = " << epochs << '\n'
    << "batch_size = " << batch_size << '\n'
    << "init_seed = " << init_seed << '\n';
  return s.str();
}

// Short hex id mixing the config snapshot with the wall clock.
inline std::string make_run_id(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (char c : cfg.snapshot()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  mix(static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count()));
  std::ostringstream s;
  s << std::hex << h;
  return s.str();
}

}  // namespace kgr3
