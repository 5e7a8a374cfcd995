// Command-line front end: prepare, retrieve, train, eval, ablate, synth.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "kgr3/config.hpp"
#include "kgr3/eval.hpp"
#include "kgr3/pipeline.hpp"
#include "kgr3/synth.hpp"
#include "kgr3/train.hpp"

namespace fs = std::filesystem;
using namespace kgr3;

namespace {

struct CliState {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

// Every RunConfig key becomes a --key flag; values land in the override
// map so the precedence (flag > config file > default) stays explicit.
void add_config_flags(CLI::App* cmd, CliState& state) {
  cmd->add_option("--config", state.config_file,
                  "key = value config file, applied before flags");
  static const char* keys[] = {
      "dataset_dir", "output_dir", "strategy", "budget", "seed",
      "beam_width", "max_hops", "traverse_inverses", "layers", "heads",
      "hidden", "ffn_dim", "no_subgraph_repr", "no_query_repr",
      "no_cross_attention", "full_attention", "peak_lr", "epochs",
      "batch_size", "init_seed"};
  for (const char* key : keys) {
    cmd->add_option_function<std::string>(
        "--" + std::string(key),
        [&state, key](const std::string& v) { state.overrides[key] = v; },
        "overrides config key " + std::string(key));
  }
}

RunConfig resolve_config(const CliState& state) {
  RunConfig cfg;
  if (!state.config_file.empty()) load_config_file(cfg, state.config_file);
  for (const auto& [k, v] : state.overrides) cfg.set(k, v);
  return cfg;
}

Dataset load_from(const std::string& dir) {
  if (dir.empty())
    throw std::runtime_error("--dataset_dir is required for this command");
  return load_dataset(dir + "/train.txt", dir + "/valid.txt",
                      dir + "/test.txt");
}

const std::vector<Triple>& pick_split(const Dataset& d,
                                      const std::string& split) {
  if (split == "train") return d.train;
  if (split == "valid") return d.valid;
  if (split == "test") return d.test;
  throw std::runtime_error("unknown split '" + split + "'");
}

// Beam retrieval needs learned path patterns; other strategies leave them
// unset.
struct RetrievalBundle {
  RetrieverConfig rc;
  PathPatternModel patterns;
  std::map<std::uint64_t, std::vector<std::vector<Triple>>> paths;
};

RetrievalBundle make_retrieval(const RunConfig& cfg, const KnowledgeGraph& kg,
                               const Vocabulary& vocab,
                               const std::vector<Triple>& train_facts,
                               const std::string& path_file) {
  RetrievalBundle b;
  b.rc = cfg.retriever_config();
  if (b.rc.strategy == Strategy::kBeam) {
    b.patterns = learn_path_patterns(kg, vocab, train_facts, b.rc.max_hops);
    b.rc.path_patterns = &b.patterns;
  }
  if (b.rc.strategy == Strategy::kPathUnion) {
    if (path_file.empty())
      throw std::runtime_error("paths strategy requires --paths <file>");
    b.paths = load_path_file(path_file);
    b.rc.precomputed_paths = &b.paths;
  }
  return b;
}

std::string new_run_dir(const RunConfig& cfg) {
  std::string dir = cfg.output_dir + "/run-" + make_run_id(cfg);
  fs::create_directories(dir);
  std::ofstream snap(dir + "/config.txt");
  snap << cfg.snapshot();
  return dir;
}

int cmd_synth(const RunConfig& cfg, const std::string& out,
              std::size_t entities) {
  SynthOptions opt;
  opt.entities = entities;
  opt.seed = cfg.seed;
  auto d = synth_kg(opt);
  fs::create_directories(out);
  save_dataset(d, out);
  std::cout << "wrote " << d.train.size() << " train, " << d.valid.size()
            << " valid, " << d.test.size() << " test triples to " << out
            << "\n";
  return 0;
}

int cmd_prepare(const RunConfig& cfg, const std::string& out) {
  auto d = load_from(cfg.dataset_dir);
  fs::create_directories(out);
  d.vocab.save(out + "/entities.txt", out + "/relations.txt");
  auto kg = d.build_graph();
  std::cout << "vocab: " << d.vocab.num_entities() << " entities, "
            << d.vocab.num_relations() << " relations (with inverses); "
            << kg.triples().size() << " facts\n";
  return 0;
}

int cmd_retrieve(const RunConfig& cfg, const std::string& out,
                 const std::string& split, const std::string& path_file) {
  auto d = load_from(cfg.dataset_dir);
  auto kg = d.build_graph();
  auto queries = make_queries(pick_split(d, split), d.vocab);
  auto bundle = make_retrieval(cfg, kg, d.vocab, d.train, path_file);
  auto contexts = retrieve_all(kg, d.vocab, queries, bundle.rc);
  save_contexts(out, contexts);
  std::cout << "wrote " << contexts.size() << " contexts to " << out << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& path_file) {
  auto d = load_from(cfg.dataset_dir);
  auto kg = d.build_graph();
  auto bundle = make_retrieval(cfg, kg, d.vocab, d.train, path_file);
  auto queries = make_queries(d.train, d.vocab);
  auto instances = build_train_instances(kg, d.vocab, queries, bundle.rc);
  auto params = ModelParams<float>::init(
      cfg.model_config(d.vocab.num_entities(), d.vocab.num_relations()),
      cfg.init_seed);
  std::string run_dir = new_run_dir(cfg);
  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.peak_lr = cfg.peak_lr;
  opts.loss_csv_path = run_dir + "/loss.csv";
  opts.checkpoint_dir = run_dir;
  auto curve = train(params, instances, opts);
  save_checkpoint(run_dir + "/final.ckpt", params);
  std::cout << run_dir << "\n";
  std::cout << "final loss " << curve.back().loss << " after "
            << curve.size() << " steps\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
             const std::string& out, const std::string& split,
             const std::string& path_file) {
  auto d = load_from(cfg.dataset_dir);
  auto kg = d.build_graph();
  auto params = load_checkpoint<float>(checkpoint);
  auto bundle = make_retrieval(cfg, kg, d.vocab, d.train, path_file);
  auto queries = make_queries(pick_split(d, split), d.vocab);
  auto contexts = retrieve_all(kg, d.vocab, queries, bundle.rc);
  auto report = evaluate(params, kg, contexts);
  auto j = report_to_json(report, split, strategy_name(bundle.rc.strategy));
  save_metrics(out, j);
  std::cout << "mrr " << report.overall.mrr << " hits@1 "
            << report.overall.hits1 << " coverage " << report.coverage
            << " -> " << out << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& out) {
  auto d = load_from(cfg.dataset_dir);
  auto kg = d.build_graph();
  ExperimentConfig base;
  base.retriever = cfg.retriever_config();
  base.model =
      cfg.model_config(d.vocab.num_entities(), d.vocab.num_relations());
  base.training.epochs = cfg.epochs;
  base.training.batch_size = cfg.batch_size;
  base.training.peak_lr = cfg.peak_lr;
  base.init_seed = cfg.init_seed;
  auto patterns =
      learn_path_patterns(kg, d.vocab, d.train, cfg.retriever_config().max_hops);
  auto rows = ablation_suite(d, base, patterns);
  auto table = nlohmann::json::array();
  for (const auto& row : rows) {
    auto j = report_to_json(row.report, "test", row.retriever);
    j["reader_variant"] = row.reader_variant;
    table.push_back(j);
    std::cout << row.retriever << " / " << row.reader_variant << ": mrr "
              << row.report.overall.mrr << "\n";
  }
  save_metrics(out, table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrieve-and-read link prediction toolkit"};
  app.require_subcommand(1);

  CliState state;
  std::string out, split = "test", path_file, checkpoint;
  std::size_t entities = 60;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_config_flags(synth, state);
  synth->add_option("--out", out, "output dataset directory")->required();
  synth->add_option("--entities", entities, "entity count (default 60)");

  auto* prepare =
      app.add_subcommand("prepare", "build vocab files from a dataset");
  add_config_flags(prepare, state);
  prepare->add_option("--out", out, "output directory")->required();

  auto* retrieve =
      app.add_subcommand("retrieve", "write subgraph contexts as JSONL");
  add_config_flags(retrieve, state);
  retrieve->add_option("--out", out, "output JSONL file")->required();
  retrieve->add_option("--split", split, "train|valid|test (default test)");
  retrieve->add_option("--paths", path_file,
                       "precomputed path file for the paths strategy");

  auto* train_cmd =
      app.add_subcommand("train", "train a reader, write run directory");
  add_config_flags(train_cmd, state);
  train_cmd->add_option("--paths", path_file,
                        "precomputed path file for the paths strategy");

  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint, write metrics JSON");
  add_config_flags(eval_cmd, state);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")
      ->required();
  eval_cmd->add_option("--out", out, "metrics JSON path")->required();
  eval_cmd->add_option("--split", split, "train|valid|test (default test)");
  eval_cmd->add_option("--paths", path_file,
                       "precomputed path file for the paths strategy");

  auto* ablate = app.add_subcommand(
      "ablate", "reader-variant x retriever sweep, write JSON table");
  add_config_flags(ablate, state);
  ablate->add_option("--out", out, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(state);
    if (synth->parsed()) return cmd_synth(cfg, out, entities);
    if (prepare->parsed()) return cmd_prepare(cfg, out);
    if (retrieve->parsed())
      return cmd_retrieve(cfg, out, split, path_file);
    if (train_cmd->parsed()) return cmd_train(cfg, path_file);
    if (eval_cmd->parsed())
      return cmd_eval(cfg, checkpoint, out, split, path_file);
    if (ablate->parsed()) return cmd_ablate(cfg, out);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
