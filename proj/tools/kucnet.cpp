// kucnet command-line driver: synthetic data, PPR preprocessing, training,
// evaluation, recommendation and explanation, all rooted in a run directory.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11/CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kucnet/eval.hpp"
#include "kucnet/explain.hpp"
#include "kucnet/model.hpp"
#include "kucnet/pipeline.hpp"
#include "kucnet/ppr.hpp"
#include "kucnet/synthetic.hpp"
#include "kucnet/training.hpp"

namespace fs = std::filesystem;
using namespace kucnet;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Paths {
  std::string data;
  std::string out;
};

struct RunSettings {
  Paths paths;
  SplitConfig split;
  std::string scenario = "traditional";
  double ppr_alpha = kDefaultRestart;
  int ppr_iterations = kDefaultPprIterations;
  TrainConfig train;
  std::string activation = "relu";
  std::string selection = "ppr";
  double validation_fraction = 0;
  unsigned threads = 1;

  void resolve() {
    split.scenario = parse_scenario(scenario);
    train.activation = parse_activation(activation);
    train.selection = parse_edge_selection(selection);
    train.threads = threads;
    split.seed = train.seed;
  }
};

json to_json(const RunSettings& s) {
  return {{"tool", "kucnet"},
          {"version", kVersion},
          {"data", fs::absolute(s.paths.data).lexically_normal().string()},
          {"split",
           {{"scenario", to_string(s.split.scenario)},
            {"folds", s.split.folds},
            {"fold", s.split.fold},
            {"test_fraction", s.split.test_fraction},
            {"seed", s.split.seed}}},
          {"ppr", {{"alpha", s.ppr_alpha}, {"iterations", s.ppr_iterations}}},
          {"train", to_json(s.train)},
          {"validation_fraction", s.validation_fraction}};
}

RunSettings settings_from_json(const json& j, const std::string& out) {
  RunSettings s;
  s.paths.out = out;
  s.paths.data = j.at("data").get<std::string>();
  const auto& sp = j.at("split");
  s.scenario = sp.at("scenario").get<std::string>();
  s.split.folds = sp.at("folds").get<Index>();
  s.split.fold = sp.at("fold").get<Index>();
  s.split.test_fraction = sp.at("test_fraction").get<double>();
  s.ppr_alpha = j.at("ppr").at("alpha").get<double>();
  s.ppr_iterations = j.at("ppr").at("iterations").get<int>();
  s.train = train_config_from_json(j.at("train"));
  s.activation = to_string(s.train.activation);
  s.selection = to_string(s.train.selection);
  s.validation_fraction = j.value("validation_fraction", 0.0);
  s.resolve();
  return s;
}

RunSettings load_run(const std::string& out) {
  const fs::path p = fs::path(out) / "config.json";
  std::ifstream in(p);
  if (!in) throw IoError("no run configuration at " + p.string() + " (run 'kucnet train' first)");
  try {
    return settings_from_json(json::parse(in), out);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_atomically(path, [&](std::ostream& o) { o << text; });
}

// Everything a command needs to score users of a run.
struct Prepared {
  Dataset data;
  DatasetSplit split;
  CollaborativeKG g;
  PprStore ppr;
};

bool ppr_matches(const PprStore& p, const CollaborativeKG& g, const RunSettings& s) {
  return p.user_count() == g.user_count() && p.node_count() == g.node_count() && p.alpha() == s.ppr_alpha &&
         p.iterations() == s.ppr_iterations;
}

Prepared prepare(const RunSettings& s, bool need_ppr) {
  Prepared p;
  p.data = load_dataset(s.paths.data);
  p.split = make_split(p.data, s.split);
  p.g = build_ckg(p.data, p.split.train);
  if (need_ppr) {
    const fs::path cache = fs::path(s.paths.out) / "ppr.bin";
    if (fs::exists(cache)) {
      p.ppr = load_ppr(cache);
      if (!ppr_matches(p.ppr, p.g, s)) throw ConfigError("ppr.bin does not match this run; rerun preprocess-ppr --force");
    } else {
      p.ppr = ppr_all_users(p.g, s.ppr_alpha, s.ppr_iterations, s.threads);
      fs::create_directories(s.paths.out);
      save_ppr(p.ppr, cache);
    }
  }
  return p;
}

void add_path_options(CLI::App* cmd, Paths& paths, bool data, bool out) {
  if (data) cmd->add_option("--data", paths.data, "Dataset directory")->envname("KUCNET_DATA")->required();
  if (out) cmd->add_option("--out", paths.out, "Run directory")->envname("KUCNET_OUT")->required();
}

void add_run_options(CLI::App* cmd, RunSettings& s) {
  add_path_options(cmd, s.paths, true, true);
  cmd->add_option("--scenario", s.scenario, "traditional | new_item | new_user")
      ->check(CLI::IsMember({"traditional", "new_item", "new_user"}));
  cmd->add_option("--folds", s.split.folds, "Folds for new_item / new_user splits");
  cmd->add_option("--fold", s.split.fold, "Fold used as the test split");
  cmd->add_option("--test-fraction", s.split.test_fraction, "Held-out share per user (traditional)");
  cmd->add_option("--alpha", s.ppr_alpha, "PPR restart probability");
  cmd->add_option("--iters", s.ppr_iterations, "PPR power iterations");
  cmd->add_option("--seed", s.train.seed, "Master seed (split, init, sampling)");
  cmd->add_option("--threads", s.threads, "Worker threads (0 = all cores)");
}

void add_train_options(CLI::App* cmd, RunSettings& s) {
  auto& t = s.train;
  cmd->add_option("--d", t.dim, "Hidden dimension");
  cmd->add_option("--d-alpha,--d_alpha", t.attention_dim, "Attention dimension");
  cmd->add_option("--L", t.depth, "Number of layers");
  cmd->add_option("--K", t.K, "Edges kept per head when pruning");
  cmd->add_option("--lr", t.learning_rate, "Learning rate");
  cmd->add_option("--weight-decay,--weight_decay", t.weight_decay, "Decoupled weight decay");
  cmd->add_option("--dropout", t.dropout, "Edge dropout rate");
  cmd->add_option("--batch", t.batch_size, "Users per optimizer step");
  cmd->add_option("--epochs", t.epochs, "Training epochs");
  cmd->add_option("--negatives", t.negatives_per_positive, "Negatives per positive");
  cmd->add_option("--activation", s.activation, "identity | tanh | relu")
      ->check(CLI::IsMember({"identity", "tanh", "relu"}));
  cmd->add_option("--selection", s.selection, "Edge pruning: ppr | random | all")
      ->check(CLI::IsMember({"ppr", "random", "all"}));
  cmd->add_flag("!--no-attention", t.use_attention, "Fix every attention weight to 1");
  cmd->add_flag("!--keep-target-edges", t.exclude_target_edges, "Do not hide target interactions while training");
  cmd->add_option("--target-fraction", t.target_fraction, "Share of positives used as targets per visit");
  cmd->add_option("--val-fraction", s.validation_fraction, "Validation share for model selection (0 = off)");
  cmd->add_option("--patience", t.patience, "Early-stopping patience in epochs (needs --val-fraction)");
}

int cmd_gen_synthetic(const SyntheticConfig& c, const std::string& out) {
  const auto data = gen_synthetic(c);
  fs::create_directories(out);
  save_interactions(data.interactions, fs::path(out) / "interactions.txt");
  save_kg_triples(data.kg, fs::path(out) / "kg.txt");
  save_alignment(data.alignment, fs::path(out) / "alignment.txt");
  fmt::print("wrote {} interactions, {} triples to {}\n", data.interactions.pairs.size(), data.kg.triples.size(), out);
  return 0;
}

int cmd_preprocess_ppr(RunSettings s, bool force) {
  s.resolve();
  const fs::path cache = fs::path(s.paths.out) / "ppr.bin";
  if (fs::exists(cache) && !force) {
    fmt::print("ppr cache {} present; nothing to do (use --force to rebuild)\n", cache.string());
    return 0;
  }
  const auto data = load_dataset(s.paths.data);
  const auto split = make_split(data, s.split);
  const auto g = build_ckg(data, split.train);
  const auto start = std::chrono::steady_clock::now();
  const auto ppr = ppr_all_users(g, s.ppr_alpha, s.ppr_iterations, s.threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fs::create_directories(s.paths.out);
  save_ppr(ppr, cache);
  fmt::print("preprocess: ppr for {} users over {} nodes ({} edges) in {:.3f} s\n", g.user_count(), g.node_count(),
             g.edge_count(), secs);
  return 0;
}

int cmd_train(RunSettings s) {
  s.resolve();
  s.train.validate();
  for (const auto& w : s.train.warnings()) fmt::print(stderr, "warning: {}\n", w);
  const auto p = prepare(s, true);
  write_text(fs::path(s.paths.out) / "config.json", to_json(s).dump(2) + "\n");

  std::ostringstream log;
  FitOptions opt;
  opt.scenario = s.split.scenario;
  opt.validation_fraction = s.validation_fraction;
  opt.inference = inference_config(s.train);
  opt.ppr_alpha = s.ppr_alpha;
  opt.ppr_iterations = s.ppr_iterations;
  opt.log = &log;
  const auto start = std::chrono::steady_clock::now();
  const auto result = fit(p.data, p.split.train, p.g, p.ppr, s.train, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(fs::path(s.paths.out) / "train_log.jsonl", log.str());
  save_checkpoint(result.params, fs::path(s.paths.out) / "model.ckpt");
  const auto& last = result.log.empty() ? TrainLogRecord{} : result.log.back();
  fmt::print("trained {} epochs in {:.1f} s; final loss {:.6f}; kept epoch {}\n", result.log.size(), secs, last.loss,
             result.best_epoch);
  return 0;
}

int cmd_evaluate(const std::string& out, std::size_t n, const std::string& baseline, bool per_user) {
  const auto s = load_run(out);
  const auto p = prepare(s, true);
  EvalReport report;
  if (baseline == "model") {
    const auto params = load_checkpoint(fs::path(out) / "model.ckpt");
    report = evaluate(params, p.g, p.ppr, p.split.train, p.split.test, n, inference_config(s.train), s.threads);
  } else if (baseline == "ppr") {
    report = evaluate_scorer(ppr_scorer(p.g, p.ppr), p.split.train, p.split.test, n, s.threads);
  } else if (baseline == "popularity") {
    report = evaluate_scorer(popularity_scorer(p.split.train), p.split.train, p.split.test, n, s.threads);
  } else {
    report = evaluate_scorer(random_scorer(p.g.item_count(), s.train.seed), p.split.train, p.split.test, n, s.threads);
  }
  const std::string suffix = baseline == "model" ? "" : "_" + baseline;
  write_text(fs::path(out) / ("eval" + suffix + ".txt"), format_report(report, true));
  write_text(fs::path(out) / ("eval" + suffix + ".json"), to_json(report).dump(2) + "\n");
  std::cout << format_report(report, per_user);
  return 0;
}

int cmd_recommend(const std::string& out, Index user, std::size_t top) {
  const auto s = load_run(out);
  const auto p = prepare(s, true);
  if (user >= p.g.user_count()) throw IndexError(fmt::format("user {} out of range [0, {})", user, p.g.user_count()));
  const auto params = load_checkpoint(fs::path(out) / "model.ckpt");
  const auto scores = model_scores(params, p.g, p.ppr, user, inference_config(s.train));
  const auto known = p.split.train.items_by_user();
  const auto ranked = top_n(scores, known[user], top);
  for (std::size_t k = 0; k < ranked.size(); ++k) fmt::print("{} {} {:.6f}\n", k + 1, ranked[k], scores[ranked[k]]);
  return 0;
}

int cmd_explain(const std::string& out, Index user, Index item, double threshold, const std::string& format,
                bool path_prune) {
  const auto s = load_run(out);
  const auto p = prepare(s, true);
  if (user >= p.g.user_count()) throw IndexError(fmt::format("user {} out of range [0, {})", user, p.g.user_count()));
  if (item >= p.g.item_count()) throw IndexError(fmt::format("item {} out of range [0, {})", item, p.g.item_count()));
  const auto params = load_checkpoint(fs::path(out) / "model.ckpt");
  const auto f = run_user(params, p.g, p.ppr, user, inference_config(s.train));
  const auto e = extract_explanation(f.tape, f.graph, p.g.item_node(item), threshold, path_prune);
  std::cout << (format == "dot" ? export_dot(e, p.g) : export_json(e, p.g));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KUCNet knowledge-graph recommender"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SyntheticConfig syn;
  std::string syn_out;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a planted-cluster dataset");
  gen->add_option("--out", syn_out, "Dataset directory to create")->envname("KUCNET_DATA")->required();
  gen->add_option("--users", syn.users);
  gen->add_option("--items", syn.items);
  gen->add_option("--entities", syn.entities);
  gen->add_option("--relations", syn.relations);
  gen->add_option("--clusters", syn.clusters);
  gen->add_option("--noise", syn.noise);
  gen->add_option("--triples-per-item", syn.triples_per_item);
  gen->add_option("--min-interactions", syn.min_interactions);
  gen->add_option("--max-interactions", syn.max_interactions);
  gen->add_option("--seed", syn.seed);

  RunSettings ppr_settings;
  bool force = false;
  auto* pre = app.add_subcommand("preprocess-ppr", "Compute and cache per-user PPR scores");
  add_run_options(pre, ppr_settings);
  pre->add_flag("--force", force, "Rebuild an existing cache");

  RunSettings train_settings;
  auto* tr = app.add_subcommand("train", "Train a model into the run directory");
  add_run_options(tr, train_settings);
  add_train_options(tr, train_settings);

  Paths eval_paths;
  std::size_t n = 20;
  std::string baseline = "model";
  bool per_user = false;
  auto* ev = app.add_subcommand("evaluate", "Report recall@N and ndcg@N on the test split");
  add_path_options(ev, eval_paths, false, true);
  ev->add_option("--n,--N", n, "Cut-off N");
  ev->add_option("--baseline", baseline, "model | ppr | popularity | random")
      ->check(CLI::IsMember({"model", "ppr", "popularity", "random"}));
  ev->add_flag("--per-user", per_user, "Print one line per user");

  Paths rec_paths;
  Index user = 0, item = 0;
  std::size_t top = 20;
  auto* rec = app.add_subcommand("recommend", "Print the top items for a user");
  add_path_options(rec, rec_paths, false, true);
  rec->add_option("--user", user)->required();
  rec->add_option("--top", top, "Number of items");

  Paths ex_paths;
  double threshold = 0.5;
  std::string format = "json";
  bool no_prune = false;
  auto* ex = app.add_subcommand("explain", "Export the attention subgraph behind a (user, item) score");
  add_path_options(ex, ex_paths, false, true);
  ex->add_option("--user", user)->required();
  ex->add_option("--item", item)->required();
  ex->add_option("--threshold", threshold, "Minimum attention weight");
  ex->add_option("--format", format, "json | dot")->check(CLI::IsMember({"json", "dot"}));
  ex->add_flag("--no-path-prune", no_prune, "Keep edges that are off every user-item path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_synthetic(syn, syn_out);
    if (pre->parsed()) return cmd_preprocess_ppr(ppr_settings, force);
    if (tr->parsed()) return cmd_train(train_settings);
    if (ev->parsed()) return cmd_evaluate(eval_paths.out, n, baseline, per_user);
    if (rec->parsed()) return cmd_recommend(rec_paths.out, user, top);
    if (ex->parsed()) return cmd_explain(ex_paths.out, user, item, threshold, format, !no_prune);
  } catch (const std::exception& e) {
    fmt::print(stderr, "kucnet: error: {}\n", e.what());
    return 1;
  }
  return 0;
}
