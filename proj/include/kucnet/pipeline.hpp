#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>

#include "kucnet/ckg.hpp"
#include "kucnet/dataset.hpp"
#include "kucnet/eval.hpp"
#include "kucnet/ppr.hpp"
#include "kucnet/split.hpp"
#include "kucnet/training.hpp"

namespace kucnet {

// A dataset directory holds either interactions.txt (split on the fly) or a
// pre-split train.txt + test.txt, plus kg.txt and optional alignment.txt /
// user_alignment.txt.
struct Dataset {
  std::optional<InteractionSet> interactions;
  std::optional<InteractionSet> train;
  std::optional<InteractionSet> test;
  TripleSet kg;
  Alignment item_alignment;
  Alignment user_alignment;
};

// Item i <-> entity i for every i that exists on both sides, the convention
// of the public KG recommendation benchmarks.
inline Alignment default_alignment(Index items, Index entities) {
  Alignment out;
  for (Index i = 0; i < std::min(items, entities); ++i) out.push_back({i, i});
  return out;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  Dataset d;
  if (fs::exists(dir / "train.txt") && fs::exists(dir / "test.txt")) {
    d.train = load_interactions(dir / "train.txt");
    d.test = load_interactions(dir / "test.txt");
    const Index users = std::max(d.train->user_count, d.test->user_count);
    const Index items = std::max(d.train->item_count, d.test->item_count);
    d.train->user_count = d.test->user_count = users;
    d.train->item_count = d.test->item_count = items;
  } else {
    d.interactions = load_interactions(dir / "interactions.txt");
  }
  d.kg = load_kg_triples(dir / "kg.txt");
  const Index items = d.interactions ? d.interactions->item_count : d.train->item_count;
  d.item_alignment = fs::exists(dir / "alignment.txt") ? load_alignment(dir / "alignment.txt")
                                                      : default_alignment(items, d.kg.entity_count);
  if (fs::exists(dir / "user_alignment.txt")) d.user_alignment = load_alignment(dir / "user_alignment.txt");
  return d;
}

struct SplitConfig {
  Scenario scenario = Scenario::traditional;
  Index folds = 5;
  Index fold = 0;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

inline DatasetSplit split_interactions(const InteractionSet& inter, const SplitConfig& c) {
  if (c.scenario == Scenario::traditional) return split_holdout(inter, c.test_fraction, c.seed);
  if (c.fold >= c.folds) throw ConfigError("fold index out of range");
  auto folds = c.scenario == Scenario::new_item ? split_new_item(inter, c.folds, c.seed)
                                                 : split_new_user(inter, c.folds, c.seed);
  return folds[c.fold];
}

// Pre-split datasets are used as given; otherwise the split is derived.
inline DatasetSplit make_split(const Dataset& d, const SplitConfig& c) {
  if (d.train) {
    DatasetSplit s;
    s.train = *d.train;
    s.test = *d.test;
    s.scenario = c.scenario;
    return s;
  }
  return split_interactions(*d.interactions, c);
}

inline CollaborativeKG build_ckg(const Dataset& d, const InteractionSet& train) {
  return build_ckg(train, d.kg, d.item_alignment, d.user_alignment);
}

// Carves a validation split out of the training interactions the same way
// the scenario separates test from train, so model selection sees the same
// kind of held-out data (unseen items for new_item, unseen users for new_user).
inline DatasetSplit validation_split(const InteractionSet& train, Scenario scenario, double fraction,
                                     std::uint64_t seed) {
  SplitConfig c;
  c.scenario = scenario;
  c.test_fraction = fraction;
  c.folds = std::max<Index>(2, static_cast<Index>(std::lround(1.0 / fraction)));
  c.fold = 0;
  c.seed = derive_seed(seed, 0x7a11d);
  return split_interactions(train, c);
}

// Inference builds graphs the same way training did.
inline InferenceConfig inference_config(const TrainConfig& c) {
  InferenceConfig ic;
  ic.selection = c.selection;
  ic.K = c.K;
  ic.seed = c.seed;
  return ic;
}

struct FitOptions {
  Scenario scenario = Scenario::traditional;
  double validation_fraction = 0;  // 0 disables validation-based selection
  std::size_t n = 20;
  InferenceConfig inference;
  double ppr_alpha = kDefaultRestart;
  int ppr_iterations = kDefaultPprIterations;
  std::ostream* log = nullptr;
};

// Trains on `train`. With validation enabled the model is fitted on the
// validation split's training part (over its own CKG and PPR) and the epoch
// with the best validation recall@n is kept.
inline TrainResult fit(const Dataset& d, const InteractionSet& train, const CollaborativeKG& g, const PprStore& ppr,
                       const TrainConfig& cfg, const FitOptions& opt) {
  TrainHooks hooks;
  hooks.log = opt.log;
  if (opt.validation_fraction <= 0) return kucnet::train(g, train, ppr, cfg, hooks);

  const auto val = validation_split(train, opt.scenario, opt.validation_fraction, cfg.seed);
  const auto g_val = build_ckg(d, val.train);
  const auto ppr_val = ppr_all_users(g_val, opt.ppr_alpha, opt.ppr_iterations, cfg.threads);
  hooks.validate = [&](const ModelParams& p) {
    return evaluate(p, g_val, ppr_val, val.train, val.test, opt.n, opt.inference, cfg.threads).recall;
  };
  return kucnet::train(g_val, val.train, ppr_val, cfg, hooks);
}

}  // namespace kucnet
