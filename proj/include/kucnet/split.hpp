#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kucnet/common.hpp"
#include "kucnet/dataset.hpp"
#include "kucnet/rng.hpp"

namespace kucnet {

enum class Scenario { traditional, new_item, new_user };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::traditional: return "traditional";
    case Scenario::new_item: return "new-item";
    case Scenario::new_user: return "new-user";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "traditional") return Scenario::traditional;
  if (s == "new-item" || s == "new_item") return Scenario::new_item;
  if (s == "new-user" || s == "new_user") return Scenario::new_user;
  throw ConfigError("unknown scenario '" + s + "'");
}

struct DatasetSplit {
  InteractionSet train;
  InteractionSet test;
  Scenario scenario = Scenario::traditional;
  Index fold = 0;
};

namespace detail {

// Random partition of [0, n) into `folds` groups of near-equal size.
inline std::vector<Index> random_groups(Index n, Index folds, std::uint64_t seed) {
  std::vector<Index> order(n);
  for (Index k = 0; k < n; ++k) order[k] = k;
  Rng rng(derive_seed(seed, 0x5e1));
  shuffle(order, rng);
  std::vector<Index> group(n);
  for (Index k = 0; k < n; ++k) group[order[k]] = k % folds;
  return group;
}

// `by_item` selects whether the partition is over items or users.
inline std::vector<DatasetSplit> k_fold_split(const InteractionSet& inter, Index folds, std::uint64_t seed,
                                              bool by_item) {
  if (folds < 2) throw ConfigError("folds must be >= 2");
  const Index n = by_item ? inter.item_count : inter.user_count;
  if (n < folds) {
    throw ConfigError(std::string("fewer ") + (by_item ? "items" : "users") + " than folds");
  }
  const auto group = random_groups(n, folds, seed);
  std::vector<DatasetSplit> out(folds);
  for (Index k = 0; k < folds; ++k) {
    auto& s = out[k];
    s.scenario = by_item ? Scenario::new_item : Scenario::new_user;
    s.fold = k;
    s.train.user_count = s.test.user_count = inter.user_count;
    s.train.item_count = s.test.item_count = inter.item_count;
  }
  for (const auto& p : inter.pairs) {
    const Index g = group[by_item ? p.item : p.user];
    for (Index k = 0; k < folds; ++k) (g == k ? out[k].test : out[k].train).pairs.push_back(p);
  }
  return out;
}

}  // namespace detail

// k-fold over items: fold k tests on every interaction of item group k, so
// train and test item sets are disjoint.
inline std::vector<DatasetSplit> split_new_item(const InteractionSet& inter, Index folds, std::uint64_t seed) {
  return detail::k_fold_split(inter, folds, seed, true);
}

// k-fold over users: test users have no training interactions.
inline std::vector<DatasetSplit> split_new_user(const InteractionSet& inter, Index folds, std::uint64_t seed) {
  return detail::k_fold_split(inter, folds, seed, false);
}

// Per-user random hold-out for datasets that do not ship pre-split. Each
// user keeps at least one training item, and a held-out pair is moved back
// to training if its item would otherwise be unseen in training.
inline DatasetSplit split_holdout(const InteractionSet& inter, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
  DatasetSplit s;
  s.scenario = Scenario::traditional;
  s.train.user_count = s.test.user_count = inter.user_count;
  s.train.item_count = s.test.item_count = inter.item_count;
  const auto by_user = inter.items_by_user();
  std::vector<Index> train_count(inter.item_count, 0);
  std::vector<Interaction> held;
  for (Index u = 0; u < inter.user_count; ++u) {
    auto items = by_user[u];
    Rng rng(derive_seed(seed, 0x401d, u));
    shuffle(items, rng);
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(items.size())));
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (k < n_test) {
        held.push_back({u, items[k]});
      } else {
        s.train.pairs.push_back({u, items[k]});
        ++train_count[items[k]];
      }
    }
  }
  for (const auto& p : held) {
    if (train_count[p.item] == 0) {
      s.train.pairs.push_back(p);
      ++train_count[p.item];
    } else {
      s.test.pairs.push_back(p);
    }
  }
  s.train.normalize();
  s.test.normalize();
  return s;
}

}  // namespace kucnet
