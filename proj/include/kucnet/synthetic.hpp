#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "kucnet/ckg.hpp"
#include "kucnet/common.hpp"
#include "kucnet/dataset.hpp"
#include "kucnet/rng.hpp"

namespace kucnet {

struct SyntheticConfig {
  Index users = 500;
  Index items = 300;
  Index entities = 400;  // includes one entity per item
  Index relations = 4;
  Index clusters = 10;
  double noise = 0.1;
  std::uint64_t seed = 1;
  Index min_interactions = 8;
  Index max_interactions = 16;
  Index triples_per_item = 3;
};

struct SyntheticData {
  InteractionSet interactions;
  TripleSet kg;
  Alignment alignment;  // item i <-> entity i
  std::vector<Index> user_cluster;
  std::vector<Index> item_cluster;
  std::vector<Index> entity_cluster;
};

// Planted-cluster dataset. Users, items and attribute entities are dealt
// round-robin (after a seeded shuffle) into clusters. A user with n
// interactions draws floor(noise * n) items from other clusters and the rest
// from its own cluster, without replacement. Each item carries
// `triples_per_item` KG edges to attribute entities; each tail is taken from
// the item's cluster with probability 1 - noise and uniformly otherwise.
inline SyntheticData gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.clusters < 2) throw ConfigError("clusterCount must be >= 2");
  if (!(cfg.noise >= 0.0 && cfg.noise < 1.0)) throw ConfigError("noise must be in [0, 1)");
  if (cfg.clusters > cfg.items) throw ConfigError("clusterCount exceeds item count");
  if (cfg.clusters > cfg.users) throw ConfigError("clusterCount exceeds user count");
  if (cfg.entities < cfg.items) throw ConfigError("need at least one entity per item");
  if (cfg.relations < 1) throw ConfigError("need at least one relation");
  if (cfg.min_interactions < 1 || cfg.min_interactions > cfg.max_interactions) {
    throw ConfigError("bad interaction count range");
  }

  Rng rng(derive_seed(cfg.seed, 0x5717));
  auto deal = [&](Index n) {
    std::vector<Index> order(n), cluster(n);
    for (Index k = 0; k < n; ++k) order[k] = k;
    shuffle(order, rng);
    for (Index k = 0; k < n; ++k) cluster[order[k]] = k % cfg.clusters;
    return cluster;
  };

  SyntheticData out;
  out.user_cluster = deal(cfg.users);
  out.item_cluster = deal(cfg.items);
  const Index attributes = cfg.entities - cfg.items;
  const auto attribute_cluster = deal(attributes);

  std::vector<std::vector<Index>> items_in(cfg.clusters), attributes_in(cfg.clusters);
  for (Index i = 0; i < cfg.items; ++i) items_in[out.item_cluster[i]].push_back(i);
  for (Index a = 0; a < attributes; ++a) attributes_in[attribute_cluster[a]].push_back(a);

  out.entity_cluster.resize(cfg.entities);
  for (Index i = 0; i < cfg.items; ++i) out.entity_cluster[i] = out.item_cluster[i];
  for (Index a = 0; a < attributes; ++a) out.entity_cluster[cfg.items + a] = attribute_cluster[a];

  // Interactions.
  auto& inter = out.interactions;
  inter.user_count = cfg.users;
  inter.item_count = cfg.items;
  for (Index u = 0; u < cfg.users; ++u) {
    const Index c = out.user_cluster[u];
    const auto& own = items_in[c];
    const Index others = cfg.items - static_cast<Index>(own.size());
    Index n = cfg.min_interactions + static_cast<Index>(rng.below(cfg.max_interactions - cfg.min_interactions + 1));
    auto n_noise = static_cast<Index>(std::floor(cfg.noise * n));
    n_noise = std::min(n_noise, others);
    const Index n_own = std::min<Index>(n - n_noise, static_cast<Index>(own.size()));

    std::vector<Index> pool = own;
    shuffle(pool, rng);
    for (Index k = 0; k < n_own; ++k) inter.pairs.push_back({u, pool[k]});

    std::vector<Index> chosen;
    while (chosen.size() < n_noise) {
      const auto i = static_cast<Index>(rng.below(cfg.items));
      if (out.item_cluster[i] == c || std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      chosen.push_back(i);
    }
    for (Index i : chosen) inter.pairs.push_back({u, i});
  }
  inter.normalize();

  // KG attribute edges.
  auto& kg = out.kg;
  kg.entity_count = cfg.entities;
  kg.relation_count = cfg.relations;
  for (Index i = 0; i < cfg.items; ++i) {
    const Index c = out.item_cluster[i];
    for (Index k = 0; k < cfg.triples_per_item; ++k) {
      const auto r = static_cast<Index>(rng.below(cfg.relations));
      Index tail;
      const bool in_cluster = !rng.bernoulli(cfg.noise);
      if (attributes > 0) {
        const auto& pool = attributes_in[c];
        tail = cfg.items + (in_cluster && !pool.empty() ? pool[rng.below(pool.size())]
                                                         : static_cast<Index>(rng.below(attributes)));
      } else {
        // No attribute entities: link items to each other.
        const auto& pool = items_in[c];
        tail = in_cluster ? pool[rng.below(pool.size())] : static_cast<Index>(rng.below(cfg.items));
        if (tail == i) continue;
      }
      kg.triples.push_back({i, r, tail});
    }
  }
  std::sort(kg.triples.begin(), kg.triples.end());
  kg.triples.erase(std::unique(kg.triples.begin(), kg.triples.end()), kg.triples.end());

  for (Index i = 0; i < cfg.items; ++i) out.alignment.push_back({i, i});
  return out;
}

// Small random CKG with at most `max_nodes` nodes, for property tests and
// gradient checks. Every user has at least one interaction; items are
// aligned to the first entities and the rest of the KG is random triples.
inline CollaborativeKG gen_random_ckg(std::uint64_t seed, Index max_nodes, Index kg_relations = 2,
                                      double interaction_density = 0.35, double triple_density = 0.15) {
  if (max_nodes < 3) throw ConfigError("random CKG needs at least 3 nodes");
  Rng rng(derive_seed(seed, 0xc4a));
  const Index users = 1 + static_cast<Index>(rng.below(std::max<Index>(1, max_nodes / 5)));
  const Index items = 1 + static_cast<Index>(rng.below(std::max<Index>(1, (max_nodes - users) / 2)));
  const Index extra = static_cast<Index>(rng.below(max_nodes - users - items + 1));
  const Index entities = items + extra;

  InteractionSet inter;
  inter.user_count = users;
  inter.item_count = items;
  for (Index u = 0; u < users; ++u) {
    inter.pairs.push_back({u, static_cast<Index>(rng.below(items))});
    for (Index i = 0; i < items; ++i) {
      if (rng.bernoulli(interaction_density)) inter.pairs.push_back({u, i});
    }
  }
  inter.normalize();

  TripleSet kg;
  kg.entity_count = entities;
  kg.relation_count = kg_relations;
  for (Index h = 0; h < entities; ++h) {
    for (Index t = 0; t < entities; ++t) {
      if (h != t && rng.bernoulli(triple_density)) {
        kg.triples.push_back({h, static_cast<Index>(rng.below(kg_relations)), t});
      }
    }
  }
  Alignment alignment;
  for (Index i = 0; i < items; ++i) alignment.push_back({i, i});
  return build_ckg(inter, kg, alignment);
}

}  // namespace kucnet
