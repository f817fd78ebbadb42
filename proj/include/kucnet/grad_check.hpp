#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kucnet/loss.hpp"
#include "kucnet/model.hpp"
#include "kucnet/subgraph.hpp"
#include "kucnet/synthetic.hpp"

namespace kucnet {

struct GradCheckConfig {
  Index max_nodes = 20;
  Index dim = 4;
  Index attention_dim = 3;
  int depth = 3;
  Activation activation = Activation::relu;
  bool use_attention = true;
  double epsilon = 1e-5;
  // Relative error denominator floor: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-4;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::size_t kink_skips = 0;  // coordinates whose +-eps probe crossed a ReLU kink
  std::size_t pairs = 0;
  std::size_t edges = 0;
};

namespace detail {

// Sign pattern of every ReLU argument in a tape; a change between probes
// means finite differences straddle a kink and do not estimate a derivative.
inline std::vector<bool> relu_pattern(const ForwardTape& tape, const ModelConfig& cfg) {
  std::vector<bool> out;
  for (const auto& t : tape.layers) {
    if (cfg.activation == Activation::relu) {
      for (Eigen::Index k = 0; k < t.pre.size(); ++k) out.push_back(t.pre.data()[k] > 0);
    }
    for (Eigen::Index k = 0; k < t.att_pre.size(); ++k) out.push_back(t.att_pre.data()[k] > 0);
  }
  return out;
}

struct BprPair {
  Index pos = 0;
  Index neg = 0;
};

inline double mean_bpr(const std::vector<double>& scores, const std::vector<BprPair>& pairs) {
  double loss = 0;
  for (const auto& p : pairs) loss += bpr_loss(scores[p.pos], scores[p.neg]).loss;
  return loss / static_cast<double>(pairs.size());
}

}  // namespace detail

// Compares backward() against central differences of a mean BPR objective
// on a random CKG of at most max_nodes nodes, over every parameter.
inline GradCheckResult grad_check(std::uint64_t seed, const GradCheckConfig& cfg = {}) {
  GradCheckResult result;
  Rng rng(derive_seed(seed, 0x9c));
  // Draw graphs until the user reaches at least two items in L hops.
  CollaborativeKG g;
  LayeredGraph graph;
  std::vector<Index> reached;
  for (std::uint64_t attempt = 0;; ++attempt) {
    g = gen_random_ckg(derive_seed(seed, attempt), cfg.max_nodes, 2, 0.4, 0.2);
    graph = layered_expansion(g, g.user_node(0), cfg.depth);
    reached.clear();
    for (NodeId n : graph.nodes[static_cast<std::size_t>(cfg.depth)]) {
      if (g.is_item_node(n)) reached.push_back(n - g.first_item_node());
    }
    if (reached.size() >= 2 || attempt > 1000) break;
  }
  if (reached.size() < 2) throw ConfigError("could not draw a usable grad-check graph");

  ModelConfig mc;
  mc.dim = cfg.dim;
  mc.attention_dim = cfg.attention_dim;
  mc.depth = cfg.depth;
  mc.relation_count = g.relation_count();
  mc.activation = cfg.activation;
  mc.use_attention = cfg.use_attention;
  ModelParams params = init_params(mc, derive_seed(seed, 0x1a));
  // Non-zero bias so its gradient is exercised too.
  for (Eigen::Index k = 0; k < params.attention_bias().size(); ++k) params.attention_bias()[k] = rng.uniform(-0.5, 0.5);

  // Pairs: every reached item against another item (possibly one outside V^L).
  std::vector<detail::BprPair> pairs;
  for (Index pos : reached) {
    Index neg = static_cast<Index>(rng.below(g.item_count()));
    if (neg == pos) neg = (pos + 1) % g.item_count();
    pairs.push_back({pos, neg});
  }
  result.pairs = pairs.size();
  result.edges = graph.edge_count();

  const ItemRange items{g.first_item_node(), g.item_count()};
  auto objective = [&](const ModelParams& p, std::vector<bool>* pattern) {
    const auto tape = forward(graph, p, items);
    if (pattern) *pattern = detail::relu_pattern(tape, mc);
    return detail::mean_bpr(item_scores(tape, graph), pairs);
  };

  const auto tape = forward(graph, params, items);
  const auto scores = item_scores(tape, graph);
  std::vector<double> d_logits(g.item_count(), 0.0);
  for (const auto& p : pairs) {
    const auto t = bpr_loss(scores[p.pos], scores[p.neg]);
    d_logits[p.pos] += t.d_pos / static_cast<double>(pairs.size());
    d_logits[p.neg] += t.d_neg / static_cast<double>(pairs.size());
  }
  const auto grads = backward(tape, graph, params, d_logits);
  const auto base_pattern = detail::relu_pattern(tape, mc);

  ModelParams probe = params;
  std::vector<bool> plus_pattern, minus_pattern;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double x = params.values()[k];
    probe.values()[k] = x + cfg.epsilon;
    const double f_plus = objective(probe, &plus_pattern);
    probe.values()[k] = x - cfg.epsilon;
    const double f_minus = objective(probe, &minus_pattern);
    probe.values()[k] = x;
    if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
      ++result.kink_skips;
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2 * cfg.epsilon);
    const double analytic = grads.values()[k];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), cfg.floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(numeric - analytic) / denom);
    ++result.coordinates;
  }
  return result;
}

}  // namespace kucnet
