#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kucnet/ckg.hpp"
#include "kucnet/dataset.hpp"
#include "kucnet/loss.hpp"
#include "kucnet/model.hpp"
#include "kucnet/parallel.hpp"
#include "kucnet/ppr.hpp"
#include "kucnet/rng.hpp"
#include "kucnet/subgraph.hpp"

namespace kucnet {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double dropout = 0.0;
  Index batch_size = 20;  // users per optimizer step
  int epochs = 30;
  std::size_t K = 35;
  int depth = 3;
  Index dim = 48;
  Index attention_dim = 5;
  Activation activation = Activation::relu;
  Index negatives_per_positive = 1;
  std::uint64_t seed = 1;
  EdgeSelection selection = EdgeSelection::ppr_top_k;
  bool use_attention = true;
  // Hide (u, interact, i) and its reverse for the positives scored in a visit.
  bool exclude_target_edges = true;
  // Share of a user's positives used as targets per visit when excluding.
  double target_fraction = 0.5;
  int patience = 0;  // epochs without validation improvement before stopping; 0 = off
  unsigned threads = 1;

  // Hard limits; throws ConfigError.
  void validate() const {
    if (!(learning_rate >= 0) || !(weight_decay >= 0)) throw ConfigError("lr and weight decay must be >= 0");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
    if (batch_size < 1 || epochs < 0 || depth < 1 || dim < 1 || attention_dim < 1) {
      throw ConfigError("batch, L, d and d_alpha must be positive");
    }
    if (selection != EdgeSelection::all && K < 1) throw ConfigError("K must be >= 1");
    if (negatives_per_positive < 1) throw ConfigError("need at least one negative per positive");
    if (!(target_fraction > 0 && target_fraction <= 1)) throw ConfigError("target fraction must be in (0, 1]");
  }

  // Values outside the published tuning ranges are allowed but flagged.
  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (learning_rate < 1e-6 || learning_rate > 1e-2) out.push_back("learning rate outside [1e-6, 1e-2]");
    if (weight_decay < 1e-5 || weight_decay > 1e-2) out.push_back("weight decay outside [1e-5, 1e-2]");
    if (dropout > 0.2) out.push_back("dropout outside [0, 0.2]");
    return out;
  }

  ModelConfig model_config(const CollaborativeKG& g) const {
    ModelConfig m;
    m.dim = dim;
    m.attention_dim = attention_dim;
    m.depth = depth;
    m.relation_count = g.relation_count();
    m.activation = activation;
    m.use_attention = use_attention;
    m.relation_names = g.relation_names();
    return m;
  }

  Selection selection_for(const PprStore& ppr, Index user, std::uint64_t stream) const {
    switch (selection) {
      case EdgeSelection::all: return Selection::all();
      case EdgeSelection::ppr_top_k: return Selection::top_k(ppr.scores(user), K);
      case EdgeSelection::random_k: return Selection::random(K, derive_seed(seed, stream, user));
    }
    return Selection::all();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"dropout", c.dropout},
          {"batch", c.batch_size},
          {"epochs", c.epochs},
          {"K", c.K},
          {"L", c.depth},
          {"d", c.dim},
          {"d_alpha", c.attention_dim},
          {"activation", to_string(c.activation)},
          {"negatives", c.negatives_per_positive},
          {"seed", c.seed},
          {"selection", to_string(c.selection)},
          {"attention", c.use_attention},
          {"exclude_target_edges", c.exclude_target_edges},
          {"target_fraction", c.target_fraction},
          {"patience", c.patience}};
}

// Inverse of to_json; missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("lr", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.dropout = j.value("dropout", c.dropout);
  c.batch_size = j.value("batch", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.K = j.value("K", c.K);
  c.depth = j.value("L", c.depth);
  c.dim = j.value("d", c.dim);
  c.attention_dim = j.value("d_alpha", c.attention_dim);
  if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
  c.negatives_per_positive = j.value("negatives", c.negatives_per_positive);
  c.seed = j.value("seed", c.seed);
  if (j.contains("selection")) c.selection = parse_edge_selection(j.at("selection").get<std::string>());
  c.use_attention = j.value("attention", c.use_attention);
  c.exclude_target_edges = j.value("exclude_target_edges", c.exclude_target_edges);
  c.target_fraction = j.value("target_fraction", c.target_fraction);
  c.patience = j.value("patience", c.patience);
  return c;
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Adam with bias correction and decoupled weight decay: every parameter is
// first scaled by (1 - lr * weight_decay), then moved by the Adam delta.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                      double weight_decay) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ContractError("optimizer state does not match parameter shape");
  }
  const auto g = grads.values();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!std::isfinite(g[k])) {
      throw NumericError("non-finite gradient at parameter " + std::to_string(k) + " (step " +
                         std::to_string(state.step + 1) + ")");
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * weight_decay;
  auto p = params.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1 - state.beta1) * g[k];
    state.v[k] = state.beta2 * state.v[k] + (1 - state.beta2) * g[k] * g[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    p[k] = p[k] * decay - lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  if (!params.all_finite()) throw NumericError("parameters became non-finite at step " + std::to_string(state.step));
}

// Uniform draws from `pool` minus the user's positives, by rejection. Both
// spans must be sorted and positives must be a subset of pool.
inline std::vector<Index> sample_negatives(std::span<const Index> positives, std::span<const Index> pool, Index n,
                                           Rng& rng) {
  if (positives.size() >= pool.size()) throw SamplingError("user has interacted with every candidate item");
  std::vector<Index> out;
  out.reserve(n);
  while (out.size() < n) {
    const Index j = pool[rng.below(pool.size())];
    if (!std::binary_search(positives.begin(), positives.end(), j)) out.push_back(j);
  }
  return out;
}

// Items with at least one training interaction. Items without any feedback
// (e.g. held-out new items) are never used as negatives.
inline std::vector<Index> negative_pool(const InteractionSet& train) { return train.items(); }

struct TrainLogRecord {
  int epoch = 0;
  double loss = 0;  // mean BPR loss per (u, i, j) triple
  std::size_t triples = 0;
  double seconds = 0;
  std::optional<double> validation_recall;
};

inline nlohmann::json to_json(const TrainLogRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"loss", r.loss}, {"triples", r.triples}, {"seconds", r.seconds}};
  if (r.validation_recall) j["val_recall"] = *r.validation_recall;
  return j;
}

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRecord> log;
  int best_epoch = 0;
};

struct TrainHooks {
  // Returns a validation recall for the given parameters; enables
  // best-by-validation checkpointing and patience-based stopping.
  std::function<double(const ModelParams&)> validate;
  // Receives one JSON line per epoch.
  std::ostream* log = nullptr;
  // Called after every optimizer step (tests use it to watch parameters).
  std::function<void(const ModelParams&)> after_step;
};

namespace detail {

struct UserStep {
  ModelParams grads;
  double loss = 0;
  std::size_t triples = 0;
};

inline UserStep user_step(const CollaborativeKG& g, const PprStore& ppr, const TrainConfig& cfg,
                          const ModelParams& params, Index user, std::span<const Index> positives,
                          std::span<const Index> pool, int epoch) {
  UserStep out{ModelParams(params.config()), 0.0, 0};
  if (positives.empty()) return out;
  Rng rng(derive_seed(cfg.seed, 0x7a1, static_cast<std::uint64_t>(epoch), user));

  std::vector<Index> targets(positives.begin(), positives.end());
  EdgeSet excluded;
  if (cfg.exclude_target_edges) {
    shuffle(targets, rng);
    std::size_t n = static_cast<std::size_t>(std::llround(cfg.target_fraction * static_cast<double>(targets.size())));
    n = std::clamp<std::size_t>(n, 1, targets.size() > 1 ? targets.size() - 1 : 1);
    targets.resize(n);
    std::sort(targets.begin(), targets.end());
    excluded = interaction_edges(g, user, targets);
  }

  const auto sel = cfg.selection_for(ppr, user, derive_seed(static_cast<std::uint64_t>(epoch), 0x5e));
  const auto graph = build_computation_graph(g, g.user_node(user), cfg.depth, sel, &excluded);
  ForwardOptions fo;
  fo.dropout = cfg.dropout;
  fo.rng = &rng;
  const ItemRange items{g.first_item_node(), g.item_count()};
  const auto tape = forward(graph, params, items, fo);
  const auto scores = item_scores(tape, graph);

  std::vector<double> d_logits(g.item_count(), 0.0);
  for (Index pos : targets) {
    for (Index neg : sample_negatives(positives, pool, cfg.negatives_per_positive, rng)) {
      const auto t = bpr_loss(scores[pos], scores[neg]);
      out.loss += t.loss;
      d_logits[pos] += t.d_pos;
      d_logits[neg] += t.d_neg;
      ++out.triples;
    }
  }
  out.grads = backward(tape, graph, params, d_logits);
  return out;
}

}  // namespace detail

// BPR training with Adam over per-user computation graphs. One optimizer
// step per batch of users; per-user gradients are summed in batch order so
// the result does not depend on the thread count.
inline TrainResult train(const CollaborativeKG& g, const InteractionSet& train_pairs, const PprStore& ppr,
                         const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (ppr.user_count() < g.user_count() || ppr.node_count() != g.node_count()) {
    throw ConfigError("PPR store does not cover this graph");
  }
  TrainResult result;
  result.params = init_params(cfg.model_config(g), cfg.seed);
  AdamState adam(result.params.size());

  const auto positives = train_pairs.items_by_user();
  const auto pool = negative_pool(train_pairs);
  std::vector<Index> users;
  for (Index u = 0; u < train_pairs.user_count; ++u) {
    if (!positives[u].empty()) users.push_back(u);
  }

  std::optional<double> best_recall;
  ModelParams best = result.params;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng order_rng(derive_seed(cfg.seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
    auto order = users;
    shuffle(order, order_rng);

    double epoch_loss = 0;
    std::size_t epoch_triples = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - b);
      std::vector<detail::UserStep> steps(n);
      parallel_for(n, cfg.threads, [&](std::size_t k) {
        const Index u = order[b + k];
        steps[k] = detail::user_step(g, ppr, cfg, result.params, u, positives[u], pool, epoch);
      });
      ModelParams grads(result.params.config());
      for (const auto& s : steps) {
        grads += s.grads;
        epoch_loss += s.loss;
        epoch_triples += s.triples;
      }
      adam_step(result.params, grads, adam, cfg.learning_rate, cfg.weight_decay);
      if (hooks.after_step) hooks.after_step(result.params);
    }

    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.triples = epoch_triples;
    rec.loss = epoch_triples ? epoch_loss / static_cast<double>(epoch_triples) : 0.0;
    if (hooks.validate) {
      rec.validation_recall = hooks.validate(result.params);
      if (!best_recall || *rec.validation_recall > *best_recall) {
        best_recall = rec.validation_recall;
        best = result.params;
        result.best_epoch = epoch;
        stale = 0;
      } else {
        ++stale;
      }
    } else {
      result.best_epoch = epoch;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    if (hooks.log) *hooks.log << to_json(rec).dump() << '\n';
    if (hooks.validate && cfg.patience > 0 && stale >= cfg.patience) break;
  }
  if (hooks.validate && best_recall) result.params = best;
  return result;
}

}  // namespace kucnet
