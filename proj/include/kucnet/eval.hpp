#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kucnet/ckg.hpp"
#include "kucnet/dataset.hpp"
#include "kucnet/model.hpp"
#include "kucnet/parallel.hpp"
#include "kucnet/ppr.hpp"
#include "kucnet/rng.hpp"
#include "kucnet/subgraph.hpp"

namespace kucnet {

// How user computation graphs are built at inference time.
struct InferenceConfig {
  EdgeSelection selection = EdgeSelection::ppr_top_k;
  std::size_t K = 35;
  std::uint64_t seed = 1;  // random_k stream

  Selection selection_for(const PprStore& ppr, Index user) const {
    switch (selection) {
      case EdgeSelection::all: return Selection::all();
      case EdgeSelection::ppr_top_k: return Selection::top_k(ppr.scores(user), K);
      case EdgeSelection::random_k: return Selection::random(K, derive_seed(seed, 0x1f, user));
    }
    return Selection::all();
  }
};

struct UserForward {
  LayeredGraph graph;
  ForwardTape tape;
};

inline UserForward run_user(const ModelParams& params, const CollaborativeKG& g, const PprStore& ppr, Index user,
                            const InferenceConfig& ic = {}) {
  if (user >= g.user_count()) throw IndexError("user " + std::to_string(user) + " out of range");
  UserForward out;
  out.graph = build_computation_graph(g, g.user_node(user), params.config().depth, ic.selection_for(ppr, user));
  out.tape = forward(out.graph, params, ItemRange{g.first_item_node(), g.item_count()});
  return out;
}

inline std::vector<double> model_scores(const ModelParams& params, const CollaborativeKG& g, const PprStore& ppr,
                                        Index user, const InferenceConfig& ic = {}) {
  const auto f = run_user(params, g, ppr, user, ic);
  return item_scores(f.tape, f.graph);
}

// Top-n items by score descending, ties broken by ascending item id.
// Items in `exclude` (sorted) are never ranked.
inline std::vector<Index> top_n(std::span<const double> scores, std::span<const Index> exclude, std::size_t n) {
  std::vector<Index> candidates;
  candidates.reserve(scores.size());
  for (Index i = 0; i < scores.size(); ++i) {
    if (!std::binary_search(exclude.begin(), exclude.end(), i)) candidates.push_back(i);
  }
  const auto better = [&](Index a, Index b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
  n = std::min(n, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(), better);
  candidates.resize(n);
  return candidates;
}

// |top-N ∩ T| / |T|; nullopt for an empty test set.
inline std::optional<double> recall_at_n(std::span<const Index> ranked, std::span<const Index> test, std::size_t n) {
  if (test.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < std::min(n, ranked.size()); ++k) {
    if (std::binary_search(test.begin(), test.end(), ranked[k])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

// DCG@N / IDCG@N with binary relevance and 1 / log2(rank + 1) discounts.
inline std::optional<double> ndcg_at_n(std::span<const Index> ranked, std::span<const Index> test, std::size_t n) {
  if (test.empty()) return std::nullopt;
  double dcg = 0, idcg = 0;
  for (std::size_t k = 0; k < std::min(n, ranked.size()); ++k) {
    if (std::binary_search(test.begin(), test.end(), ranked[k])) dcg += 1.0 / std::log2(static_cast<double>(k) + 2);
  }
  for (std::size_t k = 0; k < std::min(n, test.size()); ++k) idcg += 1.0 / std::log2(static_cast<double>(k) + 2);
  return dcg / idcg;
}

struct UserMetrics {
  Index user = 0;
  double recall = 0;
  double ndcg = 0;
};

struct EvalReport {
  std::size_t n = 20;
  std::vector<UserMetrics> users;  // users with a non-empty test set, ascending
  std::size_t skipped = 0;         // users with test items excluded by the scorer contract
  double recall = 0;
  double ndcg = 0;
};

// Dense scores over all items for one user. Scorers only ever see the user
// id; the evaluator consults test interactions after ranking.
using Scorer = std::function<std::vector<double>(Index user)>;

inline EvalReport evaluate_scorer(const Scorer& scorer, const InteractionSet& train, const InteractionSet& test,
                                  std::size_t n = 20, unsigned threads = 1) {
  if (train.user_count != test.user_count || train.item_count != test.item_count) {
    throw ConfigError("train and test splits disagree on user or item counts");
  }
  const auto known = train.items_by_user();
  const auto held = test.items_by_user();
  std::vector<Index> users;
  for (Index u = 0; u < test.user_count; ++u) {
    if (!held[u].empty()) users.push_back(u);
  }
  if (users.empty()) throw EmptyDatasetError("no user has test interactions; nothing to evaluate");
  EvalReport report;
  report.n = n;
  report.users.resize(users.size());
  parallel_for(users.size(), threads, [&](std::size_t k) {
    const Index u = users[k];
    const auto scores = scorer(u);
    if (scores.size() != train.item_count) throw ContractError("scorer returned the wrong number of scores");
    const auto ranked = top_n(scores, known[u], n);
    report.users[k] = {u, *recall_at_n(ranked, held[u], n), *ndcg_at_n(ranked, held[u], n)};
  });
  for (const auto& m : report.users) {
    report.recall += m.recall;
    report.ndcg += m.ndcg;
  }
  report.recall /= static_cast<double>(report.users.size());
  report.ndcg /= static_cast<double>(report.users.size());
  report.skipped = test.user_count - users.size();
  return report;
}

inline Scorer model_scorer(const ModelParams& params, const CollaborativeKG& g, const PprStore& ppr,
                           InferenceConfig ic = {}) {
  return [&params, &g, &ppr, ic](Index u) { return model_scores(params, g, ppr, u, ic); };
}

inline EvalReport evaluate(const ModelParams& params, const CollaborativeKG& g, const PprStore& ppr,
                           const InteractionSet& train, const InteractionSet& test, std::size_t n = 20,
                           const InferenceConfig& ic = {}, unsigned threads = 1) {
  return evaluate_scorer(model_scorer(params, g, ppr, ic), train, test, n, threads);
}

// Baselines.

// Ranks items by the user's PPR score of the item node.
inline Scorer ppr_scorer(const CollaborativeKG& g, const PprStore& ppr) {
  return [&g, &ppr](Index u) {
    const auto s = ppr.scores(u);
    std::vector<double> out(g.item_count());
    for (Index i = 0; i < g.item_count(); ++i) out[i] = s[g.item_node(i)];
    return out;
  };
}

// Ranks items by their number of training interactions.
inline Scorer popularity_scorer(const InteractionSet& train) {
  std::vector<double> counts(train.item_count, 0.0);
  for (const auto& p : train.pairs) counts[p.item] += 1;
  return [counts = std::move(counts)](Index) { return counts; };
}

inline Scorer random_scorer(Index item_count, std::uint64_t seed) {
  return [item_count, seed](Index u) {
    Rng rng(derive_seed(seed, 0x4a4d, u));
    std::vector<double> out(item_count);
    for (auto& v : out) v = rng.uniform();
    return out;
  };
}

inline std::string format_report(const EvalReport& r, bool per_user = true) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);
  if (per_user) {
    for (const auto& m : r.users) {
      out << "user " << m.user << " recall@" << r.n << ' ' << m.recall << " ndcg@" << r.n << ' ' << m.ndcg << '\n';
    }
  }
  out << "users_evaluated " << r.users.size() << '\n'
      << "users_skipped " << r.skipped << '\n'
      << "recall@" << r.n << ' ' << r.recall << '\n'
      << "ndcg@" << r.n << ' ' << r.ndcg << '\n';
  return out.str();
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"n", r.n},
          {"users_evaluated", r.users.size()},
          {"users_skipped", r.skipped},
          {"recall", r.recall},
          {"ndcg", r.ndcg}};
}

}  // namespace kucnet
