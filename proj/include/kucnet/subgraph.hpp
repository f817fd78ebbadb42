#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kucnet/ckg.hpp"
#include "kucnet/common.hpp"
#include "kucnet/rng.hpp"

namespace kucnet {

// One edge of a layered computation graph. head_index / tail_index point
// into the node arrays of layers l - 1 and l, so propagation is a plain
// gather-scatter over the edge array.
struct LayerEdge {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;
  Index head_index = 0;
  Index tail_index = 0;
  bool operator==(const LayerEdge&) const = default;
  FullEdge full() const { return {head, relation, tail}; }
};

// User-centric computation graph (V^0..V^L, E^1..E^L).
// Invariants: nodes[0] == {user}; every edge of layer l has its head in
// nodes[l - 1]; nodes[l] is exactly the sorted set of tails of layer l.
struct LayeredGraph {
  NodeId user = 0;
  int depth = 0;
  std::vector<std::vector<NodeId>> nodes;     // nodes[l], l = 0..depth
  std::vector<std::vector<LayerEdge>> edges;  // edges[l - 1] is E^l

  const std::vector<LayerEdge>& layer(int l) const { return edges[static_cast<std::size_t>(l - 1)]; }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& e : edges) n += e.size();
    return n;
  }

  Index index_of(int l, NodeId n) const {
    const auto& v = nodes[static_cast<std::size_t>(l)];
    auto it = std::lower_bound(v.begin(), v.end(), n);
    return it != v.end() && *it == n ? static_cast<Index>(it - v.begin()) : kNoIndex;
  }

  bool operator==(const LayeredGraph&) const = default;
};

// Sorted set of concrete edges, used to hide target interactions.
class EdgeSet {
 public:
  EdgeSet() = default;
  explicit EdgeSet(std::vector<FullEdge> edges) : edges_(std::move(edges)) {
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  }
  bool contains(NodeId s, RelationId r, NodeId o) const {
    return std::binary_search(edges_.begin(), edges_.end(), FullEdge{s, r, o});
  }
  bool empty() const { return edges_.empty(); }
  std::size_t size() const { return edges_.size(); }

 private:
  std::vector<FullEdge> edges_;
};

// The interaction edge and its reverse for each (user, item) pair.
inline EdgeSet interaction_edges(const CollaborativeKG& g, Index user, std::span<const Index> items) {
  std::vector<FullEdge> out;
  for (Index i : items) {
    out.push_back({g.user_node(user), CollaborativeKG::kInteract, g.item_node(i)});
    out.push_back({g.item_node(i), g.reverse(CollaborativeKG::kInteract), g.user_node(user)});
  }
  return EdgeSet(std::move(out));
}

enum class EdgeSelection { all, ppr_top_k, random_k };

inline const char* to_string(EdgeSelection s) {
  switch (s) {
    case EdgeSelection::all: return "all";
    case EdgeSelection::ppr_top_k: return "ppr";
    case EdgeSelection::random_k: return "random";
  }
  return "?";
}

inline EdgeSelection parse_edge_selection(const std::string& s) {
  if (s == "all" || s == "none") return EdgeSelection::all;
  if (s == "ppr") return EdgeSelection::ppr_top_k;
  if (s == "random") return EdgeSelection::random_k;
  throw ConfigError("unknown edge selection '" + s + "'");
}

// Per-head edge selection applied while growing each layer.
struct Selection {
  EdgeSelection mode = EdgeSelection::all;
  std::size_t k = 0;
  std::span<const double> scores;  // PPR scores indexed by node (ppr_top_k)
  std::uint64_t seed = 0;          // random_k stream

  static Selection all() { return {}; }
  static Selection top_k(std::span<const double> scores, std::size_t k) {
    return {EdgeSelection::ppr_top_k, k, scores, 0};
  }
  static Selection random(std::size_t k, std::uint64_t seed) { return {EdgeSelection::random_k, k, {}, seed}; }
};

namespace detail {

// Given the candidate edges of one head (in their canonical order), keeps the
// selected ones, preserving order. Top-K ranks by tail score descending with
// ties broken by (tail id, relation id) ascending.
inline void select_group(std::vector<LayerEdge>& group, const Selection& sel, int layer) {
  if (sel.mode == EdgeSelection::all || group.size() <= sel.k) return;
  std::vector<std::size_t> order(group.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  if (sel.mode == EdgeSelection::ppr_top_k) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = sel.scores[group[a].tail], sb = sel.scores[group[b].tail];
      if (sa != sb) return sa > sb;
      if (group[a].tail != group[b].tail) return group[a].tail < group[b].tail;
      return group[a].relation < group[b].relation;
    });
  } else {
    Rng rng(derive_seed(sel.seed, static_cast<std::uint64_t>(layer), group.front().head));
    shuffle(order, rng);
  }
  order.resize(sel.k);
  std::sort(order.begin(), order.end());
  std::vector<LayerEdge> kept;
  kept.reserve(order.size());
  for (auto k : order) kept.push_back(group[k]);
  group.swap(kept);
}

// Fills nodes[l] from the tails of edges[l - 1] and assigns tail indices.
inline void finalize_layer(LayeredGraph& g, int l) {
  auto& edges = g.edges[static_cast<std::size_t>(l - 1)];
  auto& nodes = g.nodes[static_cast<std::size_t>(l)];
  nodes.clear();
  for (const auto& e : edges) nodes.push_back(e.tail);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (auto& e : edges) {
    e.tail_index = static_cast<Index>(std::lower_bound(nodes.begin(), nodes.end(), e.tail) - nodes.begin());
  }
}

inline void validate_depth(int depth) {
  if (depth < 1) throw ConfigError("depth L must be >= 1");
}

// Layer-by-layer growth from `user` where `out_edges(head)` yields the
// candidate edges of a head in canonical order.
template <typename OutEdges>
LayeredGraph grow(NodeId user, int depth, const Selection& sel, OutEdges&& out_edges) {
  validate_depth(depth);
  if (sel.mode != EdgeSelection::all && sel.k == 0) throw ConfigError("K must be >= 1");
  LayeredGraph g;
  g.user = user;
  g.depth = depth;
  g.nodes.resize(static_cast<std::size_t>(depth) + 1);
  g.edges.resize(static_cast<std::size_t>(depth));
  g.nodes[0] = {user};
  std::vector<LayerEdge> group;
  for (int l = 1; l <= depth; ++l) {
    const auto& heads = g.nodes[static_cast<std::size_t>(l - 1)];
    auto& layer = g.edges[static_cast<std::size_t>(l - 1)];
    for (Index h = 0; h < heads.size(); ++h) {
      group.clear();
      out_edges(heads[h], [&](RelationId r, NodeId o) { group.push_back({heads[h], r, o, h, 0}); });
      if (group.empty()) continue;
      select_group(group, sel, l);
      layer.insert(layer.end(), group.begin(), group.end());
    }
    finalize_layer(g, l);
  }
  return g;
}

}  // namespace detail

// Builds the (optionally pruned) user-centric computation graph directly.
// Layer l only expands the heads that survived selection at layer l - 1.
// Edges in `excluded` are treated as absent from the CKG.
inline LayeredGraph build_computation_graph(const CollaborativeKG& g, NodeId user, int depth,
                                            const Selection& sel = Selection::all(),
                                            const EdgeSet* excluded = nullptr) {
  if (user >= g.node_count()) throw IndexError("node out of range");
  return detail::grow(user, depth, sel, [&](NodeId head, auto&& emit) {
    for (const auto& e : g.out_edges(head)) {
      if (excluded && excluded->contains(head, e.relation, e.tail)) continue;
      emit(e.relation, e.tail);
    }
  });
}

// Exact frontier expansion, no pruning.
inline LayeredGraph layered_expansion(const CollaborativeKG& g, NodeId user, int depth,
                                      const EdgeSet* excluded = nullptr) {
  return build_computation_graph(g, user, depth, Selection::all(), excluded);
}

// Prunes an existing layered graph layer by layer: layer l keeps only edges
// whose head survived in the pruned layer l - 1, then applies `sel` per head.
inline LayeredGraph prune(const LayeredGraph& in, const Selection& sel) {
  if (sel.mode != EdgeSelection::all && sel.k == 0) throw ConfigError("K must be >= 1");
  LayeredGraph out;
  out.user = in.user;
  out.depth = in.depth;
  out.nodes.resize(in.nodes.size());
  out.edges.resize(in.edges.size());
  out.nodes[0] = {in.user};
  std::vector<LayerEdge> group;
  for (int l = 1; l <= in.depth; ++l) {
    const auto& heads = out.nodes[static_cast<std::size_t>(l - 1)];
    auto& layer = out.edges[static_cast<std::size_t>(l - 1)];
    const auto& src = in.layer(l);
    // Group by head, keeping the input order inside each group.
    std::vector<std::size_t> order(src.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return src[a].head < src[b].head; });
    std::size_t k = 0;
    while (k < order.size()) {
      const NodeId head = src[order[k]].head;
      group.clear();
      for (; k < order.size() && src[order[k]].head == head; ++k) group.push_back(src[order[k]]);
      const auto h = std::lower_bound(heads.begin(), heads.end(), head);
      if (h == heads.end() || *h != head) continue;
      for (auto& e : group) e.head_index = static_cast<Index>(h - heads.begin());
      detail::select_group(group, sel, l);
      layer.insert(layer.end(), group.begin(), group.end());
    }
    detail::finalize_layer(out, l);
  }
  return out;
}

inline LayeredGraph prune_topk(const LayeredGraph& in, std::span<const double> scores, std::size_t k) {
  return prune(in, Selection::top_k(scores, k));
}

// Keeps only the edges lying on some layered path that ends at `target` in
// the last layer. Empty (apart from V^0) when target is not in V^L.
inline LayeredGraph restrict_to_target(const LayeredGraph& in, NodeId target) {
  LayeredGraph out;
  out.user = in.user;
  out.depth = in.depth;
  out.nodes.resize(in.nodes.size());
  out.edges.resize(in.edges.size());
  out.nodes[0] = {in.user};
  std::vector<std::vector<bool>> alive(in.nodes.size());
  for (std::size_t l = 0; l < in.nodes.size(); ++l) alive[l].assign(in.nodes[l].size(), false);
  const Index t = in.index_of(in.depth, target);
  if (t == kNoIndex) return out;
  alive[static_cast<std::size_t>(in.depth)][t] = true;
  for (int l = in.depth; l >= 1; --l) {
    for (const auto& e : in.layer(l)) {
      if (alive[static_cast<std::size_t>(l)][e.tail_index]) alive[static_cast<std::size_t>(l - 1)][e.head_index] = true;
    }
  }
  for (int l = 1; l <= in.depth; ++l) {
    auto& layer = out.edges[static_cast<std::size_t>(l - 1)];
    const auto& heads = out.nodes[static_cast<std::size_t>(l - 1)];
    for (auto e : in.layer(l)) {
      if (!alive[static_cast<std::size_t>(l)][e.tail_index]) continue;
      e.head_index = static_cast<Index>(std::lower_bound(heads.begin(), heads.end(), e.head) - heads.begin());
      layer.push_back(e);
    }
    detail::finalize_layer(out, l);
  }
  return out;
}

// Undirected BFS distances (the CKG is reverse-closed, so out-edges suffice).
// Nodes farther than max_depth, or unreachable, get -1.
inline std::vector<int> bfs_distances(const CollaborativeKG& g, NodeId source, int max_depth) {
  std::vector<int> dist(g.node_count(), -1);
  std::deque<NodeId> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const NodeId n = queue.front();
    queue.pop_front();
    if (dist[n] == max_depth) continue;
    for (const auto& e : g.out_edges(n)) {
      if (dist[e.tail] < 0) {
        dist[e.tail] = dist[n] + 1;
        queue.push_back(e.tail);
      }
    }
  }
  return dist;
}

// Nodes whose distances to user and item sum to at most L, and the CKG
// edges among them.
struct UISubgraph {
  NodeId user = 0;
  NodeId item = 0;
  int depth = 0;
  std::vector<NodeId> nodes;    // sorted
  std::vector<FullEdge> edges;  // sorted by (head, tail, relation)

  bool contains_node(NodeId n) const { return std::binary_search(nodes.begin(), nodes.end(), n); }
};

inline UISubgraph extract_ui_subgraph(const CollaborativeKG& g, NodeId user, NodeId item, int depth) {
  detail::validate_depth(depth);
  if (user >= g.node_count() || item >= g.node_count()) throw IndexError("node out of range");
  const auto du = bfs_distances(g, user, depth);
  const auto di = bfs_distances(g, item, depth);
  UISubgraph s{user, item, depth, {}, {}};
  for (NodeId n = 0; n < g.node_count(); ++n) {
    if (du[n] >= 0 && di[n] >= 0 && du[n] + di[n] <= depth) s.nodes.push_back(n);
  }
  for (NodeId n : s.nodes) {
    for (const auto& e : g.out_edges(n)) {
      if (s.contains_node(e.tail)) s.edges.push_back({n, e.relation, e.tail});
    }
  }
  return s;
}

// Computation graph of one (user, item) pair: length-L walks from user to
// item, grown inside the U-I subgraph and trimmed back from the item.
inline LayeredGraph ui_computation_graph(const UISubgraph& sub) {
  auto full = detail::grow(sub.user, sub.depth, Selection::all(), [&](NodeId head, auto&& emit) {
    auto lo = std::lower_bound(sub.edges.begin(), sub.edges.end(), FullEdge{head, 0, 0});
    for (; lo != sub.edges.end() && lo->head == head; ++lo) emit(lo->relation, lo->tail);
  });
  return restrict_to_target(full, sub.item);
}

// Per-layer node and edge sets of one (user, item) pair, collected by
// enumerating every walk user -r1-> n1 ... -rL-> item.
struct PathLayers {
  std::vector<std::set<NodeId>> nodes;    // index 0..L
  std::vector<std::set<FullEdge>> edges;  // index 1..L (slot 0 unused)
  std::size_t path_count = 0;
};

inline PathLayers enumerate_path_layers(const CollaborativeKG& g, NodeId user, NodeId item, int depth) {
  detail::validate_depth(depth);
  PathLayers out;
  out.nodes.resize(static_cast<std::size_t>(depth) + 1);
  out.edges.resize(static_cast<std::size_t>(depth) + 1);
  std::vector<FullEdge> path;
  const auto to_item = bfs_distances(g, item, depth);
  std::function<void(NodeId, int)> walk = [&](NodeId n, int l) {
    if (l == depth) {
      if (n != item) return;
      ++out.path_count;
      out.nodes[0].insert(user);
      for (int k = 1; k <= depth; ++k) {
        out.edges[static_cast<std::size_t>(k)].insert(path[static_cast<std::size_t>(k - 1)]);
        out.nodes[static_cast<std::size_t>(k)].insert(path[static_cast<std::size_t>(k - 1)].tail);
      }
      return;
    }
    // A walk can only finish at the item if the remaining hops cover the distance.
    if (to_item[n] < 0 || to_item[n] > depth - l) return;
    for (const auto& e : g.out_edges(n)) {
      path.push_back({n, e.relation, e.tail});
      walk(e.tail, l + 1);
      path.pop_back();
    }
  };
  walk(user, 0);
  return out;
}

struct ContainmentViolation {
  NodeId item = 0;
  int layer = 0;
  bool is_edge = false;
  NodeId node = 0;
  FullEdge edge{};
};

struct ContainmentReport {
  std::size_t items_checked = 0;
  std::size_t paths_enumerated = 0;
  std::vector<ContainmentViolation> violations;
  bool ok() const { return violations.empty(); }
};

// Checks, for every item node given, that the per-layer node and edge sets of
// its walks from user are contained in the unpruned user-centric layers.
inline ContainmentReport verify_containment(const CollaborativeKG& g, NodeId user, int depth,
                                            std::span<const NodeId> item_nodes) {
  const auto layered = layered_expansion(g, user, depth);
  std::vector<std::set<FullEdge>> edge_sets(static_cast<std::size_t>(depth) + 1);
  for (int l = 1; l <= depth; ++l) {
    for (const auto& e : layered.layer(l)) edge_sets[static_cast<std::size_t>(l)].insert(e.full());
  }
  ContainmentReport report;
  for (NodeId item : item_nodes) {
    const auto paths = enumerate_path_layers(g, user, item, depth);
    ++report.items_checked;
    report.paths_enumerated += paths.path_count;
    for (int l = 0; l <= depth; ++l) {
      for (NodeId n : paths.nodes[static_cast<std::size_t>(l)]) {
        if (layered.index_of(l, n) == kNoIndex) report.violations.push_back({item, l, false, n, {}});
      }
      if (l == 0) continue;
      for (const auto& e : paths.edges[static_cast<std::size_t>(l)]) {
        if (!edge_sets[static_cast<std::size_t>(l)].count(e)) report.violations.push_back({item, l, true, 0, e});
      }
    }
  }
  return report;
}

// reach[k][n] = number of item nodes at the end of some walk of exactly k
// steps from n, for k = 0..max_steps.
inline std::vector<std::vector<std::uint32_t>> item_reach_counts(const CollaborativeKG& g, int max_steps) {
  std::vector<std::vector<std::uint32_t>> reach(static_cast<std::size_t>(max_steps) + 1,
                                                std::vector<std::uint32_t>(g.node_count(), 0));
  std::vector<NodeId> frontier, next;
  std::vector<std::uint32_t> mark(g.node_count(), 0);
  std::uint32_t stamp = 0;
  for (NodeId n = 0; n < g.node_count(); ++n) {
    frontier.assign(1, n);
    for (int k = 0; k <= max_steps; ++k) {
      if (k > 0) {
        ++stamp;
        next.clear();
        for (NodeId f : frontier) {
          for (const auto& e : g.out_edges(f)) {
            if (mark[e.tail] != stamp) {
              mark[e.tail] = stamp;
              next.push_back(e.tail);
            }
          }
        }
        frontier.swap(next);
      }
      std::uint32_t items = 0;
      for (NodeId f : frontier) items += g.is_item_node(f) ? 1 : 0;
      reach[static_cast<std::size_t>(k)][n] = items;
    }
  }
  return reach;
}

// Sum over all items i of the edge counts of the per-(user, i) computation
// graphs, read off an unpruned user-centric graph: an edge of layer l ending
// at o belongs to the graph of every item reachable from o in L - l steps.
inline std::uint64_t per_item_edge_total(const LayeredGraph& layered,
                                         const std::vector<std::vector<std::uint32_t>>& reach) {
  std::uint64_t total = 0;
  for (int l = 1; l <= layered.depth; ++l) {
    const auto& counts = reach.at(static_cast<std::size_t>(layered.depth - l));
    for (const auto& e : layered.layer(l)) total += counts[e.tail];
  }
  return total;
}

// Debug dump: {"user", "depth", "layers": [{"layer", "nodes", "edges": [[h, r, t, score?]]}]}.
inline nlohmann::json to_json(const LayeredGraph& g, std::span<const double> scores = {}) {
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l <= g.depth; ++l) {
    nlohmann::json layer{{"layer", l}, {"nodes", g.nodes[static_cast<std::size_t>(l)]}};
    nlohmann::json edges = nlohmann::json::array();
    if (l > 0) {
      for (const auto& e : g.layer(l)) {
        nlohmann::json row{e.head, e.relation, e.tail};
        if (!scores.empty()) row.push_back(scores[e.tail]);
        edges.push_back(row);
      }
    }
    layer["edges"] = edges;
    layers.push_back(layer);
  }
  return {{"user", g.user}, {"depth", g.depth}, {"layers", layers}};
}

}  // namespace kucnet
