#pragma once

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kucnet/ckg.hpp"
#include "kucnet/model.hpp"
#include "kucnet/subgraph.hpp"

namespace kucnet {

struct ExplanationEdge {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;
  int layer = 0;
  double weight = 0;
  bool operator==(const ExplanationEdge&) const = default;
};

// Attention-weighted subgraph supporting the score of (user, item).
struct Explanation {
  NodeId user = 0;
  NodeId item = 0;
  double threshold = 0.5;
  std::vector<ExplanationEdge> edges;  // layer-major, in computation-graph order
  std::vector<NodeId> nodes;           // sorted, distinct

  bool empty() const { return edges.empty(); }
  bool operator==(const Explanation&) const = default;
};

// Keeps edges whose attention weight is >= threshold. With path pruning on,
// additionally drops every edge that is not on a surviving layered path
// user -> ... -> item. An item outside V^L yields an empty explanation.
inline Explanation extract_explanation(const ForwardTape& tape, const LayeredGraph& graph, NodeId item,
                                       double threshold = 0.5, bool path_prune = true) {
  if (tape.signature != graph_signature(graph) || tape.layers.size() != static_cast<std::size_t>(graph.depth)) {
    throw ContractError("tape was not produced from this graph");
  }
  Explanation out;
  out.user = graph.user;
  out.item = item;
  out.threshold = threshold;
  const int L = graph.depth;
  if (graph.index_of(L, item) == kNoIndex) return out;

  auto kept = [&](int l, std::size_t k) { return tape.layer(l).attention[k] >= threshold; };

  // forward[l][n]: node n of V^l reachable from the user through kept edges.
  // backward[l][n]: node n of V^l reaches the item at layer L through kept edges.
  std::vector<std::vector<char>> fwd(static_cast<std::size_t>(L) + 1), bwd(static_cast<std::size_t>(L) + 1);
  for (int l = 0; l <= L; ++l) {
    const auto n = graph.nodes[static_cast<std::size_t>(l)].size();
    fwd[static_cast<std::size_t>(l)].assign(n, path_prune ? 0 : 1);
    bwd[static_cast<std::size_t>(l)].assign(n, path_prune ? 0 : 1);
  }
  if (path_prune) {
    fwd[0][0] = 1;
    for (int l = 1; l <= L; ++l) {
      const auto& edges = graph.layer(l);
      for (std::size_t k = 0; k < edges.size(); ++k) {
        if (kept(l, k) && fwd[static_cast<std::size_t>(l - 1)][edges[k].head_index]) {
          fwd[static_cast<std::size_t>(l)][edges[k].tail_index] = 1;
        }
      }
    }
    bwd[static_cast<std::size_t>(L)][graph.index_of(L, item)] = 1;
    for (int l = L; l >= 1; --l) {
      const auto& edges = graph.layer(l);
      for (std::size_t k = 0; k < edges.size(); ++k) {
        if (kept(l, k) && bwd[static_cast<std::size_t>(l)][edges[k].tail_index]) {
          bwd[static_cast<std::size_t>(l - 1)][edges[k].head_index] = 1;
        }
      }
    }
  }

  std::set<NodeId> nodes;
  for (int l = 1; l <= L; ++l) {
    const auto& edges = graph.layer(l);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      if (!kept(l, k) || !fwd[static_cast<std::size_t>(l - 1)][e.head_index] ||
          !bwd[static_cast<std::size_t>(l)][e.tail_index]) {
        continue;
      }
      out.edges.push_back({e.head, e.relation, e.tail, l, tape.layer(l).attention[k]});
      nodes.insert(e.head);
      nodes.insert(e.tail);
    }
  }
  out.nodes.assign(nodes.begin(), nodes.end());
  return out;
}

inline constexpr int kExplanationSchemaVersion = 1;

// Schema (version 1):
//   {"schema": "kucnet.explanation", "version": 1,
//    "user": node, "item": node, "threshold": t,
//    "nodes": [{"id": node, "type": "user"|"item"|"entity", "local": id}],
//    "edges": [{"head": node, "relation": r, "relation_name": "...",
//               "tail": node, "layer": l, "weight": w}]}
// Node ids are global CKG node ids; "local" is the id within its type.
inline std::string export_json(const Explanation& e, const CollaborativeKG& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (NodeId n : e.nodes) {
    const auto ref = g.node_ref(n);
    nodes.push_back({{"id", n}, {"type", to_string(ref.kind)}, {"local", ref.local}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& x : e.edges) {
    edges.push_back({{"head", x.head},
                     {"relation", x.relation},
                     {"relation_name", g.relation_name(x.relation)},
                     {"tail", x.tail},
                     {"layer", x.layer},
                     {"weight", x.weight}});
  }
  nlohmann::json j{{"schema", "kucnet.explanation"},
                   {"version", kExplanationSchemaVersion},
                   {"user", e.user},
                   {"item", e.item},
                   {"threshold", e.threshold},
                   {"nodes", nodes},
                   {"edges", edges}};
  return j.dump(2) + "\n";
}

inline Explanation parse_explanation_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema") != "kucnet.explanation") throw FormatError("not an explanation document");
    if (j.at("version").get<int>() != kExplanationSchemaVersion) throw FormatError("unsupported explanation version");
    Explanation e;
    e.user = j.at("user").get<NodeId>();
    e.item = j.at("item").get<NodeId>();
    e.threshold = j.at("threshold").get<double>();
    for (const auto& n : j.at("nodes")) e.nodes.push_back(n.at("id").get<NodeId>());
    for (const auto& x : j.at("edges")) {
      e.edges.push_back({x.at("head").get<NodeId>(), x.at("relation").get<RelationId>(), x.at("tail").get<NodeId>(),
                         x.at("layer").get<int>(), x.at("weight").get<double>()});
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("bad explanation json: ") + ex.what());
  }
}

// Graphviz rendering: one rank per layer (a node is placed at the first
// layer it appears in), edges labelled "relation weight" with 2 decimals.
inline std::string export_dot(const Explanation& e, const CollaborativeKG& g) {
  std::ostringstream out;
  out << "digraph explanation {\n  rankdir=LR;\n";
  auto name = [](NodeId n) { return "n" + std::to_string(n); };
  std::vector<std::vector<NodeId>> ranks;
  std::set<NodeId> placed;
  auto place = [&](NodeId n, int layer) {
    if (!placed.insert(n).second) return;
    if (ranks.size() <= static_cast<std::size_t>(layer)) ranks.resize(static_cast<std::size_t>(layer) + 1);
    ranks[static_cast<std::size_t>(layer)].push_back(n);
  };
  for (const auto& x : e.edges) {
    place(x.head, x.layer - 1);
    place(x.tail, x.layer);
  }
  for (NodeId n : e.nodes) {
    const auto ref = g.node_ref(n);
    const char* shape = ref.kind == NodeKind::user ? "box" : ref.kind == NodeKind::item ? "ellipse" : "diamond";
    out << "  " << name(n) << " [label=\"" << to_string(ref.kind) << ' ' << ref.local << "\", shape=" << shape
        << "];\n";
  }
  for (const auto& rank : ranks) {
    if (rank.empty()) continue;
    out << "  { rank=same;";
    for (NodeId n : rank) out << ' ' << name(n) << ';';
    out << " }\n";
  }
  for (const auto& x : e.edges) {
    char weight[32];
    std::snprintf(weight, sizeof weight, "%.2f", x.weight);
    out << "  " << name(x.head) << " -> " << name(x.tail) << " [label=\"" << g.relation_name(x.relation) << ' '
        << weight << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace kucnet
