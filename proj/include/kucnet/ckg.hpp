#pragma once

#include <algorithm>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kucnet/binary_io.hpp"
#include "kucnet/common.hpp"
#include "kucnet/dataset.hpp"

namespace kucnet {

enum class NodeKind : std::uint8_t { user = 0, item = 1, entity = 2 };

inline const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::user: return "user";
    case NodeKind::item: return "item";
    case NodeKind::entity: return "entity";
  }
  return "?";
}

struct NodeRef {
  NodeKind kind = NodeKind::user;
  Index local = 0;
  bool operator==(const NodeRef&) const = default;
};

struct Edge {
  RelationId relation = 0;
  NodeId tail = 0;
  bool operator==(const Edge&) const = default;
};

struct FullEdge {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;
  auto operator<=>(const FullEdge&) const = default;
};

// Collaborative knowledge graph: users, items and KG entities in one
// multi-relational graph.
//
// Global node layout: users [0, U), items [U, U + I), then the entities not
// aligned to an item or user, in ascending entity id. An aligned entity
// shares the node of its item (or user).
//
// Relation layout: 0 is "interact", KG relation r is r + 1; these F forward
// relations are followed by their reverses, so reverse(f) = f + F.
// Every stored edge (s, r, o) has its partner (o, reverse(r), s).
//
// Out-edges of each head are sorted by (tail, relation). Immutable once built.
class CollaborativeKG {
 public:
  static constexpr RelationId kInteract = 0;

  CollaborativeKG() = default;

  Index user_count() const { return user_count_; }
  Index item_count() const { return item_count_; }
  Index entity_count() const { return static_cast<Index>(entity_nodes_.size()); }
  NodeId node_count() const { return static_cast<NodeId>(node_refs_.size()); }
  RelationId kg_relation_count() const { return forward_count_ - 1; }
  RelationId forward_relation_count() const { return forward_count_; }
  RelationId relation_count() const { return 2 * forward_count_; }
  std::size_t edge_count() const { return edges_.size(); }

  RelationId kg_relation(Index r) const { return r + 1; }
  RelationId reverse(RelationId r) const { return r < forward_count_ ? r + forward_count_ : r - forward_count_; }
  bool is_reverse(RelationId r) const { return r >= forward_count_; }

  NodeId user_node(Index u) const { return u; }
  NodeId item_node(Index i) const { return user_count_ + i; }
  NodeId entity_node(Index e) const { return entity_nodes_.at(e); }
  NodeId first_item_node() const { return user_count_; }

  bool is_item_node(NodeId n) const { return n >= user_count_ && n < user_count_ + item_count_; }
  bool is_user_node(NodeId n) const { return n < user_count_; }

  NodeRef node_ref(NodeId n) const { return node_refs_.at(n); }

  NodeId node_of(NodeRef ref) const {
    switch (ref.kind) {
      case NodeKind::user: return user_node(ref.local);
      case NodeKind::item: return item_node(ref.local);
      case NodeKind::entity: return entity_node(ref.local);
    }
    return 0;
  }

  std::span<const Edge> out_edges(NodeId n) const {
    return {edges_.data() + offsets_[n], edges_.data() + offsets_[n + 1]};
  }

  std::size_t out_degree(NodeId n) const { return offsets_[n + 1] - offsets_[n]; }

  bool has_edge(NodeId s, RelationId r, NodeId o) const {
    auto e = out_edges(s);
    return std::binary_search(e.begin(), e.end(), Edge{r, o}, edge_less);
  }

  std::string relation_name(RelationId r) const {
    const RelationId f = r % forward_count_;
    std::string base = f == kInteract ? "interact" : "r" + std::to_string(f - 1);
    return is_reverse(r) ? "-" + base : base;
  }

  std::vector<std::string> relation_names() const {
    std::vector<std::string> out;
    for (RelationId r = 0; r < relation_count(); ++r) out.push_back(relation_name(r));
    return out;
  }

  bool operator==(const CollaborativeKG&) const = default;

  static bool edge_less(const Edge& a, const Edge& b) {
    return a.tail != b.tail ? a.tail < b.tail : a.relation < b.relation;
  }

  friend CollaborativeKG build_ckg(const InteractionSet&, const TripleSet&, const Alignment&, const Alignment&);
  friend void save_ckg(const CollaborativeKG&, const std::filesystem::path&);
  friend CollaborativeKG load_ckg(const std::filesystem::path&);

 private:
  void assemble(std::vector<FullEdge> all) {
    std::sort(all.begin(), all.end(), [](const FullEdge& a, const FullEdge& b) {
      if (a.head != b.head) return a.head < b.head;
      if (a.tail != b.tail) return a.tail < b.tail;
      return a.relation < b.relation;
    });
    all.erase(std::unique(all.begin(), all.end()), all.end());
    offsets_.assign(node_count() + 1, 0);
    edges_.clear();
    edges_.reserve(all.size());
    for (const auto& e : all) {
      ++offsets_[e.head + 1];
      edges_.push_back({e.relation, e.tail});
    }
    for (std::size_t n = 0; n < node_count(); ++n) offsets_[n + 1] += offsets_[n];
  }

  void rebuild_refs() {
    node_refs_.assign(user_count_ + item_count_, NodeRef{});
    for (Index u = 0; u < user_count_; ++u) node_refs_[u] = {NodeKind::user, u};
    for (Index i = 0; i < item_count_; ++i) node_refs_[user_count_ + i] = {NodeKind::item, i};
    NodeId max_node = user_count_ + item_count_;
    for (NodeId n : entity_nodes_) max_node = std::max(max_node, n + 1);
    node_refs_.resize(max_node);
    for (Index e = 0; e < entity_nodes_.size(); ++e) {
      if (entity_nodes_[e] >= user_count_ + item_count_) node_refs_[entity_nodes_[e]] = {NodeKind::entity, e};
    }
  }

  Index user_count_ = 0;
  Index item_count_ = 0;
  RelationId forward_count_ = 1;
  std::vector<NodeId> entity_nodes_;
  std::vector<NodeRef> node_refs_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Edge> edges_;
};

// Merges interactions and KG triples into one graph. `item_alignment` maps
// items onto KG entities and `user_alignment` does the same for users (used
// when the KG carries user-side knowledge). Both must be partial injections.
inline CollaborativeKG build_ckg(const InteractionSet& inter, const TripleSet& kg, const Alignment& item_alignment,
                                 const Alignment& user_alignment = {}) {
  CollaborativeKG g;
  g.user_count_ = inter.user_count;
  g.item_count_ = inter.item_count;
  g.forward_count_ = kg.relation_count + 1;

  constexpr NodeId kUnassigned = kNoIndex;
  g.entity_nodes_.assign(kg.entity_count, kUnassigned);
  std::vector<bool> item_taken(inter.item_count, false), user_taken(inter.user_count, false);
  auto align = [&](const Alignment& alignment, Index limit, std::vector<bool>& taken, NodeId base,
                   const char* what) {
    for (const auto& p : alignment) {
      if (p.local >= limit || p.entity >= kg.entity_count) {
        throw AlignmentError(std::string(what) + " alignment (" + std::to_string(p.local) + ", " +
                             std::to_string(p.entity) + ") references an unknown id");
      }
      if (taken[p.local]) {
        throw AlignmentError(std::string(what) + " " + std::to_string(p.local) + " aligned to two entities");
      }
      if (g.entity_nodes_[p.entity] != kUnassigned) {
        throw AlignmentError("entity " + std::to_string(p.entity) + " aligned twice");
      }
      taken[p.local] = true;
      g.entity_nodes_[p.entity] = base + p.local;
    }
  };
  align(item_alignment, inter.item_count, item_taken, g.user_count_, "item");
  align(user_alignment, inter.user_count, user_taken, 0, "user");

  NodeId next = g.user_count_ + g.item_count_;
  for (auto& n : g.entity_nodes_) {
    if (n == kUnassigned) n = next++;
  }
  g.rebuild_refs();

  for (const auto& p : inter.pairs) {
    if (p.user >= inter.user_count || p.item >= inter.item_count) throw ConfigError("interaction out of range");
  }
  for (const auto& t : kg.triples) {
    if (t.head >= kg.entity_count || t.tail >= kg.entity_count || t.relation >= kg.relation_count) {
      throw ConfigError("triple out of range");
    }
  }

  std::vector<FullEdge> all;
  all.reserve(2 * (inter.pairs.size() + kg.triples.size()));
  for (const auto& p : inter.pairs) {
    const NodeId u = g.user_node(p.user), i = g.item_node(p.item);
    all.push_back({u, CollaborativeKG::kInteract, i});
    all.push_back({i, g.reverse(CollaborativeKG::kInteract), u});
  }
  for (const auto& t : kg.triples) {
    const NodeId h = g.entity_nodes_[t.head], o = g.entity_nodes_[t.tail];
    const RelationId r = g.kg_relation(t.relation);
    all.push_back({h, r, o});
    all.push_back({o, g.reverse(r), h});
  }
  g.assemble(std::move(all));
  return g;
}

// Binary CKG cache, layout (little-endian):
//   magic "KUCNCKG\0", u32 version = 1,
//   u32 user_count, u32 item_count, u32 forward_relation_count,
//   array<u32> entity -> node table, array<u64> CSR offsets,
//   array<{u32 relation, u32 tail}> edges.
// Arrays are a u64 length followed by packed elements.
inline constexpr io::Magic kCkgMagic{'K', 'U', 'C', 'N', 'C', 'K', 'G', '\0'};
inline constexpr std::uint32_t kCkgVersion = 1;

inline void save_ckg(const CollaborativeKG& g, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& out) {
    io::BinaryWriter w(out);
    w.magic(kCkgMagic);
    w.put<std::uint32_t>(kCkgVersion);
    w.put<std::uint32_t>(g.user_count_);
    w.put<std::uint32_t>(g.item_count_);
    w.put<std::uint32_t>(g.forward_count_);
    w.put_array<NodeId>(g.entity_nodes_);
    std::vector<std::uint64_t> offsets(g.offsets_.begin(), g.offsets_.end());
    w.put_array<std::uint64_t>(offsets);
    w.put_array<Edge>(g.edges_);
    w.check(path.string());
  });
}

inline CollaborativeKG load_ckg(const std::filesystem::path& path) {
  auto in = io::open_input(path, true);
  io::BinaryReader r(in, path.string());
  r.expect_magic(kCkgMagic);
  if (r.get<std::uint32_t>() != kCkgVersion) throw FormatError(path.string() + ": unsupported CKG version");
  CollaborativeKG g;
  g.user_count_ = r.get<std::uint32_t>();
  g.item_count_ = r.get<std::uint32_t>();
  g.forward_count_ = r.get<std::uint32_t>();
  g.entity_nodes_ = r.get_array<NodeId>();
  g.rebuild_refs();
  auto offsets = r.get_array<std::uint64_t>();
  g.offsets_.assign(offsets.begin(), offsets.end());
  g.edges_ = r.get_array<Edge>();
  if (g.offsets_.size() != g.node_count() + 1 || g.offsets_.back() != g.edges_.size()) {
    throw FormatError(path.string() + ": inconsistent CSR layout");
  }
  for (const auto& e : g.edges_) {
    if (e.tail >= g.node_count() || e.relation >= g.relation_count()) {
      throw FormatError(path.string() + ": edge out of range");
    }
  }
  return g;
}

}  // namespace kucnet
