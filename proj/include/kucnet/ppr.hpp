#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <vector>

#include "kucnet/binary_io.hpp"
#include "kucnet/ckg.hpp"
#include "kucnet/common.hpp"
#include "kucnet/parallel.hpp"

namespace kucnet {

inline constexpr double kDefaultRestart = 0.15;
inline constexpr int kDefaultPprIterations = 20;

// Column-stochastic structural adjacency M of a CKG: m_ij = 1 / D_j when
// some relation links j -> i, where D_j counts distinct out-neighbours of j.
// Parallel edges under different relations collapse to a single entry.
// Stored column-wise (per source node), which is the scatter form of M * r.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  explicit NormalizedAdjacency(const CollaborativeKG& g) : offsets_(g.node_count() + 1, 0) {
    for (NodeId j = 0; j < g.node_count(); ++j) {
      NodeId last = kNoIndex;
      // Out-edges are sorted by tail, so distinct tails are adjacent.
      for (const auto& e : g.out_edges(j)) {
        if (e.tail != last) targets_.push_back(e.tail);
        last = e.tail;
      }
      offsets_[j + 1] = targets_.size();
    }
  }

  NodeId size() const { return static_cast<NodeId>(offsets_.size() - 1); }

  std::span<const NodeId> column(NodeId j) const {
    return {targets_.data() + offsets_[j], targets_.data() + offsets_[j + 1]};
  }

  std::size_t degree(NodeId j) const { return offsets_[j + 1] - offsets_[j]; }

  double entry(NodeId i, NodeId j) const {
    auto col = column(j);
    return std::binary_search(col.begin(), col.end(), i) ? 1.0 / static_cast<double>(col.size()) : 0.0;
  }

  // out = M * r
  void multiply(std::span<const double> r, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (NodeId j = 0; j < size(); ++j) {
      if (r[j] == 0.0 || degree(j) == 0) continue;
      const double share = r[j] / static_cast<double>(degree(j));
      for (NodeId i : column(j)) out[i] += share;
    }
  }

 private:
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> targets_;
};

inline NormalizedAdjacency normalized_adjacency(const CollaborativeKG& g) { return NormalizedAdjacency(g); }

// Power iteration r <- (1 - alpha) M r + alpha p, starting from r = p, where p
// is one-hot at `source`. Dangling columns are zero so their mass leaks.
inline std::vector<double> ppr_scores(const NormalizedAdjacency& adj, NodeId source, double alpha = kDefaultRestart,
                                      int iterations = kDefaultPprIterations) {
  if (source >= adj.size()) throw IndexError("PPR source node " + std::to_string(source) + " out of range");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("restart probability must be in (0, 1)");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  std::vector<double> r(adj.size(), 0.0), next(adj.size(), 0.0);
  r[source] = 1.0;
  for (int k = 0; k < iterations; ++k) {
    adj.multiply(r, next);
    for (auto& x : next) x *= (1.0 - alpha);
    next[source] += alpha;
    r.swap(next);
  }
  return r;
}

// Per-user PPR vectors over all CKG nodes, dense in memory.
class PprStore {
 public:
  PprStore() = default;
  PprStore(Index users, NodeId nodes, double alpha, int iterations)
      : users_(users), nodes_(nodes), alpha_(alpha), iterations_(iterations),
        scores_(static_cast<std::size_t>(users) * nodes, 0.0) {}

  Index user_count() const { return users_; }
  NodeId node_count() const { return nodes_; }
  double alpha() const { return alpha_; }
  int iterations() const { return iterations_; }

  std::span<const double> scores(Index user) const {
    if (user >= users_) throw IndexError("no PPR vector for user " + std::to_string(user));
    return {scores_.data() + static_cast<std::size_t>(user) * nodes_, nodes_};
  }

  std::span<double> mutable_scores(Index user) {
    return {scores_.data() + static_cast<std::size_t>(user) * nodes_, nodes_};
  }

  bool operator==(const PprStore&) const = default;

 private:
  Index users_ = 0;
  NodeId nodes_ = 0;
  double alpha_ = kDefaultRestart;
  int iterations_ = kDefaultPprIterations;
  std::vector<double> scores_;
};

inline PprStore ppr_all_users(const CollaborativeKG& g, double alpha = kDefaultRestart,
                              int iterations = kDefaultPprIterations, unsigned threads = 1) {
  const auto adj = normalized_adjacency(g);
  PprStore store(g.user_count(), g.node_count(), alpha, iterations);
  parallel_for(g.user_count(), threads, [&](std::size_t u) {
    const auto r = ppr_scores(adj, g.user_node(static_cast<Index>(u)), alpha, iterations);
    std::copy(r.begin(), r.end(), store.mutable_scores(static_cast<Index>(u)).begin());
  });
  return store;
}

// PPR cache, layout (little-endian):
//   magic "KUCNPPR\0", u32 version = 1, u32 user_count, u32 node_count,
//   f64 alpha, i32 iterations, then per user: u32 nnz followed by nnz
//   (u32 node, f64 score) records in ascending node order.
// Zero scores are not stored; values round-trip bit for bit.
inline constexpr io::Magic kPprMagic{'K', 'U', 'C', 'N', 'P', 'P', 'R', '\0'};
inline constexpr std::uint32_t kPprVersion = 1;

inline void save_ppr(const PprStore& store, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& out) {
    io::BinaryWriter w(out);
    w.magic(kPprMagic);
    w.put<std::uint32_t>(kPprVersion);
    w.put<std::uint32_t>(store.user_count());
    w.put<std::uint32_t>(store.node_count());
    w.put<double>(store.alpha());
    w.put<std::int32_t>(store.iterations());
    for (Index u = 0; u < store.user_count(); ++u) {
      const auto s = store.scores(u);
      const auto nnz = static_cast<std::uint32_t>(std::count_if(s.begin(), s.end(), [](double x) { return x != 0.0; }));
      w.put<std::uint32_t>(nnz);
      for (NodeId n = 0; n < s.size(); ++n) {
        if (s[n] == 0.0) continue;
        w.put<std::uint32_t>(n);
        w.put<double>(s[n]);
      }
    }
    w.check(path.string());
  });
}

inline PprStore load_ppr(const std::filesystem::path& path) {
  auto in = io::open_input(path, true);
  io::BinaryReader r(in, path.string());
  r.expect_magic(kPprMagic);
  if (r.get<std::uint32_t>() != kPprVersion) throw FormatError(path.string() + ": unsupported PPR version");
  const auto users = r.get<std::uint32_t>();
  const auto nodes = r.get<std::uint32_t>();
  const auto alpha = r.get<double>();
  const auto iterations = r.get<std::int32_t>();
  PprStore store(users, nodes, alpha, iterations);
  for (Index u = 0; u < users; ++u) {
    auto s = store.mutable_scores(u);
    const auto nnz = r.get<std::uint32_t>();
    if (nnz > nodes) throw FormatError(path.string() + ": bad record count");
    for (std::uint32_t k = 0; k < nnz; ++k) {
      const auto n = r.get<std::uint32_t>();
      const auto v = r.get<double>();
      if (n >= nodes) throw FormatError(path.string() + ": node out of range");
      s[n] = v;
    }
  }
  return store;
}

}  // namespace kucnet
