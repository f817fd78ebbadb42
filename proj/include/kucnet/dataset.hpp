#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kucnet/binary_io.hpp"
#include "kucnet/common.hpp"

namespace kucnet {

struct Interaction {
  Index user = 0;
  Index item = 0;
  auto operator<=>(const Interaction&) const = default;
};

// Observed user-item feedback. `pairs` is kept sorted by (user, item) and
// free of duplicates; every id is below the matching count.
struct InteractionSet {
  Index user_count = 0;
  Index item_count = 0;
  std::vector<Interaction> pairs;

  // Sorts, drops duplicates and checks the id bounds.
  void normalize() {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    for (const auto& p : pairs) {
      if (p.user >= user_count || p.item >= item_count) {
        throw ConfigError("interaction (" + std::to_string(p.user) + ", " + std::to_string(p.item) +
                          ") outside declared counts");
      }
    }
  }

  bool contains(Index user, Index item) const {
    return std::binary_search(pairs.begin(), pairs.end(), Interaction{user, item});
  }

  // Per-user sorted item lists, indexed by user id.
  std::vector<std::vector<Index>> items_by_user() const {
    std::vector<std::vector<Index>> out(user_count);
    for (const auto& p : pairs) out[p.user].push_back(p.item);
    return out;
  }

  std::vector<Index> users() const {
    std::vector<Index> out;
    for (const auto& p : pairs) {
      if (out.empty() || out.back() != p.user) out.push_back(p.user);
    }
    return out;
  }

  std::vector<Index> items() const {
    std::vector<Index> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.item);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool operator==(const InteractionSet&) const = default;
};

struct Triple {
  Index head = 0;
  Index relation = 0;
  Index tail = 0;
  auto operator<=>(const Triple&) const = default;
};

struct TripleSet {
  Index entity_count = 0;
  Index relation_count = 0;
  std::vector<Triple> triples;

  bool operator==(const TripleSet&) const = default;
};

// item -> entity (or user -> entity) correspondences.
struct AlignmentPair {
  Index local = 0;
  Index entity = 0;
  auto operator<=>(const AlignmentPair&) const = default;
};
using Alignment = std::vector<AlignmentPair>;

namespace detail {

inline bool parse_index(std::string_view token, Index& out) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value >= kNoIndex) return false;
  out = static_cast<Index>(value);
  return true;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

// Parses "# key value key value ..." header lines into (key, value) pairs.
inline std::vector<std::pair<std::string, Index>> parse_header(const std::string& path, std::size_t line_no,
                                                               std::string_view line) {
  auto tokens = split_ws(line.substr(line.find('#') + 1));
  std::vector<std::pair<std::string, Index>> out;
  if (tokens.size() % 2 != 0) throw ParseError(path, line_no, "header must be key/value pairs");
  for (std::size_t k = 0; k < tokens.size(); k += 2) {
    Index v;
    if (!parse_index(tokens[k + 1], v)) throw ParseError(path, line_no, "bad header value");
    out.emplace_back(std::string(tokens[k]), v);
  }
  return out;
}

}  // namespace detail

// Reads "user item item ..." lines. A "# users N items M" header line may
// raise the counts above 1 + max observed id.
inline InteractionSet load_interactions(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  InteractionSet out;
  Index header_users = 0, header_items = 0;
  bool saw_line = false, saw_header = false;
  Index max_user = 0, max_item = 0;
  bool any_user = false, any_item = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.front().front() == '#') {
      for (auto& [key, value] : detail::parse_header(path.string(), line_no, line)) {
        if (key == "users") header_users = value;
        else if (key == "items") header_items = value;
        else throw ParseError(path.string(), line_no, "unknown header key '" + key + "'");
      }
      saw_header = true;
      continue;
    }
    saw_line = true;
    Index user;
    if (!detail::parse_index(tokens[0], user)) {
      throw ParseError(path.string(), line_no, "malformed user id '" + std::string(tokens[0]) + "'");
    }
    max_user = any_user ? std::max(max_user, user) : user;
    any_user = true;
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      Index item;
      if (!detail::parse_index(tokens[k], item)) {
        throw ParseError(path.string(), line_no, "malformed item id '" + std::string(tokens[k]) + "'");
      }
      max_item = any_item ? std::max(max_item, item) : item;
      any_item = true;
      out.pairs.push_back({user, item});
    }
  }
  if (!saw_line && !saw_header) throw EmptyDatasetError("no interactions in " + path.string());
  out.user_count = std::max(any_user ? max_user + 1 : 0, header_users);
  out.item_count = std::max(any_item ? max_item + 1 : 0, header_items);
  out.normalize();
  return out;
}

// Writes one line per user with at least one item, preceded by a count header.
inline void save_interactions(const InteractionSet& set, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "# users " << set.user_count << " items " << set.item_count << '\n';
    std::size_t k = 0;
    while (k < set.pairs.size()) {
      const Index u = set.pairs[k].user;
      out << u;
      for (; k < set.pairs.size() && set.pairs[k].user == u; ++k) out << ' ' << set.pairs[k].item;
      out << '\n';
    }
  });
}

// Reads "head relation tail" lines. Duplicates are dropped (first occurrence
// wins), otherwise file order is preserved.
inline TripleSet load_kg_triples(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  TripleSet out;
  Index header_entities = 0, header_relations = 0;
  std::vector<Triple> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.front().front() == '#') {
      for (auto& [key, value] : detail::parse_header(path.string(), line_no, line)) {
        if (key == "entities") header_entities = value;
        else if (key == "relations") header_relations = value;
        else throw ParseError(path.string(), line_no, "unknown header key '" + key + "'");
      }
      continue;
    }
    if (tokens.size() != 3) {
      throw ParseError(path.string(), line_no, "expected 3 tokens, got " + std::to_string(tokens.size()));
    }
    Triple t;
    if (!detail::parse_index(tokens[0], t.head) || !detail::parse_index(tokens[1], t.relation) ||
        !detail::parse_index(tokens[2], t.tail)) {
      throw ParseError(path.string(), line_no, "malformed triple");
    }
    raw.push_back(t);
  }
  // Dedup preserving order: sort a copy of indices.
  std::vector<std::size_t> order(raw.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
  std::vector<bool> keep(raw.size(), false);
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k == 0 || raw[order[k]] != raw[order[k - 1]]) keep[order[k]] = true;
  }
  Index max_entity = 0, max_relation = 0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (!keep[k]) continue;
    out.triples.push_back(raw[k]);
    max_entity = std::max({max_entity, raw[k].head + 1, raw[k].tail + 1});
    max_relation = std::max(max_relation, raw[k].relation + 1);
  }
  out.entity_count = std::max(max_entity, header_entities);
  out.relation_count = std::max(max_relation, header_relations);
  return out;
}

inline void save_kg_triples(const TripleSet& kg, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "# entities " << kg.entity_count << " relations " << kg.relation_count << '\n';
    for (const auto& t : kg.triples) out << t.head << ' ' << t.relation << ' ' << t.tail << '\n';
  });
}

// Reads "local_id entity_id" lines.
inline Alignment load_alignment(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  Alignment out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    AlignmentPair p;
    if (tokens.size() != 2 || !detail::parse_index(tokens[0], p.local) || !detail::parse_index(tokens[1], p.entity)) {
      throw ParseError(path.string(), line_no, "expected 'id entity'");
    }
    out.push_back(p);
  }
  return out;
}

inline void save_alignment(const Alignment& alignment, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& out) {
    for (const auto& p : alignment) out << p.local << ' ' << p.entity << '\n';
  });
}

}  // namespace kucnet
