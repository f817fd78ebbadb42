#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <unistd.h>

#include "kucnet/ckg.hpp"
#include "kucnet/dataset.hpp"

namespace fixtures {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kucnet-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline kucnet::InteractionSet interactions(kucnet::Index users, kucnet::Index items,
                                           std::initializer_list<kucnet::Interaction> pairs) {
  kucnet::InteractionSet s;
  s.user_count = users;
  s.item_count = items;
  s.pairs = pairs;
  s.normalize();
  return s;
}

inline kucnet::TripleSet triples(kucnet::Index entities, kucnet::Index relations,
                                 std::initializer_list<kucnet::Triple> list) {
  kucnet::TripleSet t;
  t.entity_count = entities;
  t.relation_count = relations;
  t.triples = list;
  return t;
}

// Items aligned to entities 0..items-1.
inline kucnet::Alignment identity_alignment(kucnet::Index items) {
  kucnet::Alignment a;
  for (kucnet::Index i = 0; i < items; ++i) a.push_back({i, i});
  return a;
}

}  // namespace fixtures
