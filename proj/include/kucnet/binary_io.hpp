#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "kucnet/common.hpp"

// Little helpers for the versioned binary containers (CKG cache, PPR cache,
// model checkpoint). All multi-byte values are written little-endian; the
// library refuses to build on big-endian hosts rather than byte-swapping.

namespace kucnet::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using Magic = std::array<char, 8>;

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void magic(const Magic& m) { out_.write(m.data(), m.size()); }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_array(std::span<const T> values) {
    put<std::uint64_t>(values.size());
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  }

  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void check(const std::string& what) const {
    if (!out_) throw IoError("write failed: " + what);
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void expect_magic(const Magic& m) {
    Magic got{};
    in_.read(got.data(), got.size());
    if (!in_ || got != m) throw FormatError(source_ + ": bad magic header");
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T value;
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw FormatError(source_ + ": truncated file");
    return value;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  std::vector<T> get_array(std::uint64_t max_count = std::uint64_t{1} << 40) {
    const auto n = get<std::uint64_t>();
    if (n > max_count) throw FormatError(source_ + ": implausible array length");
    std::vector<T> values(n);
    in_.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) throw FormatError(source_ + ": truncated file");
    return values;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw FormatError(source_ + ": truncated file");
    return s;
  }

  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
};

// Writes via a sibling temp file and renames on success, so a failed or
// interrupted write never leaves a partial file at `path`.
template <typename Fn>
void write_atomically(const std::filesystem::path& path, Fn&& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    try {
      body(out);
      out.flush();
      if (!out) throw IoError("write failed: " + tmp.string());
    } catch (...) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

inline std::ifstream open_input(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open: " + path.string());
  return in;
}

}  // namespace kucnet::io
