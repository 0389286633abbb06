#pragma once

// Little-endian binary primitives shared by the dataset, network and agent
// file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segilm/error.hpp"

namespace segilm::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// FNV-1a, 64-bit.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ = (hash_ ^ p[i]) * 0x100000001B3ull;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  [[nodiscard]] std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ull;
};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    hash_.update(data, n);
    if (!out_) {
      throw IoError("write failed");
    }
  }
  template <typename T>
  void value(T v) {
    bytes(&v, sizeof v);
  }
  template <typename T>
  void values(std::span<const T> v) {
    bytes(v.data(), v.size_bytes());
  }

  [[nodiscard]] std::uint64_t checksum() const { return hash_.digest(); }

 private:
  std::ostream& out_;
  Fnv1a hash_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("unexpected end of stream");
    }
    hash_.update(data, n);
  }
  template <typename T>
  T value() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }
  template <typename T>
  void values(std::span<T> v) {
    bytes(v.data(), v.size_bytes());
  }

  [[nodiscard]] std::uint64_t checksum() const { return hash_.digest(); }

 private:
  std::istream& in_;
  Fnv1a hash_;
};

}  // namespace segilm::binio
