#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "ep2t/error.hpp"

namespace ep2t::binary {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swapping");

template <typename T>
  requires std::is_trivially_copyable_v<T>
void put(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

/// Reads fixed-size little-endian fields and reports the byte offset of any
/// short read, so truncated files fail with a precise location.
class Reader {
public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get(const char* what) {
    char bytes[sizeof(T)];
    read(bytes, sizeof(T), what);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw Error(ErrorCode::ParseError, std::string("truncated input at byte offset ") +
                                             std::to_string(offset_ + got) + " while reading " +
                                             what);
    }
    offset_ += n;
  }

  void expect_magic(const char (&magic)[5]) {
    char bytes[4];
    read(bytes, 4, "magic");
    if (std::memcmp(bytes, magic, 4) != 0) {
      throw Error(ErrorCode::ParseError, std::string("bad magic, expected ") + magic);
    }
  }

  std::size_t offset() const { return offset_; }

private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace ep2t::binary
