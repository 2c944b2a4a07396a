#pragma once

// Little-endian primitive readers/writers shared by the .grid, .mem and .ckpt formats.

#include "dhsi/common.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace dhsi::bin {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) fail(ErrorKind::Format, "unexpected end of file");
  return value;
}

inline void put_bytes(std::ostream& out, std::string_view bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string get_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) fail(ErrorKind::Format, "unexpected end of file");
  return s;
}

inline void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s);
}

inline std::string get_string(std::istream& in, std::size_t max_len = 1u << 26) {
  const auto n = get<std::uint32_t>(in);
  if (n > max_len) fail(ErrorKind::Format, "string length out of range");
  return get_bytes(in, n);
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  if (get_bytes(in, magic.size()) != magic) fail(ErrorKind::Format, "bad magic, expected " + std::string(magic));
}

}  // namespace dhsi::bin
