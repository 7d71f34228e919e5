#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace inset::bin {

/// Raised when a stream ends before a complete value could be read.
class Truncated : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class UInt>
void write_le(std::ostream& os, UInt v) {
  unsigned char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(UInt));
}

template <class UInt>
UInt read_le(std::istream& is) {
  unsigned char buf[sizeof(UInt)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(UInt))) throw Truncated("unexpected end of file");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= UInt(buf[i]) << (8 * i);
  return v;
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
inline std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_le<std::uint64_t>(is)); }

inline void write_magic(std::ostream& os, const char (&magic)[9]) { os.write(magic, 8); }

inline bool read_magic(std::istream& is, const char (&magic)[9]) {
  char buf[8];
  if (!is.read(buf, 8)) throw Truncated("unexpected end of file in header");
  return std::memcmp(buf, magic, 8) == 0;
}

}  // namespace inset::bin
