#pragma once

// Little-endian binary stream helpers shared by the corpus and checkpoint
// writers. The toolkit targets little-endian hosts; the static_assert makes
// a port to a big-endian machine fail loudly instead of silently swapping.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "nart/common.hpp"

namespace nart::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; byte swapping is not implemented");

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
  if (!os) throw IoError("write failed");
}

inline void write_bytes(std::ostream& os, const void* data, size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw IoError(std::string("truncated input while reading ") + what);
  return value;
}

inline void read_bytes(std::istream& is, void* data, size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!is) throw IoError(std::string("truncated input while reading ") + what);
}

}  // namespace nart::detail
