#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mood/error.hpp"

namespace mood::bin {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

/// Reads exactly n bytes or throws TruncationError naming `what`.
inline void read_exact(std::istream& in, void* dst, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw TruncationError("truncated input while reading " + what);
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
    unsigned char bytes[sizeof(T)];
    read_exact(in, bytes, sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const std::string& what) {
    char got[8];
    in.read(got, 8);
    if (in.gcount() != 8 || std::memcmp(got, magic, 8) != 0)
        throw MagicError(what + ": missing " + std::string(magic, 8) + " magic");
}

}  // namespace mood::bin
