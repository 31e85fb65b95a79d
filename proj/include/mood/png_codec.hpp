#pragma once

// Minimal PNG encoder with every parameter pinned, plus a libpng-backed decoder.
//
// The encoder output is the canonical byte stream whose length defines an
// image's complexity, so nothing in it may depend on library defaults:
//   - colour type 0 (grey) or 2 (RGB), bit depth 8, no interlace
//   - per-row filter: minimum sum of absolute signed residuals over the five
//     PNG filter types, ties resolved to the lowest filter type
//   - zlib stream: level 9, windowBits 15, memLevel 9, default strategy
//   - one IHDR, one IDAT, one IEND chunk; no ancillary chunks

#include <png.h>
#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mood/error.hpp"
#include "mood/image.hpp"

namespace mood::png {

inline constexpr std::array<std::uint8_t, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

namespace detail {

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char (&type)[5],
                      std::span<const std::uint8_t> data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

inline std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

/// Applies filter `type` to one scanline. `prev` is all zeros for the first row.
inline void filter_row(int type, std::span<const std::uint8_t> row, std::span<const std::uint8_t> prev,
                       std::size_t bpp, std::span<std::uint8_t> out) {
    for (std::size_t x = 0; x < row.size(); ++x) {
        const int a = x >= bpp ? row[x - bpp] : 0;
        const int b = prev[x];
        const int c = x >= bpp ? prev[x - bpp] : 0;
        int predicted = 0;
        switch (type) {
            case 0: predicted = 0; break;
            case 1: predicted = a; break;
            case 2: predicted = b; break;
            case 3: predicted = (a + b) / 2; break;
            default: predicted = paeth(a, b, c); break;
        }
        out[x] = static_cast<std::uint8_t>(row[x] - predicted);
    }
}

/// Scanlines prefixed by their filter byte, ready for deflate.
inline std::vector<std::uint8_t> filtered_scanlines(const ImageBuffer& img) {
    const std::size_t stride = img.row_bytes();
    const std::size_t bpp = img.channels;
    std::vector<std::uint8_t> out;
    out.reserve(img.height * (stride + 1));
    std::vector<std::uint8_t> zeros(stride, 0);
    std::vector<std::uint8_t> candidate(stride);
    std::vector<std::uint8_t> best(stride);
    for (std::size_t y = 0; y < img.height; ++y) {
        std::span<const std::uint8_t> row(img.pixels.data() + y * stride, stride);
        std::span<const std::uint8_t> prev =
            y == 0 ? std::span<const std::uint8_t>(zeros)
                   : std::span<const std::uint8_t>(img.pixels.data() + (y - 1) * stride, stride);
        int best_type = 0;
        std::uint64_t best_cost = UINT64_MAX;
        for (int type = 0; type < 5; ++type) {
            filter_row(type, row, prev, bpp, candidate);
            std::uint64_t cost = 0;
            for (std::uint8_t v : candidate) cost += static_cast<std::uint64_t>(std::abs(static_cast<std::int8_t>(v)));
            if (cost < best_cost) {
                best_cost = cost;
                best_type = type;
                best.swap(candidate);
            }
        }
        out.push_back(static_cast<std::uint8_t>(best_type));
        out.insert(out.end(), best.begin(), best.end());
    }
    return out;
}

inline std::vector<std::uint8_t> deflate_pinned(std::span<const std::uint8_t> raw) {
    z_stream zs{};
    if (deflateInit2(&zs, 9, Z_DEFLATED, 15, 9, Z_DEFAULT_STRATEGY) != Z_OK)
        throw Error("deflateInit2 failed");
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(raw.size())));
    zs.next_in = const_cast<Bytef*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    const std::size_t produced = zs.total_out;
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error("deflate did not finish");
    out.resize(produced);
    return out;
}

}  // namespace detail

/// Encodes `img` as a complete PNG byte stream (signature through IEND).
inline std::vector<std::uint8_t> encode(const ImageBuffer& img) {
    img.validate();
    std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());

    std::vector<std::uint8_t> ihdr;
    detail::put_u32_be(ihdr, img.width);
    detail::put_u32_be(ihdr, img.height);
    ihdr.push_back(8);                            // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);    // colour type
    ihdr.push_back(0);                            // compression
    ihdr.push_back(0);                            // filter method
    ihdr.push_back(0);                            // interlace
    detail::put_chunk(out, "IHDR", ihdr);

    const auto idat = detail::deflate_pinned(detail::filtered_scanlines(img));
    detail::put_chunk(out, "IDAT", idat);
    detail::put_chunk(out, "IEND", {});
    return out;
}

namespace detail {

inline ImageBuffer finish_decode(png_image& image, const std::string& what) {
    const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (image.height == 0 || image.width == 0 || image.height > 0xFFFF || image.width > 0xFFFF) {
        png_image_free(&image);
        throw DecodeError(what + ": image dimensions out of range");
    }
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    png_color black{0, 0, 0};
    if (!png_image_finish_read(&image, &black, pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DecodeError(what + ": " + msg);
    }
    return ImageBuffer::make(static_cast<std::uint16_t>(image.height), static_cast<std::uint16_t>(image.width),
                             colour ? 3 : 1, std::move(pixels));
}

}  // namespace detail

/// Decodes a PNG byte stream to 8-bit grey or RGB. Alpha is composited onto black.
inline ImageBuffer decode(std::span<const std::uint8_t> bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw DecodeError(std::string("undecodable PNG: ") + image.message);
    return detail::finish_decode(image, "undecodable PNG");
}

inline ImageBuffer decode_file(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw DecodeError("undecodable PNG " + path.string() + ": " + image.message);
    return detail::finish_decode(image, "undecodable PNG " + path.string());
}

}  // namespace mood::png
