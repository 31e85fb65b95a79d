#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mood/error.hpp"

namespace mood {

/// 8-bit image, row-major with interleaved channels.
struct ImageBuffer {
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t channels = 0;
    std::vector<std::uint8_t> pixels;

    /// Builds a buffer and checks the shape invariants.
    static ImageBuffer make(std::uint16_t height, std::uint16_t width, std::uint8_t channels,
                            std::vector<std::uint8_t> pixels) {
        ImageBuffer img{height, width, channels, std::move(pixels)};
        img.validate();
        return img;
    }

    /// Zero-filled image of the given shape.
    static ImageBuffer filled(std::uint16_t height, std::uint16_t width, std::uint8_t channels,
                              std::uint8_t value = 0) {
        return make(height, width, channels,
                    std::vector<std::uint8_t>(std::size_t{height} * width * channels, value));
    }

    std::size_t row_bytes() const noexcept { return std::size_t{width} * channels; }
    std::size_t size() const noexcept { return std::size_t{height} * width * channels; }

    std::uint8_t& at(std::size_t row, std::size_t col, std::size_t ch) {
        return pixels[(row * width + col) * channels + ch];
    }
    std::uint8_t at(std::size_t row, std::size_t col, std::size_t ch) const {
        return pixels[(row * width + col) * channels + ch];
    }

    void validate() const {
        if (height == 0 || width == 0)
            throw InputError("image dimensions must be at least 1x1");
        if (channels != 1 && channels != 3)
            throw InputError("unsupported channel count " + std::to_string(channels) +
                             " (expected 1 or 3)");
        if (pixels.size() != size())
            throw InputError("pixel buffer holds " + std::to_string(pixels.size()) +
                             " bytes, shape requires " + std::to_string(size()));
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

}  // namespace mood
