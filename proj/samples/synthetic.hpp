#pragma once

// Synthetic MOOD workload: smooth low-complexity ID images, uniform-noise OOD
// images, and a toy exit net whose logits separate the two by construction.
//
// The net's first block computes |x_a - x_b| for a fixed set of horizontally
// adjacent same-channel pixel pairs (as relu(x_a - x_b) and relu(x_b - x_a))
// plus the three per-channel means. Later blocks copy their input. Every head
// scores class j as depth * mean_j - alpha * total_variation, so smooth
// images get a high free energy and noise a low one.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mood/mood.hpp"

namespace mood::synthetic {

inline constexpr std::uint16_t kSide = 32;
inline constexpr std::uint8_t kChannels = 3;
inline constexpr std::size_t kClasses = 3;

struct LabelledImage {
    ImageBuffer image;
    std::size_t label = 0;
};

inline std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v)); }

/// Constant-colour, gradient, or lightly dithered gradient image whose dominant channel is its label.
inline LabelledImage smooth_image(std::size_t index, std::uint64_t seed) {
    SplitMix64 rng(seed ^ (0xA5A5A5A5ULL + index));
    const std::size_t label = index % kClasses;
    int base[3];
    for (std::size_t ch = 0; ch < 3; ++ch) base[ch] = static_cast<int>(rng.next() % 80);
    base[label] = 170 + static_cast<int>(rng.next() % 50);
    const std::size_t kind = (index / kClasses) % 4;  // 0 constant, 1 horizontal, 2 vertical, 3 diagonal
    const int slope = 1 + static_cast<int>(rng.next() % 2);
    const bool dither = index % 10 == 9;

    auto img = ImageBuffer::filled(kSide, kSide, kChannels);
    for (std::size_t r = 0; r < kSide; ++r)
        for (std::size_t c = 0; c < kSide; ++c)
            for (std::size_t ch = 0; ch < kChannels; ++ch) {
                int v = base[ch];
                if (kind == 1) v += slope * static_cast<int>(c) - 16;
                if (kind == 2) v += slope * static_cast<int>(r) - 16;
                if (kind == 3) v += slope * static_cast<int>(r + c) / 2 - 16;
                if (dither) v += static_cast<int>(rng.next() % 5) - 2;
                img.at(r, c, ch) = clamp_u8(v);
            }
    return {std::move(img), label};
}

/// Per-pixel uniform random bytes.
inline ImageBuffer noise_image(std::size_t index, std::uint64_t seed) {
    SplitMix64 rng(seed ^ (0x5A5A5A5A00000000ULL + index));
    auto img = ImageBuffer::filled(kSide, kSide, kChannels);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next() >> 56);
    return img;
}

inline ExitNetWeights separating_net(std::size_t k = 5, std::size_t pairs = 256, double alpha = 0.1) {
    const std::size_t d0 = std::size_t{kSide} * kSide * kChannels;
    const std::size_t d1 = 2 * pairs + kChannels;
    std::vector<std::size_t> dims{d0};
    for (std::size_t i = 0; i < k; ++i) dims.push_back(d1);
    auto w = ExitNetWeights::zeros(dims, kClasses);

    auto flat = [](std::size_t r, std::size_t c, std::size_t ch) { return (r * kSide + c) * kChannels + ch; };
    SplitMix64 rng(20240607);
    auto& first = w.blocks[0].trunk;
    for (std::size_t p = 0; p < pairs; ++p) {
        const std::size_t r = rng.next() % kSide;
        const std::size_t c = rng.next() % (kSide - 1);
        const std::size_t ch = rng.next() % kChannels;
        const std::size_t a = flat(r, c, ch), b = flat(r, c + 1, ch);
        first(p, a) = 1.0;
        first(p, b) = -1.0;
        first(pairs + p, a) = -1.0;
        first(pairs + p, b) = 1.0;
    }
    const double inv_area = 1.0 / (double{kSide} * kSide);
    for (std::size_t ch = 0; ch < kChannels; ++ch)
        for (std::size_t r = 0; r < kSide; ++r)
            for (std::size_t c = 0; c < kSide; ++c) first(2 * pairs + ch, flat(r, c, ch)) = inv_area;
    for (std::size_t i = 1; i < k; ++i)
        for (std::size_t u = 0; u < d1; ++u) w.blocks[i].trunk(u, u) = 1.0;

    for (std::size_t i = 0; i < k; ++i) {
        auto& head = w.blocks[i].head;
        const double depth = static_cast<double>(i + 1);
        for (std::size_t j = 0; j < kClasses; ++j) {
            for (std::size_t u = 0; u < 2 * pairs; ++u) head(j, u) = -alpha;
            head(j, 2 * pairs + j) = 2.0 * depth;
        }
    }
    w.validate();
    return w;
}

struct WorkloadPaths {
    std::filesystem::path weights;
    std::filesystem::path id_images;
    std::filesystem::path id_labels;
    std::filesystem::path ood_images;
};

/// Writes weights, both image containers, and the ID label file into `dir`.
inline WorkloadPaths write_workload(const std::filesystem::path& dir, std::size_t id_count = 500,
                                    std::size_t ood_count = 500, std::uint64_t seed = 7) {
    std::filesystem::create_directories(dir);
    WorkloadPaths p{dir / "net.moodnet", dir / "id.moodimg", dir / "id_labels.txt", dir / "ood.moodimg"};
    save_weights(separating_net(), p.weights);

    ImageContainerWriter id(p.id_images, static_cast<std::uint32_t>(id_count));
    std::ofstream labels(p.id_labels);
    for (std::size_t i = 0; i < id_count; ++i) {
        const auto s = smooth_image(i, seed);
        id.write(s.image);
        labels << s.label << '\n';
    }
    id.close();

    ImageContainerWriter ood(p.ood_images, static_cast<std::uint32_t>(ood_count));
    for (std::size_t i = 0; i < ood_count; ++i) ood.write(noise_image(i, seed));
    ood.close();
    return p;
}

}  // namespace mood::synthetic
