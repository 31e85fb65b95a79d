#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "mood/error.hpp"
#include "mood/image.hpp"
#include "mood/png_codec.hpp"

namespace mood {

enum class CodecId { DeflatePng, Jpeg2000Lossless };

inline std::string_view to_string(CodecId codec) {
    return codec == CodecId::DeflatePng ? "png" : "jpeg2000";
}

inline CodecId parse_codec(std::string_view name) {
    if (name == "png") return CodecId::DeflatePng;
    if (name == "jpeg2000") return CodecId::Jpeg2000Lossless;
    throw InputError("unknown codec '" + std::string(name) + "' (expected png or jpeg2000)");
}

/// True when the codec is compiled into this build.
inline bool codec_available(CodecId codec) { return codec == CodecId::DeflatePng; }

struct ComplexityScore {
    std::uint64_t bits = 0;
    double normalized = 0.0;
};

/// Length in bits of the lossless encoding of `img` under `codec`.
inline std::uint64_t compress_bit_length(const ImageBuffer& img, CodecId codec) {
    img.validate();
    switch (codec) {
        case CodecId::DeflatePng:
            return 8 * static_cast<std::uint64_t>(png::encode(img).size());
        case CodecId::Jpeg2000Lossless:
            break;
    }
    throw UnsupportedError("codec jpeg2000 is not available in this build");
}

/// bits / l_max, unclamped. OOD inputs may land above 1.
inline double normalize_complexity(std::uint64_t bits, std::uint64_t l_max) {
    if (l_max == 0) throw CalibrationError("maximum ID complexity is zero");
    return static_cast<double>(bits) / static_cast<double>(l_max);
}

/// Exit index in [1, k] for a normalized complexity: min(max(ceil(n * k), 1), k).
inline std::size_t select_exit(double normalized, std::size_t k) {
    if (k == 0) throw InputError("exit count must be at least 1");
    if (!(normalized >= 0.0)) throw InputError("normalized complexity must be >= 0");
    const double scaled = std::ceil(normalized * static_cast<double>(k));
    if (scaled >= static_cast<double>(k)) return k;
    return std::max<std::size_t>(static_cast<std::size_t>(scaled), 1);
}

inline ComplexityScore complexity_score(const ImageBuffer& img, CodecId codec, std::uint64_t l_max) {
    const auto bits = compress_bit_length(img, codec);
    return {bits, normalize_complexity(bits, l_max)};
}

/// Running maximum of complexity over a stream of ID images.
class LMaxAccumulator {
public:
    explicit LMaxAccumulator(CodecId codec) : codec_(codec) {}

    void add(const ImageBuffer& img) { add_bits(compress_bit_length(img, codec_)); }
    void add_bits(std::uint64_t bits) {
        l_max_ = std::max(l_max_.value_or(0), bits);
        ++count_;
    }

    std::size_t count() const noexcept { return count_; }

    std::uint64_t result() const {
        if (!l_max_) throw CalibrationError("cannot compute maximum complexity of an empty ID set");
        return *l_max_;
    }

private:
    CodecId codec_;
    std::optional<std::uint64_t> l_max_;
    std::size_t count_ = 0;
};

template <typename Range>
std::uint64_t compute_l_max(const Range& id_images, CodecId codec) {
    LMaxAccumulator acc(codec);
    for (const ImageBuffer& img : id_images) acc.add(img);
    return acc.result();
}

}  // namespace mood
