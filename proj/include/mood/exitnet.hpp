#pragma once

// Inference-only multi-exit classifier: an affine+ReLU trunk with one affine
// head per block, plus the MOODNET1 weight file format and analytic FLOPs.
//
// MOODNET1 layout (all little-endian):
//   "MOODNET1" | u32 k | u32 C | u32 dims[k + 1]
//   then for each block i = 1..k:
//     f64 W_i[d_i * d_{i-1}] (row-major) | f64 b_i[d_i] | f64 H_i[C * d_i] (row-major) | f64 c_i[C]

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mood/binary_io.hpp"
#include "mood/cost_model.hpp"
#include "mood/error.hpp"
#include "mood/image.hpp"
#include "mood/scoring.hpp"

namespace mood {

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    static Matrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols, std::vector<double>(rows * cols, 0.0)}; }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    /// out = this * x + bias
    void affine(std::span<const double> x, std::span<const double> bias, std::span<double> out) const {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = data.data() + r * cols;
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
            out[r] = acc + bias[r];
        }
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct ExitBlock {
    Matrix trunk;                 // d_i x d_{i-1}
    std::vector<double> trunk_bias;
    Matrix head;                  // C x d_i
    std::vector<double> head_bias;

    friend bool operator==(const ExitBlock&, const ExitBlock&) = default;
};

struct ExitNetWeights {
    std::size_t num_classes = 0;
    std::vector<std::size_t> dims;  // d_0..d_k
    std::vector<ExitBlock> blocks;  // k blocks

    std::size_t k() const noexcept { return blocks.size(); }
    std::size_t input_size() const noexcept { return dims.empty() ? 0 : dims.front(); }

    /// Zero-initialised network with the given widths.
    static ExitNetWeights zeros(std::vector<std::size_t> dims, std::size_t num_classes) {
        if (dims.size() < 2) throw InputError("exit net needs at least one block");
        ExitNetWeights w;
        w.num_classes = num_classes;
        w.dims = std::move(dims);
        for (std::size_t i = 1; i < w.dims.size(); ++i) {
            w.blocks.push_back({Matrix::zeros(w.dims[i], w.dims[i - 1]), std::vector<double>(w.dims[i], 0.0),
                                Matrix::zeros(num_classes, w.dims[i]), std::vector<double>(num_classes, 0.0)});
        }
        w.validate();
        return w;
    }

    void validate() const {
        if (blocks.empty()) throw InputError("exit net needs at least one block");
        if (num_classes == 0) throw InputError("exit net needs at least one class");
        if (dims.size() != blocks.size() + 1) throw InputError("exit net dims must have k + 1 entries");
        for (std::size_t d : dims)
            if (d == 0) throw InputError("exit net layer widths must be non-zero");
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            const bool ok = b.trunk.rows == dims[i + 1] && b.trunk.cols == dims[i] &&
                            b.trunk.data.size() == dims[i + 1] * dims[i] && b.trunk_bias.size() == dims[i + 1] &&
                            b.head.rows == num_classes && b.head.cols == dims[i + 1] &&
                            b.head.data.size() == num_classes * dims[i + 1] && b.head_bias.size() == num_classes;
            if (!ok) throw InputError("exit net block " + std::to_string(i + 1) + " has inconsistent dimensions");
            for (const auto* v : {&b.trunk.data, &b.trunk_bias, &b.head.data, &b.head_bias})
                for (double x : *v)
                    if (!std::isfinite(x)) throw InputError("exit net weights must be finite");
        }
    }

    friend bool operator==(const ExitNetWeights&, const ExitNetWeights&) = default;
};

/// Pixels scaled to [0, 1], flattened in buffer order.
inline std::vector<double> image_to_input(const ImageBuffer& img) {
    std::vector<double> x(img.pixels.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(img.pixels[i]) / 255.0;
    return x;
}

/// Logits at every exit for a flattened input vector.
inline std::vector<std::vector<double>> forward_all_exits(const ExitNetWeights& weights, std::span<const double> input) {
    if (input.size() != weights.input_size())
        throw InputError("input has " + std::to_string(input.size()) + " values, network expects " +
                         std::to_string(weights.input_size()));
    std::vector<std::vector<double>> logits;
    logits.reserve(weights.k());
    std::vector<double> h(input.begin(), input.end());
    std::vector<double> next;
    for (const auto& block : weights.blocks) {
        next.assign(block.trunk.rows, 0.0);
        block.trunk.affine(h, block.trunk_bias, next);
        for (double& v : next) v = v > 0.0 ? v : 0.0;
        h.swap(next);
        std::vector<double> out(weights.num_classes);
        block.head.affine(h, block.head_bias, out);
        logits.push_back(std::move(out));
    }
    return logits;
}

inline LogitsRecord forward_all_exits(const ExitNetWeights& weights, const ImageBuffer& img, std::string sample_id = {}) {
    const auto x = image_to_input(img);
    return {std::move(sample_id), std::nullopt, forward_all_exits(weights, std::span<const double>(x))};
}

/// Cumulative FLOPs per exit, 2 FLOPs per multiply-accumulate. Throws InputError for
/// nets whose width collapse makes a deeper exit cheaper than a shallower one.
inline ExitCostModel analytic_cost_model(const ExitNetWeights& weights) {
    weights.validate();
    ExitCostModel costs;
    double trunk = 0.0;
    for (std::size_t i = 1; i <= weights.k(); ++i) {
        trunk += 2.0 * static_cast<double>(weights.dims[i]) * static_cast<double>(weights.dims[i - 1]);
        costs.cumulative_flops.push_back(trunk + 2.0 * static_cast<double>(weights.num_classes) *
                                                     static_cast<double>(weights.dims[i]));
    }
    try {
        costs.validate();
    } catch (const SchemaError&) {
        throw InputError("exit net cost is not strictly increasing across exits");
    }
    return costs;
}

namespace detail {

inline void write_f64s(std::ostream& out, std::span<const double> values) {
    for (double v : values) bin::write_le(out, v);
}

inline std::vector<double> read_f64s(std::istream& in, std::size_t n, const std::string& what) {
    std::vector<double> v(n);
    for (auto& x : v) x = bin::read_le<double>(in, what);
    return v;
}

}  // namespace detail

inline void write_weights(const ExitNetWeights& weights, std::ostream& out) {
    weights.validate();
    out.write("MOODNET1", 8);
    bin::write_le(out, static_cast<std::uint32_t>(weights.k()));
    bin::write_le(out, static_cast<std::uint32_t>(weights.num_classes));
    for (std::size_t d : weights.dims) bin::write_le(out, static_cast<std::uint32_t>(d));
    for (const auto& b : weights.blocks) {
        detail::write_f64s(out, b.trunk.data);
        detail::write_f64s(out, b.trunk_bias);
        detail::write_f64s(out, b.head.data);
        detail::write_f64s(out, b.head_bias);
    }
}

inline ExitNetWeights read_weights(std::istream& in) {
    bin::expect_magic(in, "MOODNET1", "weight file");
    const auto k = bin::read_le<std::uint32_t>(in, "weight header");
    const auto c = bin::read_le<std::uint32_t>(in, "weight header");
    if (k == 0 || c == 0) throw SchemaError("weight file declares k or C as zero");
    ExitNetWeights w;
    w.num_classes = c;
    for (std::uint32_t i = 0; i <= k; ++i) w.dims.push_back(bin::read_le<std::uint32_t>(in, "weight dims"));
    for (std::size_t d : w.dims)
        if (d == 0) throw SchemaError("weight file declares a zero layer width");
    for (std::size_t i = 1; i <= k; ++i) {
        const std::string what = "block " + std::to_string(i);
        ExitBlock b;
        b.trunk = {w.dims[i], w.dims[i - 1], detail::read_f64s(in, w.dims[i] * w.dims[i - 1], what)};
        b.trunk_bias = detail::read_f64s(in, w.dims[i], what);
        b.head = {c, w.dims[i], detail::read_f64s(in, std::size_t{c} * w.dims[i], what)};
        b.head_bias = detail::read_f64s(in, c, what);
        w.blocks.push_back(std::move(b));
    }
    try {
        w.validate();
    } catch (const InputError& e) {
        throw SchemaError(std::string("weight file: ") + e.what());
    }
    return w;
}

inline void save_weights(const ExitNetWeights& weights, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_weights(weights, out);
    if (!out) throw IoError("failed writing " + path.string());
}

inline ExitNetWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_weights(in);
}

}  // namespace mood
