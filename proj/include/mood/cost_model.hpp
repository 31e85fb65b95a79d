#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mood/error.hpp"

namespace mood {

/// Cumulative inference cost of stopping at each exit; entry i - 1 is exit i.
struct ExitCostModel {
    std::vector<double> cumulative_flops;

    std::size_t k() const noexcept { return cumulative_flops.size(); }

    double at(std::size_t exit) const {
        if (exit < 1 || exit > cumulative_flops.size())
            throw InputError("exit " + std::to_string(exit) + " has no cost entry (k = " +
                             std::to_string(cumulative_flops.size()) + ")");
        return cumulative_flops[exit - 1];
    }

    void validate() const {
        if (cumulative_flops.empty()) throw SchemaError("cost model needs at least one exit");
        for (std::size_t i = 0; i < cumulative_flops.size(); ++i) {
            if (!std::isfinite(cumulative_flops[i]) || cumulative_flops[i] < 0.0)
                throw SchemaError("cost model entries must be finite and non-negative");
            if (i > 0 && !(cumulative_flops[i] > cumulative_flops[i - 1]))
                throw SchemaError("cost model must be strictly increasing");
        }
    }

    /// Five-exit MSDNet cost vector (Exit@1..Exit@5, in FLOPs).
    static ExitCostModel msdnet_default() { return {{0.267e8, 0.516e8, 0.689e8, 0.884e8, 1.051e8}}; }

    friend bool operator==(const ExitCostModel&, const ExitCostModel&) = default;
};

}  // namespace mood
