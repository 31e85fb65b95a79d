#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mood/complexity.hpp"
#include "mood/cost_model.hpp"
#include "mood/error.hpp"
#include "mood/image.hpp"
#include "mood/scoring.hpp"

namespace mood {

enum class Decision { In, Out };

inline const char* to_string(Decision d) { return d == Decision::In ? "in" : "out"; }

struct DetectionOutcome {
    std::string sample_id;
    Decision decision = Decision::Out;
    std::size_t exit_used = 1;
    double score = 0.0;
    std::optional<std::size_t> predicted_class;
    double charged_flops = 0.0;

    friend bool operator==(const DetectionOutcome&, const DetectionOutcome&) = default;
};

/// SplitMix64 generator. Fully specified so every build draws the same sequence.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform exit in [1, k] via multiply-shift.
    std::size_t next_exit(std::size_t k) noexcept {
        const auto wide = static_cast<unsigned __int128>(next()) * static_cast<unsigned __int128>(k);
        return static_cast<std::size_t>(wide >> 64) + 1;
    }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

/// Generator for the sample at `ordinal` in an evaluation run. Independent of worker layout.
inline SplitMix64 sample_generator(std::uint64_t seed, std::uint64_t ordinal) noexcept {
    return SplitMix64(seed + ordinal);
}

struct MoodStrategy {};
struct GreedyStrategy {
    std::vector<double> per_exit_gammas;
};
struct RandomizedStrategy {
    std::uint64_t seed = 0;
};
struct ConstantStrategy {
    std::size_t exit = 1;
};

using StrategyId = std::variant<MoodStrategy, GreedyStrategy, RandomizedStrategy, ConstantStrategy>;

/// Parses `mood`, `greedy`, `random:<seed>` or `constant:<exit>`. Greedy gammas are filled in later.
inline StrategyId parse_strategy(const std::string& text) {
    auto number = [&](std::size_t from) -> std::uint64_t {
        const std::string digits = text.substr(from);
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
            throw InputError("bad strategy '" + text + "'");
        try {
            return std::stoull(digits);
        } catch (const std::exception&) {
            throw InputError("bad strategy '" + text + "'");
        }
    };
    if (text == "mood") return MoodStrategy{};
    if (text == "greedy") return GreedyStrategy{};
    if (text.rfind("random:", 0) == 0) return RandomizedStrategy{number(7)};
    if (text.rfind("constant:", 0) == 0) {
        const auto exit = number(9);
        if (exit == 0) throw InputError("constant exit must be >= 1");
        return ConstantStrategy{static_cast<std::size_t>(exit)};
    }
    throw InputError("unknown strategy '" + text + "' (expected mood, greedy, random:<seed>, constant:<exit>)");
}

inline std::string strategy_name(const StrategyId& s) {
    if (std::holds_alternative<MoodStrategy>(s)) return "mood";
    if (std::holds_alternative<GreedyStrategy>(s)) return "greedy";
    if (const auto* r = std::get_if<RandomizedStrategy>(&s)) return "random:" + std::to_string(r->seed);
    return "constant:" + std::to_string(std::get<ConstantStrategy>(s).exit);
}

/// Index of the largest logit; lowest index wins ties.
inline std::size_t argmax(std::span<const double> logits) {
    if (logits.empty()) throw InputError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
        if (logits[j] > logits[best]) best = j;
    return best;
}

namespace detail {

inline void check_shapes(const LogitsRecord& record, const CalibrationProfile& profile, const ExitCostModel& costs) {
    if (record.exits() != profile.k)
        throw InputError("record '" + record.sample_id + "' has " + std::to_string(record.exits()) +
                         " exits, profile expects " + std::to_string(profile.k));
    record.validate(profile.k, profile.num_classes);
    if (costs.k() != profile.k)
        throw InputError("cost model has " + std::to_string(costs.k()) + " exits, profile expects " +
                         std::to_string(profile.k));
}

/// Single-threshold decision at a given exit, shared by MOOD, randomized and constant exits.
inline DetectionOutcome decide_at(const LogitsRecord& record, std::size_t exit, const CalibrationProfile& profile,
                                  const ExitCostModel& costs) {
    DetectionOutcome out;
    out.sample_id = record.sample_id;
    out.exit_used = exit;
    out.score = score(record, exit, profile);
    out.decision = out.score >= profile.gamma ? Decision::In : Decision::Out;
    if (out.decision == Decision::In) out.predicted_class = argmax(record.at_exit(exit));
    out.charged_flops = costs.at(exit);
    return out;
}

}  // namespace detail

/// MOOD with a precomputed complexity bit length for the sample's image.
inline DetectionOutcome mood_detect_bits(const LogitsRecord& record, std::uint64_t bits, const CalibrationProfile& profile,
                                         const ExitCostModel& costs) {
    detail::check_shapes(record, profile, costs);
    const std::size_t exit = select_exit(normalize_complexity(bits, profile.l_max_bits), profile.k);
    return detail::decide_at(record, exit, profile, costs);
}

/// Complexity-routed detection: exit chosen from the image, then one global threshold.
inline DetectionOutcome mood_detect(const LogitsRecord& record, const ImageBuffer& img, const CalibrationProfile& profile,
                                    const ExitCostModel& costs) {
    return mood_detect_bits(record, compress_bit_length(img, profile.codec), profile, costs);
}

/// Rejects at the first exit whose adjusted energy is <= that exit's threshold; survivors are In at exit k.
inline DetectionOutcome greedy_detect(const LogitsRecord& record, const CalibrationProfile& profile,
                                      std::span<const double> per_exit_gammas, const ExitCostModel& costs) {
    detail::check_shapes(record, profile, costs);
    if (per_exit_gammas.size() != profile.k)
        throw InputError("greedy needs " + std::to_string(profile.k) + " thresholds, got " +
                         std::to_string(per_exit_gammas.size()));
    DetectionOutcome out;
    out.sample_id = record.sample_id;
    for (std::size_t i = 1; i <= profile.k; ++i) {
        out.exit_used = i;
        out.score = adjusted_energy(record, i, profile);
        out.charged_flops = costs.at(i);
        if (out.score <= per_exit_gammas[i - 1]) {
            out.decision = Decision::Out;
            return out;
        }
    }
    out.decision = Decision::In;
    out.predicted_class = argmax(record.at_exit(profile.k));
    return out;
}

/// Per-exit adjusted-energy thresholds, each keeping target_tpr of the ID set above it.
inline std::vector<double> calibrate_greedy_gammas(std::span<const LogitsRecord> id_records,
                                                   const CalibrationProfile& profile) {
    if (id_records.empty()) throw CalibrationError("cannot calibrate greedy thresholds on an empty ID set");
    std::vector<double> gammas(profile.k);
    std::vector<double> column(id_records.size());
    for (std::size_t i = 1; i <= profile.k; ++i) {
        for (std::size_t n = 0; n < id_records.size(); ++n) column[n] = adjusted_energy(id_records[n], i, profile);
        gammas[i - 1] = calibrate_threshold(column, profile.target_tpr);
    }
    return gammas;
}

inline DetectionOutcome randomized_detect(const LogitsRecord& record, const CalibrationProfile& profile,
                                          SplitMix64& rng, const ExitCostModel& costs) {
    detail::check_shapes(record, profile, costs);
    return detail::decide_at(record, rng.next_exit(profile.k), profile, costs);
}

inline DetectionOutcome constant_detect(const LogitsRecord& record, const CalibrationProfile& profile, std::size_t exit,
                                        const ExitCostModel& costs) {
    detail::check_shapes(record, profile, costs);
    if (exit < 1 || exit > profile.k)
        throw InputError("constant exit " + std::to_string(exit) + " out of range [1, " + std::to_string(profile.k) + "]");
    return detail::decide_at(record, exit, profile, costs);
}

}  // namespace mood
