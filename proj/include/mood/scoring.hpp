#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mood/complexity.hpp"
#include "mood/error.hpp"

namespace mood {

/// Logits of one sample at every exit. Exit i (1-based) lives at logits[i - 1].
struct LogitsRecord {
    std::string sample_id;
    std::optional<std::size_t> label;
    std::vector<std::vector<double>> logits;

    std::size_t exits() const noexcept { return logits.size(); }
    std::size_t classes() const noexcept { return logits.empty() ? 0 : logits.front().size(); }

    std::span<const double> at_exit(std::size_t exit) const {
        if (exit < 1 || exit > logits.size())
            throw InputError("exit " + std::to_string(exit) + " out of range [1, " +
                             std::to_string(logits.size()) + "]");
        return logits[exit - 1];
    }

    /// Throws SchemaError unless the record has exactly k vectors of C finite entries.
    void validate(std::size_t k, std::size_t num_classes) const {
        if (logits.size() != k)
            throw SchemaError("record '" + sample_id + "' has " + std::to_string(logits.size()) +
                              " exit vectors, expected " + std::to_string(k));
        for (std::size_t i = 0; i < k; ++i) {
            if (logits[i].size() != num_classes)
                throw SchemaError("record '" + sample_id + "' exit " + std::to_string(i + 1) + " has " +
                                  std::to_string(logits[i].size()) + " logits, expected " +
                                  std::to_string(num_classes));
            for (double v : logits[i])
                if (!std::isfinite(v)) throw SchemaError("record '" + sample_id + "' has a non-finite logit");
        }
        if (label && *label >= num_classes)
            throw SchemaError("record '" + sample_id + "' label " + std::to_string(*label) +
                              " outside [0, " + std::to_string(num_classes) + ")");
    }

    friend bool operator==(const LogitsRecord&, const LogitsRecord&) = default;
};

struct ScoreFunction {
    enum class Kind { Msp, OdinT, Energy, AdjustedEnergy };

    Kind kind = Kind::AdjustedEnergy;
    double temperature = 1000.0;  // only meaningful for OdinT

    static ScoreFunction msp() { return {Kind::Msp, 1.0}; }
    static ScoreFunction odin(double temperature = 1000.0) {
        if (!(temperature > 0.0) || !std::isfinite(temperature))
            throw InputError("ODIN temperature must be a positive finite number");
        return {Kind::OdinT, temperature};
    }
    static ScoreFunction energy() { return {Kind::Energy, 1.0}; }
    static ScoreFunction adjusted_energy() { return {Kind::AdjustedEnergy, 1.0}; }

    friend bool operator==(const ScoreFunction& a, const ScoreFunction& b) {
        return a.kind == b.kind && (a.kind != Kind::OdinT || a.temperature == b.temperature);
    }
};

inline std::string_view to_string(ScoreFunction::Kind kind) {
    switch (kind) {
        case ScoreFunction::Kind::Msp: return "msp";
        case ScoreFunction::Kind::OdinT: return "odin";
        case ScoreFunction::Kind::Energy: return "energy";
        case ScoreFunction::Kind::AdjustedEnergy: return "adjusted-energy";
    }
    return "?";
}

inline ScoreFunction parse_score_function(std::string_view name, double temperature = 1000.0) {
    if (name == "msp") return ScoreFunction::msp();
    if (name == "odin") return ScoreFunction::odin(temperature);
    if (name == "energy") return ScoreFunction::energy();
    if (name == "adjusted-energy") return ScoreFunction::adjusted_energy();
    throw InputError("unknown score function '" + std::string(name) +
                     "' (expected msp, odin, energy or adjusted-energy)");
}

/// Frozen calibration state. Immutable once built.
struct CalibrationProfile {
    std::size_t k = 0;
    std::size_t num_classes = 0;
    std::vector<double> energy_means;  // mean free energy -E per exit, index exit - 1
    std::uint64_t l_max_bits = 0;
    double gamma = 0.0;
    CodecId codec = CodecId::DeflatePng;
    ScoreFunction score_fn = ScoreFunction::adjusted_energy();
    double target_tpr = 0.95;
    std::size_t created_from = 0;

    void validate() const {
        if (k == 0) throw SchemaError("profile k must be >= 1");
        if (num_classes == 0) throw SchemaError("profile num_classes must be >= 1");
        if (energy_means.size() != k)
            throw SchemaError("profile energy_means has " + std::to_string(energy_means.size()) +
                              " entries, expected k = " + std::to_string(k));
        for (double m : energy_means)
            if (!std::isfinite(m)) throw SchemaError("profile energy_means must be finite");
        if (!std::isfinite(gamma)) throw SchemaError("profile gamma must be finite");
        if (!(target_tpr > 0.0 && target_tpr < 1.0)) throw SchemaError("profile target_tpr must lie in (0, 1)");
        if (created_from == 0) throw SchemaError("profile must be created from at least one sample");
        if (score_fn.kind == ScoreFunction::Kind::OdinT && !(score_fn.temperature > 0.0))
            throw SchemaError("profile ODIN temperature must be positive");
    }

    friend bool operator==(const CalibrationProfile&, const CalibrationProfile&) = default;
};

namespace detail {

inline void require_nonempty(std::span<const double> logits) {
    if (logits.empty()) throw InputError("logit vector is empty");
}

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double max_softmax(std::span<const double> logits, double temperature) {
    require_nonempty(logits);
    const double top = *std::max_element(logits.begin(), logits.end()) / temperature;
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v / temperature - top);
    // The top entry contributes exp(0) = 1 to the denominator.
    return 1.0 / denom;
}

}  // namespace detail

/// Energy E = -log sum_j exp(logits[j]) via the max-shift log-sum-exp.
inline double energy(std::span<const double> logits) {
    detail::require_nonempty(logits);
    const double top = *std::max_element(logits.begin(), logits.end());
    double acc = 0.0;
    for (double v : logits) acc += std::exp(v - top);
    return -(top + std::log(acc));
}

/// Free energy -E, higher for more in-distribution-looking samples.
inline double free_energy(std::span<const double> logits) { return -energy(logits); }

inline double msp(std::span<const double> logits) { return detail::max_softmax(logits, 1.0); }

/// Temperature-scaled maximum softmax (ODIN without input perturbation).
inline double odin_t(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw InputError("ODIN temperature must be positive");
    return detail::max_softmax(logits, temperature);
}

/// Per-exit means of -E over an ID calibration set, accumulated one record at a time.
class EnergyMeanAccumulator {
public:
    void add(const LogitsRecord& record) {
        if (count_ == 0) {
            k_ = record.exits();
            classes_ = record.classes();
            if (k_ == 0) throw InputError("record has no exits");
            sums_.assign(k_, {});
        }
        record.validate(k_, classes_);
        for (std::size_t i = 0; i < k_; ++i) sums_[i].add(free_energy(record.logits[i]));
        ++count_;
    }

    /// Adds precomputed free energies (one per exit) for a record of known shape.
    void add_free_energies(std::span<const double> per_exit) {
        if (count_ == 0) {
            k_ = per_exit.size();
            sums_.assign(k_, {});
        }
        if (per_exit.size() != k_) throw InputError("free-energy vector length differs from k");
        for (std::size_t i = 0; i < k_; ++i) sums_[i].add(per_exit[i]);
        ++count_;
    }

    std::size_t count() const noexcept { return count_; }

    std::vector<double> means() const {
        if (count_ == 0) throw CalibrationError("cannot compute energy means of an empty ID set");
        std::vector<double> out(k_);
        for (std::size_t i = 0; i < k_; ++i) out[i] = sums_[i].value() / static_cast<double>(count_);
        return out;
    }

private:
    std::size_t k_ = 0;
    std::size_t classes_ = 0;
    std::size_t count_ = 0;
    std::vector<detail::CompensatedSum> sums_;
};

/// Mean of -E at every exit, over all records (no routing).
inline std::vector<double> calibrate_energy_means(std::span<const LogitsRecord> id_records) {
    EnergyMeanAccumulator acc;
    for (const auto& r : id_records) acc.add(r);
    return acc.means();
}

inline double adjusted_energy(const LogitsRecord& record, std::size_t exit, const CalibrationProfile& profile) {
    if (exit < 1 || exit > profile.k)
        throw InputError("exit " + std::to_string(exit) + " out of range [1, " + std::to_string(profile.k) + "]");
    return free_energy(record.at_exit(exit)) - profile.energy_means[exit - 1];
}

/// Score of `record` at `exit` under the profile's score function. Higher means more ID.
inline double score(const LogitsRecord& record, std::size_t exit, const CalibrationProfile& profile) {
    switch (profile.score_fn.kind) {
        case ScoreFunction::Kind::Msp: return msp(record.at_exit(exit));
        case ScoreFunction::Kind::OdinT: return odin_t(record.at_exit(exit), profile.score_fn.temperature);
        case ScoreFunction::Kind::Energy: return free_energy(record.at_exit(exit));
        case ScoreFunction::Kind::AdjustedEnergy: return adjusted_energy(record, exit, profile);
    }
    throw InputError("unknown score function");
}

/// Zero-based order-statistic index m = floor((1 - target_tpr) * n), the largest m
/// with (n - m) / n >= target_tpr.
inline std::size_t threshold_rank(std::size_t n, double target_tpr) {
    const double dn = static_cast<double>(n);
    auto m = static_cast<std::size_t>(std::floor((1.0 - target_tpr) * dn));
    if (m >= n) m = n - 1;
    // The product above can land one off an integer boundary; settle on the ratio test.
    auto keeps = [&](std::size_t rank) { return static_cast<double>(n - rank) / dn >= target_tpr; };
    while (m > 0 && !keeps(m)) --m;
    while (m + 1 < n && keeps(m + 1)) ++m;
    return m;
}

/// Threshold gamma such that at least target_tpr of `scores` are >= gamma.
inline double calibrate_threshold(std::span<const double> scores, double target_tpr) {
    if (scores.empty()) throw CalibrationError("cannot calibrate a threshold on an empty score list");
    if (!(target_tpr > 0.0 && target_tpr < 1.0)) throw InputError("target_tpr must lie in (0, 1)");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::stable_sort(sorted.begin(), sorted.end());
    return sorted[threshold_rank(sorted.size(), target_tpr)];
}

}  // namespace mood
