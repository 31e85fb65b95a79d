#pragma once

// File-level pipeline steps shared by the CLI and the integration tests:
// complexity indexing, calibration, and strategy evaluation over streams.
// Work is split into chunks processed by a worker pool; results are always
// committed in input order so output never depends on the worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mood/complexity.hpp"
#include "mood/cost_model.hpp"
#include "mood/datastore.hpp"
#include "mood/detector.hpp"
#include "mood/error.hpp"
#include "mood/metrics.hpp"
#include "mood/scoring.hpp"

namespace mood {

inline constexpr std::size_t kChunkSize = 1024;

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Rethrows the first failure.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

/// Reads up to kChunkSize items from a streaming reader with a next() method.
template <typename Reader>
auto read_chunk(Reader& reader) {
    std::vector<typename decltype(reader.next())::value_type> chunk;
    while (chunk.size() < kChunkSize) {
        auto item = reader.next();
        if (!item) break;
        chunk.push_back(std::move(*item));
    }
    return chunk;
}

/// Complexity bit length of every image, in source order.
struct ComplexityEntry {
    std::string sample_id;
    std::uint64_t bits = 0;
};

inline std::vector<ComplexityEntry> measure_complexity(const fs::path& images, CodecId codec, std::size_t workers) {
    if (!codec_available(codec)) throw UnsupportedError("codec " + std::string(to_string(codec)) + " is not available in this build");
    ImageReader reader(images);
    std::vector<ComplexityEntry> out;
    for (auto chunk = read_chunk(reader); !chunk.empty(); chunk = read_chunk(reader)) {
        std::vector<std::uint64_t> bits(chunk.size());
        parallel_for(chunk.size(), workers, [&](std::size_t i) { bits[i] = compress_bit_length(chunk[i].image, codec); });
        for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back({std::move(chunk[i].sample_id), bits[i]});
    }
    return out;
}

/// sample_id -> bits, rejecting duplicate ids.
class ComplexityIndex {
public:
    ComplexityIndex() = default;
    explicit ComplexityIndex(const std::vector<ComplexityEntry>& entries) {
        for (const auto& e : entries)
            if (!bits_.emplace(e.sample_id, e.bits).second) throw SchemaError("duplicate image id '" + e.sample_id + "'");
    }

    std::uint64_t bits(const std::string& id) const {
        auto it = bits_.find(id);
        if (it == bits_.end()) throw SchemaError("logits record '" + id + "' has no matching image");
        return it->second;
    }

    std::size_t size() const noexcept { return bits_.size(); }

    std::uint64_t max_bits() const {
        if (bits_.empty()) throw CalibrationError("no ID images to compute maximum complexity");
        std::uint64_t m = 0;
        for (const auto& [_, b] : bits_) m = std::max(m, b);
        return m;
    }

private:
    std::unordered_map<std::string, std::uint64_t> bits_;
};

/// Tracks which ids a logits stream used, so unpaired images are reported.
class PairingCheck {
public:
    void use(const std::string& id) {
        if (!seen_.insert(id).second) throw SchemaError("duplicate logits id '" + id + "'");
    }
    void finish(const ComplexityIndex& index) const {
        if (seen_.size() != index.size())
            throw SchemaError(std::to_string(index.size() - seen_.size()) + " image(s) have no matching logits record");
    }

private:
    std::unordered_set<std::string> seen_;
};

struct CalibrationRequest {
    fs::path id_logits;
    std::optional<fs::path> id_images;  // required for complexity routing
    CodecId codec = CodecId::DeflatePng;
    ScoreFunction score_fn = ScoreFunction::adjusted_energy();
    double target_tpr = 0.95;
    std::size_t workers = 1;
};

/// Energy means over all ID samples, L_max over the ID images, and gamma over complexity-routed scores.
inline CalibrationProfile calibrate_profile(const CalibrationRequest& req) {
    if (!req.id_images) throw InputError("calibration needs ID images for complexity routing");
    if (!(req.target_tpr > 0.0 && req.target_tpr < 1.0)) throw InputError("target TPR must lie in (0, 1)");
    const ComplexityIndex index(measure_complexity(*req.id_images, req.codec, req.workers));
    if (index.size() == 0) throw CalibrationError("ID image set is empty");
    const std::uint64_t l_max = index.max_bits();
    if (l_max == 0) throw CalibrationError("maximum ID complexity is zero");

    LogitsReader reader(req.id_logits);
    const auto& header = reader.header();
    CalibrationProfile scratch;
    scratch.k = header.k;
    scratch.num_classes = header.num_classes;
    scratch.energy_means.assign(header.k, 0.0);
    scratch.l_max_bits = l_max;
    scratch.score_fn = req.score_fn;

    EnergyMeanAccumulator means;
    PairingCheck pairing;
    std::vector<std::size_t> routed_exit;
    std::vector<double> routed_raw;  // adjusted energy: -E before mean removal
    for (auto chunk = read_chunk(reader); !chunk.empty(); chunk = read_chunk(reader)) {
        std::vector<std::vector<double>> free_energies(chunk.size());
        std::vector<std::size_t> exits(chunk.size());
        std::vector<double> raw(chunk.size());
        for (const auto& r : chunk) pairing.use(r.sample_id);
        parallel_for(chunk.size(), req.workers, [&](std::size_t i) {
            const auto& r = chunk[i];
            auto& fe = free_energies[i];
            fe.resize(header.k);
            for (std::size_t e = 0; e < header.k; ++e) fe[e] = free_energy(r.logits[e]);
            exits[i] = select_exit(normalize_complexity(index.bits(r.sample_id), l_max), header.k);
            raw[i] = req.score_fn.kind == ScoreFunction::Kind::AdjustedEnergy ? fe[exits[i] - 1]
                                                                             : score(r, exits[i], scratch);
        });
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            means.add_free_energies(free_energies[i]);
            routed_exit.push_back(exits[i]);
            routed_raw.push_back(raw[i]);
        }
    }
    pairing.finish(index);
    if (means.count() == 0) throw CalibrationError("ID logits file holds no records");

    CalibrationProfile profile = scratch;
    profile.energy_means = means.means();
    if (req.score_fn.kind == ScoreFunction::Kind::AdjustedEnergy)
        for (std::size_t i = 0; i < routed_raw.size(); ++i) routed_raw[i] -= profile.energy_means[routed_exit[i] - 1];
    profile.gamma = calibrate_threshold(routed_raw, req.target_tpr);
    profile.codec = req.codec;
    profile.target_tpr = req.target_tpr;
    profile.created_from = means.count();
    profile.validate();
    return profile;
}

/// Per-exit greedy thresholds from an ID logits file.
inline std::vector<double> calibrate_greedy_gammas(const fs::path& id_logits, const CalibrationProfile& profile) {
    LogitsReader reader(id_logits);
    std::vector<std::vector<double>> columns(profile.k);
    while (auto r = reader.next()) {
        r->validate(profile.k, profile.num_classes);
        for (std::size_t i = 1; i <= profile.k; ++i) columns[i - 1].push_back(adjusted_energy(*r, i, profile));
    }
    if (columns.front().empty()) throw CalibrationError("cannot calibrate greedy thresholds on an empty ID set");
    std::vector<double> gammas(profile.k);
    for (std::size_t i = 0; i < profile.k; ++i) gammas[i] = calibrate_threshold(columns[i], profile.target_tpr);
    return gammas;
}

struct DatasetInput {
    std::string name;
    fs::path logits;
    std::optional<fs::path> images;
};

struct DatasetResult {
    std::vector<DetectionOutcome> outcomes;
    std::vector<std::optional<std::size_t>> labels;
};

/// Runs one strategy over a dataset. `ordinal_base` offsets the randomized
/// strategy's per-sample generator so every sample in a run draws independently.
inline DatasetResult run_strategy(const DatasetInput& input, const StrategyId& strategy, const CalibrationProfile& profile,
                                  const ExitCostModel& costs, std::uint64_t ordinal_base, std::size_t workers,
                                  std::ostream* outcome_sink = nullptr) {
    if (costs.k() != profile.k)
        throw InputError("cost model has " + std::to_string(costs.k()) + " exits, profile expects " + std::to_string(profile.k));
    const bool needs_images = std::holds_alternative<MoodStrategy>(strategy);
    ComplexityIndex index;
    if (needs_images) {
        if (!input.images) throw InputError("dataset '" + input.name + "': the mood strategy needs images");
        index = ComplexityIndex(measure_complexity(*input.images, profile.codec, workers));
    }
    if (const auto* c = std::get_if<ConstantStrategy>(&strategy); c && (c->exit < 1 || c->exit > profile.k))
        throw InputError("constant exit " + std::to_string(c->exit) + " out of range [1, " + std::to_string(profile.k) + "]");
    if (const auto* g = std::get_if<GreedyStrategy>(&strategy); g && g->per_exit_gammas.size() != profile.k)
        throw InputError("greedy strategy needs per-exit thresholds");

    LogitsReader reader(input.logits);
    if (reader.header().k != profile.k || reader.header().num_classes != profile.num_classes)
        throw SchemaError("dataset '" + input.name + "' has shape k=" + std::to_string(reader.header().k) +
                          ", C=" + std::to_string(reader.header().num_classes) + "; profile expects k=" +
                          std::to_string(profile.k) + ", C=" + std::to_string(profile.num_classes));
    PairingCheck pairing;
    DatasetResult result;
    std::uint64_t ordinal = ordinal_base;
    for (auto chunk = read_chunk(reader); !chunk.empty(); chunk = read_chunk(reader)) {
        std::vector<DetectionOutcome> outs(chunk.size());
        if (needs_images)
            for (const auto& r : chunk) pairing.use(r.sample_id);
        parallel_for(chunk.size(), workers, [&](std::size_t i) {
            const auto& r = chunk[i];
            std::visit(
                [&](const auto& s) {
                    using S = std::decay_t<decltype(s)>;
                    if constexpr (std::is_same_v<S, MoodStrategy>) {
                        outs[i] = mood_detect_bits(r, index.bits(r.sample_id), profile, costs);
                    } else if constexpr (std::is_same_v<S, GreedyStrategy>) {
                        outs[i] = greedy_detect(r, profile, s.per_exit_gammas, costs);
                    } else if constexpr (std::is_same_v<S, RandomizedStrategy>) {
                        auto rng = sample_generator(s.seed, ordinal + i);
                        outs[i] = randomized_detect(r, profile, rng, costs);
                    } else {
                        outs[i] = constant_detect(r, profile, s.exit, costs);
                    }
                },
                strategy);
        });
        ordinal += chunk.size();
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            if (outcome_sink) write_outcome_line(outs[i], *outcome_sink);
            result.labels.push_back(chunk[i].label);
            result.outcomes.push_back(std::move(outs[i]));
        }
    }
    if (needs_images) pairing.finish(index);
    return result;
}

}  // namespace mood
