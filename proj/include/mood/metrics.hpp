#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mood/detector.hpp"
#include "mood/error.hpp"
#include "mood/scoring.hpp"

namespace mood {

/// Area under the ROC curve with ID as the positive class, ties counted half.
///
/// Computed as the Mann-Whitney statistic from midranks. Ranks are kept doubled
/// so the numerator is an exact integer and the result matches the pairwise
/// definition bit for bit.
inline double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) throw InputError("auroc needs non-empty ID and OOD score lists");
    const std::size_t n_id = id_scores.size();
    const std::size_t n = n_id + ood_scores.size();
    std::vector<std::pair<double, bool>> all;
    all.reserve(n);
    for (double s : id_scores) all.emplace_back(s, true);
    for (double s : ood_scores) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    // Sum over ID samples of 2 * midrank (1-based ranks).
    std::uint64_t doubled_rank_sum = 0;
    for (std::size_t lo = 0; lo < n;) {
        std::size_t hi = lo + 1;
        while (hi < n && all[hi].first == all[lo].first) ++hi;
        const std::uint64_t doubled_midrank = (lo + 1) + hi;  // (lo+1 + hi) = 2 * mean rank of [lo+1, hi]
        for (std::size_t i = lo; i < hi; ++i)
            if (all[i].second) doubled_rank_sum += doubled_midrank;
        lo = hi;
    }
    const std::uint64_t doubled_u = doubled_rank_sum - static_cast<std::uint64_t>(n_id) * (n_id + 1);
    return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_id) * static_cast<double>(ood_scores.size()));
}

/// Fraction of OOD scores accepted by the threshold that keeps target_tpr of ID scores.
inline double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double target_tpr) {
    if (id_scores.empty() || ood_scores.empty()) throw InputError("fpr_at_tpr needs non-empty ID and OOD score lists");
    const double gamma = calibrate_threshold(id_scores, target_tpr);
    const auto accepted = std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return s >= gamma; });
    return static_cast<double>(accepted) / static_cast<double>(ood_scores.size());
}

enum class AccuracyMode {
    AllId,        // rejected ID samples count as errors
    AcceptedOnly  // accuracy among accepted ID samples
};

/// ID classification accuracy. labels[i] belongs to outcomes[i].
inline double id_accuracy(std::span<const DetectionOutcome> outcomes, std::span<const std::optional<std::size_t>> labels,
                          AccuracyMode mode = AccuracyMode::AllId) {
    if (labels.size() != outcomes.size()) throw InputError("id_accuracy: one label per outcome required");
    std::size_t correct = 0;
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!labels[i]) throw InputError("id_accuracy: sample '" + outcomes[i].sample_id + "' has no label");
        if (outcomes[i].decision != Decision::In) continue;
        ++accepted;
        if (outcomes[i].predicted_class == labels[i]) ++correct;
    }
    const std::size_t denom = mode == AccuracyMode::AllId ? outcomes.size() : accepted;
    if (denom == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(correct) / static_cast<double>(denom);
}

inline double mean_flops(std::span<const DetectionOutcome> outcomes) {
    if (outcomes.empty()) throw InputError("mean_flops of an empty outcome list");
    detail::CompensatedSum sum;
    for (const auto& o : outcomes) sum.add(o.charged_flops);
    return sum.value() / static_cast<double>(outcomes.size());
}

/// Counts per exit; entry i - 1 is exit i.
inline std::vector<std::size_t> exit_histogram(std::span<const DetectionOutcome> outcomes, std::size_t k) {
    std::vector<std::size_t> hist(k, 0);
    for (const auto& o : outcomes) {
        if (o.exit_used < 1 || o.exit_used > k) throw InputError("outcome exit outside [1, k]");
        ++hist[o.exit_used - 1];
    }
    return hist;
}

struct EvalReport {
    std::string strategy;
    std::string dataset;
    double auroc = 0.0;
    double fpr_at_tpr = 0.0;
    double id_accuracy = 0.0;
    double mean_flops = 0.0;
    std::vector<std::size_t> exit_histogram;      // ID and OOD samples together
    std::vector<std::size_t> id_exit_histogram;
    std::vector<std::size_t> ood_exit_histogram;
    std::size_t id_count = 0;
    std::size_t ood_count = 0;

    /// Normalized exit frequencies over all samples in the row.
    std::vector<double> exit_frequencies() const {
        const double total = static_cast<double>(std::accumulate(exit_histogram.begin(), exit_histogram.end(), std::size_t{0}));
        std::vector<double> f(exit_histogram.size(), 0.0);
        if (total > 0)
            for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(exit_histogram[i]) / total;
        return f;
    }
};

struct ReportOptions {
    double target_tpr = 0.95;
    AccuracyMode accuracy = AccuracyMode::AllId;
};

inline std::vector<double> outcome_scores(std::span<const DetectionOutcome> outcomes) {
    std::vector<double> s;
    s.reserve(outcomes.size());
    for (const auto& o : outcomes) s.push_back(o.score);
    return s;
}

/// One report row from a strategy's ID and OOD outcomes.
inline EvalReport build_report(std::string strategy, std::string dataset, std::span<const DetectionOutcome> id_outcomes,
                               std::span<const DetectionOutcome> ood_outcomes,
                               std::span<const std::optional<std::size_t>> id_labels, std::size_t k,
                               const ReportOptions& options = {}) {
    EvalReport r;
    r.strategy = std::move(strategy);
    r.dataset = std::move(dataset);
    const auto id_scores = outcome_scores(id_outcomes);
    const auto ood_scores = outcome_scores(ood_outcomes);
    r.auroc = auroc(id_scores, ood_scores);
    r.fpr_at_tpr = fpr_at_tpr(id_scores, ood_scores, options.target_tpr);
    r.id_accuracy = id_accuracy(id_outcomes, id_labels, options.accuracy);

    std::vector<DetectionOutcome> all(id_outcomes.begin(), id_outcomes.end());
    all.insert(all.end(), ood_outcomes.begin(), ood_outcomes.end());
    r.mean_flops = mean_flops(all);
    r.exit_histogram = exit_histogram(all, k);
    r.id_exit_histogram = exit_histogram(id_outcomes, k);
    r.ood_exit_histogram = exit_histogram(ood_outcomes, k);
    r.id_count = id_outcomes.size();
    r.ood_count = ood_outcomes.size();
    return r;
}

/// Average row across per-dataset rows; histograms are summed.
inline EvalReport average_report(std::span<const EvalReport> rows, std::string dataset = "average") {
    if (rows.empty()) throw InputError("cannot average zero report rows");
    EvalReport avg;
    avg.strategy = rows.front().strategy;
    avg.dataset = std::move(dataset);
    const std::size_t k = rows.front().exit_histogram.size();
    avg.exit_histogram.assign(k, 0);
    avg.id_exit_histogram.assign(k, 0);
    avg.ood_exit_histogram.assign(k, 0);
    for (const auto& r : rows) {
        avg.auroc += r.auroc;
        avg.fpr_at_tpr += r.fpr_at_tpr;
        avg.id_accuracy += r.id_accuracy;
        avg.mean_flops += r.mean_flops;
        for (std::size_t i = 0; i < k; ++i) {
            avg.exit_histogram[i] += r.exit_histogram[i];
            avg.id_exit_histogram[i] += r.id_exit_histogram[i];
            avg.ood_exit_histogram[i] += r.ood_exit_histogram[i];
        }
        avg.id_count += r.id_count;
        avg.ood_count += r.ood_count;
    }
    const double n = static_cast<double>(rows.size());
    avg.auroc /= n;
    avg.fpr_at_tpr /= n;
    avg.id_accuracy /= n;
    avg.mean_flops /= n;
    return avg;
}

namespace detail {

inline std::string fmt6(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

inline std::vector<std::string> report_header(std::size_t k) {
    std::vector<std::string> h{"strategy", "dataset", "auroc", "fpr95", "id_acc", "mean_flops"};
    for (std::size_t i = 1; i <= k; ++i) h.push_back("exit_" + std::to_string(i));
    return h;
}

inline std::vector<std::string> report_cells(const EvalReport& r) {
    std::vector<std::string> c{r.strategy, r.dataset, fmt6(r.auroc), fmt6(r.fpr_at_tpr), fmt6(r.id_accuracy),
                               fmt6(r.mean_flops)};
    for (double f : r.exit_frequencies()) c.push_back(fmt6(f));
    return c;
}

}  // namespace detail

inline void write_report_csv(std::span<const EvalReport> rows, std::ostream& out) {
    if (rows.empty()) return;
    const auto header = detail::report_header(rows.front().exit_histogram.size());
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
        const auto cells = detail::report_cells(r);
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    }
}

/// Aligned plain-text table of string cells; first row is the header.
inline void write_aligned_table(const std::vector<std::vector<std::string>>& table, std::ostream& out) {
    std::vector<std::size_t> width;
    for (const auto& row : table) {
        if (width.size() < row.size()) width.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    for (std::size_t r = 0; r < table.size(); ++r) {
        for (std::size_t i = 0; i < table[r].size(); ++i) {
            if (i) out << "  ";
            // Text columns left-aligned, numbers right-aligned.
            if (i < 2)
                out << std::left << std::setw(static_cast<int>(width[i])) << table[r][i];
            else
                out << std::right << std::setw(static_cast<int>(width[i])) << table[r][i];
        }
        out << std::left << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
            out << std::string(total, '-') << '\n';
        }
    }
}

inline void write_report_table(std::span<const EvalReport> rows, std::ostream& out) {
    if (rows.empty()) return;
    std::vector<std::vector<std::string>> table{detail::report_header(rows.front().exit_histogram.size())};
    for (const auto& r : rows) table.push_back(detail::report_cells(r));
    write_aligned_table(table, out);
}

}  // namespace mood
