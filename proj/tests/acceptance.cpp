// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mood/mood.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace mood;
namespace fs = std::filesystem;

namespace {

struct Result {
    bool pass = true;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_s;  // <= 0: no runtime bound
    std::function<Result()> run;
};

Result fail(std::string why) { return {false, std::move(why)}; }

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---- independent oracles ----

double pairwise_auroc(const std::vector<double>& id, const std::vector<double>& ood) {
    double wins = 0.0;
    for (double a : id)
        for (double b : ood) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

// Tries every ID score as threshold; keeps the highest one retaining >= 95% of ID.
double enumerated_fpr95(const std::vector<double>& id, const std::vector<double>& ood) {
    bool found = false;
    double best = 0.0;
    for (double t : id) {
        const auto kept = std::count_if(id.begin(), id.end(), [&](double s) { return s >= t; });
        if (100 * kept >= 95 * static_cast<long>(id.size()) && (!found || t > best)) {
            best = t;
            found = true;
        }
    }
    const auto accepted = std::count_if(ood.begin(), ood.end(), [&](double s) { return s >= best; });
    return static_cast<double>(accepted) / static_cast<double>(ood.size());
}

std::size_t rational_exit(std::size_t i, std::size_t k) {  // min(max(ceil(i*k/20), 1), k)
    const std::size_t c = (i * k + 19) / 20;
    return std::min(std::max<std::size_t>(c, 1), k);
}

// ---- criteria ----

Result zero_mean() {
    std::mt19937_64 rng(101);
    std::vector<std::size_t> sizes{1, 2, 10000};
    for (int i = 0; i < 17; ++i) sizes.push_back(std::uniform_int_distribution<std::size_t>(1, 2000)(rng));
    double worst = 0.0;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        const std::size_t n = sizes[s];
        const std::size_t k = 1 + s % 8, c = s == 2 ? 50 : 1 + rng() % 50;
        const double shift = std::uniform_real_distribution<double>(-500.0, 500.0)(rng);
        std::normal_distribution<double> g(shift, 1.0 + static_cast<double>(s));
        std::vector<LogitsRecord> set(n);
        for (std::size_t r = 0; r < n; ++r) {
            set[r].sample_id = std::to_string(r);
            set[r].logits.assign(k, std::vector<double>(c));
            for (auto& v : set[r].logits)
                for (auto& x : v) x = g(rng);
        }
        auto profile = testing::make_profile(calibrate_energy_means(set), 0.0, c, ScoreFunction::adjusted_energy());
        for (std::size_t e = 1; e <= k; ++e) {
            detail::CompensatedSum sum, magnitude;
            for (const auto& r : set) {
                sum.add(adjusted_energy(r, e, profile));
                magnitude.add(std::abs(free_energy(r.at_exit(e))));
            }
            const double rel = std::abs(sum.value() / static_cast<double>(n)) / std::max(1.0, magnitude.value() / static_cast<double>(n));
            worst = std::max(worst, rel);
            if (rel > 1e-9) return fail(fmt("set %zu exit %zu: relative mean %.3g", s, e, rel));
        }
    }
    return {true, fmt("%zu sets, worst relative mean %.3g", sizes.size(), worst)};
}

Result threshold_tpr() {
    std::mt19937_64 rng(202);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 1000)(rng);
        std::vector<double> s(n);
        std::normal_distribution<double> g(0.0, 10.0);
        for (auto& x : s) x = g(rng);
        if (std::set<double>(s.begin(), s.end()).size() != n) {
            --t;
            continue;
        }
        const double gamma = calibrate_threshold(s, 0.95);
        const long kept = std::count_if(s.begin(), s.end(), [&](double x) { return x >= gamma; });
        const long nn = static_cast<long>(n);
        if (100 * kept < 95 * nn || 100 * kept > 95 * nn + 100)
            return fail(fmt("trial %d: N=%zu kept %ld", t, n, kept));
    }
    std::vector<double> hundred(100);
    std::iota(hundred.begin(), hundred.end(), 1.0);
    const double g = calibrate_threshold(hundred, 0.95);
    if (g != 6.0) return fail(fmt("{1..100} gave gamma %g", g));
    return {true, "1000 tie-free sets in bounds, {1..100} -> 6"};
}

Result auroc_oracle() {
    std::mt19937_64 rng(303);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng() % 100, m = 1 + rng() % 100;
        std::vector<double> id(n), ood(m);
        const int mode = t % 4;  // continuous, heavy ties, constant, mixed constant
        auto draw = [&](double bias) {
            switch (mode) {
                case 0: return std::normal_distribution<double>(bias, 1.0)(rng);
                case 1: return static_cast<double>(rng() % 5) + (bias > 0 ? 1 : 0);
                case 2: return 3.0;
                default: return bias > 0 ? 3.0 : static_cast<double>(rng() % 7);
            }
        };
        for (auto& x : id) x = draw(0.5);
        for (auto& x : ood) x = draw(-0.5);
        const double got = auroc(id, ood), want = pairwise_auroc(id, ood);
        if (std::abs(got - want) > 1e-12) return fail(fmt("instance %d: %.17g vs %.17g", t, got, want));
    }
    const double q = auroc(std::vector<double>{1, 3}, std::vector<double>{2, 4});
    if (q != 0.25) return fail(fmt("[1,3] vs [2,4] gave %.17g", q));
    return {true, "1000 instances within 1e-12, [1,3]/[2,4] -> 0.25"};
}

Result fpr_oracle() {
    std::mt19937_64 rng(404);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng() % 200, m = 1 + rng() % 200;
        std::vector<double> id(n), ood(m);
        const bool ties = t % 2 == 1;
        for (auto& x : id) x = ties ? static_cast<double>(rng() % 10) : std::normal_distribution<double>(1.0, 1.0)(rng);
        for (auto& x : ood) x = ties ? static_cast<double>(rng() % 10) : std::normal_distribution<double>(0.0, 1.0)(rng);
        const double got = fpr_at_tpr(id, ood, 0.95), want = enumerated_fpr95(id, ood);
        if (got != want) return fail(fmt("instance %d: %.17g vs %.17g", t, got, want));
    }
    std::vector<double> id(100);
    std::iota(id.begin(), id.end(), 1.0);
    const double f = fpr_at_tpr(id, std::vector<double>{5.5, 6.5, 7.5}, 0.95);
    if (f != 2.0 / 3.0) return fail(fmt("{1..100}/{5.5,6.5,7.5} gave %.17g", f));
    return {true, "1000 instances exact, {1..100}/{5.5,6.5,7.5} -> 2/3"};
}

Result exit_router() {
    std::size_t cells = 0, rational_diffs = 0;
    for (std::size_t k = 1; k <= 12; ++k)
        for (std::size_t i = 0; i <= 40; ++i) {
            const double normalized = static_cast<double>(i) / 20.0;
            const auto direct = static_cast<std::size_t>(
                std::min(std::max(std::ceil(normalized * static_cast<double>(k)), 1.0), static_cast<double>(k)));
            const std::size_t got = select_exit(normalized, k);
            if (got != direct) return fail(fmt("n=%g k=%zu: %zu vs %zu", normalized, k, got, direct));
            rational_diffs += got != rational_exit(i, k);
            ++cells;
        }
    if (rational_diffs) return fail(fmt("%zu cells differ from exact rational ceil", rational_diffs));
    return {true, fmt("%zu cells match direct and exact rational evaluation", cells)};
}

Result greedy_faithful() {
    // Single-class logits make the adjusted energy equal the logit itself (means are zero).
    struct Case {
        std::vector<double> scores, gammas;
        std::size_t exit;
        Decision decision;
    };
    std::vector<Case> cases{
        {{5, 5, 5}, {1, 1, 1}, 3, Decision::In},
        {{0, 5, 5}, {1, 1, 1}, 1, Decision::Out},
        {{1, 5, 5}, {1, 1, 1}, 1, Decision::Out},  // equality rejects
        {{2, 1, 5}, {1, 1, 1}, 2, Decision::Out},
        {{2, 2, 1}, {1, 1, 1}, 3, Decision::Out},
        {{2, 2, 1.5}, {1, 1, 1}, 3, Decision::In},
        {{-1, -2, -3}, {-2, -3, -4}, 3, Decision::In},
        {{-1, -3, -3}, {-2, -3, -4}, 2, Decision::Out},
        {{10}, {10}, 1, Decision::Out},
        {{10.5}, {10}, 1, Decision::In},
        {{3, 0, 0, 0, 0}, {2, 4, 4, 4, 4}, 2, Decision::Out},
        {{3, 5, 5, 5, 0.25}, {2, 4, 4, 4, 0.125}, 5, Decision::In},
    };
    std::mt19937_64 rng(505);
    while (cases.size() < 50) {
        const std::size_t k = 1 + rng() % 8;
        const std::size_t trigger = rng() % (k + 1);  // 0: no trigger
        Case c;
        for (std::size_t i = 1; i <= k; ++i) {
            const double g = static_cast<double>(static_cast<int>(rng() % 41) - 20) / 4.0;
            c.gammas.push_back(g);
            const double above = g + static_cast<double>(1 + rng() % 8) / 8.0;
            const double at_or_below = rng() % 3 == 0 ? g : g - static_cast<double>(rng() % 16) / 8.0;
            c.scores.push_back(trigger == 0 || i < trigger ? above : (i == trigger ? at_or_below : g - 100.0 + (rng() % 300)));
        }
        c.exit = trigger == 0 ? k : trigger;
        c.decision = trigger == 0 ? Decision::In : Decision::Out;
        cases.push_back(c);
    }
    for (std::size_t n = 0; n < cases.size(); ++n) {
        const auto& c = cases[n];
        const std::size_t k = c.scores.size();
        LogitsRecord r{"g", std::nullopt, {}};
        for (double s : c.scores) r.logits.push_back({s});
        auto profile = testing::make_profile(std::vector<double>(k, 0.0), 0.0, 1, ScoreFunction::adjusted_energy());
        std::vector<double> flops(k);
        std::iota(flops.begin(), flops.end(), 1.0);
        const auto out = greedy_detect(r, profile, c.gammas, ExitCostModel{flops});
        if (out.exit_used != c.exit || out.decision != c.decision || out.charged_flops != flops[c.exit - 1])
            return fail(fmt("case %zu: exit %zu/%s, expected %zu/%s", n, out.exit_used, to_string(out.decision), c.exit,
                            to_string(c.decision)));
    }

    auto profile = testing::make_profile(std::vector<double>(5, 0.25), 0.0, 1, ScoreFunction::adjusted_energy());
    profile.l_max_bits = 1000;
    LogitsRecord r{"b", std::nullopt, {{1.0}, {2.0}, {3.0}, {4.0}, {5.0}}};
    profile.gamma = 3.0 - 0.25;  // bits 500 -> exit 3
    const auto at = mood_detect_bits(r, 500, profile, ExitCostModel::msdnet_default());
    if (at.exit_used != 3 || at.score != profile.gamma || at.decision != Decision::In)
        return fail("mood score == gamma was not accepted at exit 3");
    profile.gamma = std::nextafter(profile.gamma, 10.0);
    if (mood_detect_bits(r, 500, profile, ExitCostModel::msdnet_default()).decision != Decision::Out)
        return fail("mood score just below gamma was accepted");
    return {true, fmt("%zu greedy traces match, score == gamma -> In", cases.size())};
}

Result flops_accounting() {
    const auto costs = ExitCostModel::msdnet_default();
    const std::vector<double> table{0.267e8, 0.516e8, 0.689e8, 0.884e8, 1.051e8};
    if (costs.cumulative_flops != table) return fail("bundled cost vector differs from the reference table");
    auto profile = testing::make_profile(std::vector<double>(5, 0.0), 0.0, 2, ScoreFunction::energy());
    LogitsRecord r{"f", std::nullopt, std::vector<std::vector<double>>(5, {0.5, 1.5})};

    auto run_constant = [&](std::size_t exit, std::size_t n) {
        std::vector<DetectionOutcome> out(n, constant_detect(r, profile, exit, costs));
        return mean_flops(out);
    };
    if (run_constant(5, 1000) != 1.051e8) return fail(fmt("all-exit-5 mean %.17g", run_constant(5, 1000)));
    if (run_constant(1, 1000) != 0.267e8) return fail(fmt("all-exit-1 mean %.17g", run_constant(1, 1000)));

    std::mt19937_64 rng(606);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng() % 5000;
        std::vector<DetectionOutcome> out;
        std::uint64_t total = 0;  // costs are whole numbers, so integer sums are exact
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t e = 1 + rng() % 5;
            out.push_back(constant_detect(r, profile, e, costs));
            total += static_cast<std::uint64_t>(table[e - 1]);
        }
        const double want = static_cast<double>(total) / static_cast<double>(n);
        if (mean_flops(out) != want) return fail(fmt("mixed workload %d: %.17g vs %.17g", t, mean_flops(out), want));
    }

    for (int t = 0; t < 200; ++t) {
        profile.l_max_bits = 1 + rng() % 100000;
        const std::size_t n = 1 + rng() % 500;
        std::vector<DetectionOutcome> out;
        bool early = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t bits = rng() % (t % 3 == 0 ? 2 * profile.l_max_bits : profile.l_max_bits + 1);
            out.push_back(mood_detect_bits(r, bits, profile, costs));
            early |= out.back().exit_used < 5;
        }
        const double mean = mean_flops(out);
        if (mean < table[0] || mean > table[4] || (early && !(mean < table[4])))
            return fail(fmt("mood run %d: mean %.17g outside bounds", t, mean));
    }
    return {true, "constant workloads exact, 200 mixed exact, 200 MOOD runs bounded"};
}

struct Workload {
    testing::TempDir dir{"mood_accept"};
    synthetic::WorkloadPaths paths;
    Workload() { paths = synthetic::write_workload(dir / "data"); }
};

Workload& workload() {
    static Workload w;
    return w;
}

Result cli(const std::string& args, const fs::path& log) {
    if (const int rc = testing::run_cli(args, log); rc != 0) {
        return fail(fmt("`mood %s` exited %d: %s", args.substr(0, args.find(' ')).c_str(), rc, testing::slurp(log).substr(0, 160).c_str()));
    }
    return {};
}

/// infer -> calibrate -> eval into `out` with the given worker count and strategy.
Result pipeline(const fs::path& out, int workers, const std::string& strategy) {
    const auto& p = workload().paths;
    fs::create_directories(out);
    const std::string w = " --workers " + std::to_string(workers);
    const auto log = out / "log.txt";
    for (const std::string& args :
         {"infer --weights " + p.weights.string() + " --images " + p.id_images.string() + " --labels " + p.id_labels.string() +
              " --out " + (out / "id.jsonl").string() + w,
          "infer --weights " + p.weights.string() + " --images " + p.ood_images.string() + " --out " + (out / "noise.jsonl").string() + w,
          "calibrate --id-logits " + (out / "id.jsonl").string() + " --id-images " + p.id_images.string() + " --out " +
              (out / "profile.json").string() + w,
          "complexity --images " + p.ood_images.string() + " --profile " + (out / "profile.json").string() + w,
          "eval --strategy " + strategy + " --profile " + (out / "profile.json").string() + " --costs " + (out / "id.costs.json").string() +
              " --id-logits " + (out / "id.jsonl").string() + " --id-images " + p.id_images.string() + " --ood-logits " +
              (out / "noise.jsonl").string() + " --ood-images " + p.ood_images.string() + " --out " + (out / "eval").string() + w}) {
        if (auto r = cli(args, log); !r.pass) return r;
        if (args.starts_with("complexity")) fs::copy_file(log, out / "complexity.txt", fs::copy_options::overwrite_existing);
    }
    fs::remove(log);
    return {};
}

Result end_to_end() {
    const auto out = workload().dir / "e2e";
    if (auto r = pipeline(out, 4, "mood"); !r.pass) return r;
    const auto report = nlohmann::json::parse(testing::slurp(out / "eval" / "report.json"));
    const auto& row = report.at(0);
    const double au = row.at("auroc"), fpr = row.at("fpr95");
    const auto id_hist = row.at("id_exit_histogram").get<std::vector<std::size_t>>();
    const auto ood_hist = row.at("ood_exit_histogram").get<std::vector<std::size_t>>();
    const double id_n = std::accumulate(id_hist.begin(), id_hist.end(), 0.0);
    const double ood_n = std::accumulate(ood_hist.begin(), ood_hist.end(), 0.0);
    const double id_early = (id_hist.at(0) + id_hist.at(1)) / id_n, ood_last = ood_hist.back() / ood_n;
    std::ostringstream hist;
    for (auto h : id_hist) hist << h << ' ';
    const std::string detail =
        fmt("auroc %.4f, fpr95 %.4f, ID at exits 1-2 %.1f%%, noise at exit k %.1f%%, ID hist [", au, fpr, 100 * id_early, 100 * ood_last) +
        hist.str() + "]";
    if (id_n != 500 || ood_n != 500) return fail("unexpected sample counts; " + detail);
    if (au < 0.99 || fpr > 0.05 || id_early < 0.8 || ood_last < 0.95) return fail(detail);
    return {true, detail};
}

Result codec_sanity() {
    std::mt19937_64 rng(808);
    for (int t = 0; t < 100; ++t) {
        const auto constant = ImageBuffer::filled(32, 32, 3, static_cast<std::uint8_t>(rng() % 256));
        auto gradient = ImageBuffer::filled(32, 32, 3);
        const double sr = std::uniform_real_distribution<double>(0.5, 2.0)(rng), sc = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
        const int base = static_cast<int>(rng() % 60);
        for (std::size_t r = 0; r < 32; ++r)
            for (std::size_t c = 0; c < 32; ++c)
                for (std::size_t ch = 0; ch < 3; ++ch)
                    gradient.at(r, c, ch) = static_cast<std::uint8_t>(base + 20 * static_cast<int>(ch) + std::lround(sr * r + sc * c));
        const auto noise = testing::random_image(rng, 32, 32, 3);
        const auto a = compress_bit_length(constant, CodecId::DeflatePng);
        const auto b = compress_bit_length(gradient, CodecId::DeflatePng);
        const auto c = compress_bit_length(noise, CodecId::DeflatePng);
        if (!(a < b && b < c)) return fail(fmt("trial %d: %llu, %llu, %llu bits", t, (unsigned long long)a, (unsigned long long)b, (unsigned long long)c));
    }
    return {true, "100/100 trials ordered"};
}

Result determinism() {
    const auto base = workload().dir / "det";
    const std::string strategy = "random:20260";
    for (int workers : {1, 8})
        if (auto r = pipeline(base / std::to_string(workers), workers, strategy); !r.pass) return r;
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(base / "1")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), base / "1");
        const auto other = base / "8" / rel;
        if (!fs::exists(other)) return fail("missing " + rel.string() + " with 8 workers");
        if (testing::slurp(entry.path()) != testing::slurp(other)) return fail(rel.string() + " differs between 1 and 8 workers");
        ++compared;
    }
    std::size_t other_count = 0;
    for (const auto& entry : fs::recursive_directory_iterator(base / "8")) other_count += entry.is_regular_file();
    if (other_count != compared) return fail("8-worker run produced extra files");
    if (compared < 8) return fail(fmt("only %zu files compared", compared));
    return {true, fmt("%zu files byte-identical (%s)", compared, strategy.c_str())};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"adjusted-energy zero mean", 1.0, zero_mean},
        {"threshold TPR", 1.0, threshold_tpr},
        {"AUROC oracle equivalence", 5.0, auroc_oracle},
        {"FPR95 oracle equivalence", 0.0, fpr_oracle},
        {"exit-router table", 0.0, exit_router},
        {"algorithm faithfulness", 0.0, greedy_faithful},
        {"FLOPs accounting", 0.0, flops_accounting},
        {"end-to-end synthetic pipeline", 30.0, end_to_end},
        {"codec sanity", 0.0, codec_sanity},
        {"determinism", 0.0, determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Result r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (r.pass && c.budget_s > 0 && secs >= c.budget_s) r = fail(fmt("took %.2f s, budget %.0f s", secs, c.budget_s) + "; " + r.detail);
        failures += !r.pass;
        std::cout << (r.pass ? "PASS " : "FAIL ") << c.name << ": " << r.detail << fmt(" [%.3f s]", secs) << '\n';
    }
    std::cout << (failures ? fmt("%d criteria failed", failures) : std::string("all criteria passed")) << '\n';
    return failures ? 1 : 0;
}
