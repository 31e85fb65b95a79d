#include <gtest/gtest.h>

#include <random>

#include "mood/pipeline.hpp"
#include "test_util.hpp"

namespace mood {
namespace {

using testing::TempDir;

struct SmallSet {
    std::filesystem::path logits;
    std::filesystem::path images;
    std::vector<LogitsRecord> records;
    std::vector<ImageBuffer> pictures;
};

SmallSet write_small_set(const TempDir& dir, const std::string& name, std::size_t n, std::uint64_t seed, std::size_t k = 3,
                         std::size_t c = 4) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 2.0);
    SmallSet s{dir / (name + ".jsonl"), dir / (name + ".moodimg"), {}, {}};
    LogitsWriter w(s.logits, {k, c, "test", n});
    for (std::size_t i = 0; i < n; ++i) {
        LogitsRecord r{std::to_string(i), i % c, std::vector<std::vector<double>>(k, std::vector<double>(c))};
        for (auto& v : r.logits)
            for (auto& x : v) x = g(rng);
        w.write(r);
        s.records.push_back(r);
        s.pictures.push_back(i % 2 ? testing::random_image(rng, 6, 6, 3) : testing::gradient_image(6, 6, 3, static_cast<int>(i % 5)));
    }
    write_image_container(s.images, s.pictures);
    return s;
}

TEST(CalibrateProfile, MatchesLibraryComposition) {
    TempDir dir;
    const auto set = write_small_set(dir, "id", 137, 1);
    CalibrationRequest req{set.logits, set.images};
    const auto profile = calibrate_profile(req);

    EXPECT_EQ(profile.k, 3u);
    EXPECT_EQ(profile.num_classes, 4u);
    EXPECT_EQ(profile.created_from, 137u);
    EXPECT_EQ(profile.l_max_bits, compute_l_max(set.pictures, CodecId::DeflatePng));
    const auto means = calibrate_energy_means(set.records);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(profile.energy_means[i], means[i], 1e-13);

    std::vector<double> routed;
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        const auto exit = select_exit(normalize_complexity(compress_bit_length(set.pictures[i], CodecId::DeflatePng),
                                                           profile.l_max_bits), 3);
        routed.push_back(score(set.records[i], exit, profile));
    }
    EXPECT_EQ(profile.gamma, calibrate_threshold(routed, 0.95));
    const auto accepted = std::count_if(routed.begin(), routed.end(), [&](double s) { return s >= profile.gamma; });
    EXPECT_GE(static_cast<double>(accepted), 0.95 * 137);
}

TEST(CalibrateProfile, OtherScoreFunctions) {
    TempDir dir;
    const auto set = write_small_set(dir, "id", 40, 2);
    for (auto fn : {ScoreFunction::msp(), ScoreFunction::odin(10.0), ScoreFunction::energy()}) {
        CalibrationRequest req{set.logits, set.images};
        req.score_fn = fn;
        const auto p = calibrate_profile(req);
        EXPECT_EQ(p.score_fn, fn);
        std::vector<double> routed;
        for (std::size_t i = 0; i < set.records.size(); ++i) {
            const auto exit = mood_detect(set.records[i], set.pictures[i], p, ExitCostModel{{1, 2, 3}}).exit_used;
            routed.push_back(score(set.records[i], exit, p));
        }
        EXPECT_EQ(p.gamma, calibrate_threshold(routed, 0.95));
    }
}

TEST(CalibrateProfile, WorkerCountDoesNotMatter) {
    TempDir dir;
    const auto set = write_small_set(dir, "id", 3000, 3);
    CalibrationRequest one{set.logits, set.images};
    CalibrationRequest many = one;
    many.workers = 8;
    EXPECT_EQ(calibrate_profile(one), calibrate_profile(many));
}

TEST(CalibrateProfile, PairingErrors) {
    TempDir dir;
    const auto set = write_small_set(dir, "id", 5, 4);
    CalibrationRequest no_images{set.logits, std::nullopt};
    EXPECT_THROW(calibrate_profile(no_images), InputError);

    write_image_container(dir / "fewer.moodimg", std::span<const ImageBuffer>(set.pictures.data(), 4));
    EXPECT_THROW(calibrate_profile({set.logits, dir / "fewer.moodimg"}), SchemaError);

    auto more = set.pictures;
    more.push_back(ImageBuffer::filled(2, 2, 1));
    write_image_container(dir / "more.moodimg", more);
    EXPECT_THROW(calibrate_profile({set.logits, dir / "more.moodimg"}), SchemaError);

    write_image_container(dir / "none.moodimg", std::vector<ImageBuffer>{});
    EXPECT_THROW(calibrate_profile({set.logits, dir / "none.moodimg"}), CalibrationError);
}

TEST(RunStrategy, MatchesPerSampleCalls) {
    TempDir dir;
    const auto id = write_small_set(dir, "id", 60, 5);
    const auto profile = calibrate_profile({id.logits, id.images});
    const ExitCostModel costs{{10, 20, 30}};
    const DatasetInput input{"id", id.logits, id.images};

    const auto mood_run = run_strategy(input, MoodStrategy{}, profile, costs, 0, 3);
    const auto const_run = run_strategy(input, ConstantStrategy{2}, profile, costs, 0, 3);
    const auto rand_run = run_strategy(input, RandomizedStrategy{9}, profile, costs, 100, 3);
    const auto gammas = calibrate_greedy_gammas(id.logits, profile);
    EXPECT_EQ(gammas, calibrate_greedy_gammas(id.records, profile));
    const auto greedy_run = run_strategy(input, GreedyStrategy{gammas}, profile, costs, 0, 3);
    for (std::size_t i = 0; i < id.records.size(); ++i) {
        EXPECT_EQ(mood_run.outcomes[i], mood_detect(id.records[i], id.pictures[i], profile, costs));
        EXPECT_EQ(const_run.outcomes[i], constant_detect(id.records[i], profile, 2, costs));
        auto rng = sample_generator(9, 100 + i);
        EXPECT_EQ(rand_run.outcomes[i], randomized_detect(id.records[i], profile, rng, costs));
        EXPECT_EQ(greedy_run.outcomes[i], greedy_detect(id.records[i], profile, gammas, costs));
        EXPECT_EQ(mood_run.labels[i], id.records[i].label);
    }
}

TEST(RunStrategy, ShapeAndInputErrors) {
    TempDir dir;
    const auto id = write_small_set(dir, "id", 10, 6);
    const auto other = write_small_set(dir, "other", 10, 7, 2, 4);
    const auto profile = calibrate_profile({id.logits, id.images});
    const ExitCostModel costs{{10, 20, 30}};
    EXPECT_THROW(run_strategy({"o", other.logits, std::nullopt}, ConstantStrategy{1}, profile, costs, 0, 1), SchemaError);
    EXPECT_THROW(run_strategy({"i", id.logits, std::nullopt}, MoodStrategy{}, profile, costs, 0, 1), InputError);
    EXPECT_THROW(run_strategy({"i", id.logits, std::nullopt}, ConstantStrategy{4}, profile, costs, 0, 1), InputError);
    EXPECT_THROW(run_strategy({"i", id.logits, std::nullopt}, ConstantStrategy{1}, profile, ExitCostModel{{1, 2}}, 0, 1),
                 InputError);
}

TEST(ParallelFor, PropagatesFailure) {
    EXPECT_THROW(parallel_for(100, 4, [](std::size_t i) {
                     if (i == 37) throw InputError("boom");
                 }),
                 InputError);
    std::vector<int> hit(1000, 0);
    parallel_for(hit.size(), 8, [&](std::size_t i) { hit[i] = 1; });
    EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 1000);
}

}  // namespace
}  // namespace mood
