// mood: command-line front end for calibration, inference and evaluation.
//
// Exit codes: 0 success (detect: sample is in-distribution), 2 detect: sample is
// out-of-distribution, 1 any error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mood/mood.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string id_logits;
    std::string id_images;
    std::vector<std::string> ood_logits;
    std::vector<std::string> ood_images;
    std::string profile;
    std::string costs;
    std::string codec = "png";
    std::string score = "adjusted-energy";
    double temperature = 1000.0;
    double tpr = 0.95;
    std::string strategy = "mood";
    std::uint64_t seed = 0;
    std::string out;
    std::size_t workers = 1;
    std::string weights;
    std::string images;
    std::string logits;
    std::string labels;
    std::string sample;
    std::string model_tag = "exitnet";
    std::string accuracy = "all";
    std::string input;
    std::size_t histogram_bins = 0;
};

std::string full(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string six(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

mood::ExitCostModel load_costs(const Options& o, std::size_t k) {
    auto costs = o.costs.empty() ? mood::ExitCostModel::msdnet_default() : mood::read_cost_model(o.costs);
    if (costs.k() != k)
        throw mood::InputError("cost model has " + std::to_string(costs.k()) + " exits but the profile has k = " +
                               std::to_string(k) + (o.costs.empty() ? " (pass --costs)" : ""));
    return costs;
}

int cmd_calibrate(const Options& o) {
    mood::CalibrationRequest req;
    req.id_logits = o.id_logits;
    if (!o.id_images.empty()) req.id_images = fs::path(o.id_images);
    req.codec = mood::parse_codec(o.codec);
    req.score_fn = mood::parse_score_function(o.score, o.temperature);
    req.target_tpr = o.tpr;
    req.workers = o.workers;
    const auto profile = mood::calibrate_profile(req);
    mood::write_profile(profile, o.out);
    std::cout << "k=" << profile.k << " C=" << profile.num_classes << " N=" << profile.created_from
              << " gamma=" << six(profile.gamma) << " l_max_bits=" << profile.l_max_bits << '\n';
    return 0;
}

std::vector<std::optional<std::size_t>> read_label_file(const std::string& path) {
    std::vector<std::optional<std::size_t>> labels;
    std::ifstream in(path);
    if (!in) throw mood::IoError("cannot open " + path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            std::size_t used = 0;
            const long long v = std::stoll(line, &used);
            if (v < 0) throw std::invalid_argument("negative");
            labels.emplace_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw mood::ParseError("labels file " + path + ": expected a non-negative integer", n);
        }
    }
    return labels;
}

int cmd_infer(const Options& o) {
    const auto weights = mood::load_weights(o.weights);
    std::vector<std::optional<std::size_t>> labels;
    if (!o.labels.empty()) labels = read_label_file(o.labels);

    mood::ImageReader reader(o.images);
    if (!labels.empty() && labels.size() != reader.size())
        throw mood::InputError("labels file has " + std::to_string(labels.size()) + " entries for " +
                               std::to_string(reader.size()) + " images");
    mood::LogitsWriter writer(o.out, {weights.k(), weights.num_classes, o.model_tag, reader.size()});
    std::size_t index = 0;
    for (auto chunk = mood::read_chunk(reader); !chunk.empty(); chunk = mood::read_chunk(reader)) {
        std::vector<mood::LogitsRecord> records(chunk.size());
        mood::parallel_for(chunk.size(), o.workers, [&](std::size_t i) {
            records[i] = mood::forward_all_exits(weights, chunk[i].image, chunk[i].sample_id);
        });
        for (auto& r : records) {
            if (!labels.empty()) r.label = labels[index];
            ++index;
            writer.write(r);
        }
    }
    const fs::path cost_path = o.costs.empty() ? fs::path(o.out).replace_extension(".costs.json") : fs::path(o.costs);
    mood::write_cost_model(mood::analytic_cost_model(weights), cost_path);
    std::cout << "wrote " << index << " records to " << o.out << ", costs to " << cost_path.string() << '\n';
    return 0;
}

int cmd_complexity(const Options& o) {
    const auto codec = mood::parse_codec(o.codec);
    const auto entries = mood::measure_complexity(o.images, codec, o.workers);
    if (entries.empty()) throw mood::InputError("no images found in " + o.images);
    std::optional<mood::CalibrationProfile> profile;
    if (!o.profile.empty()) profile = mood::read_profile(o.profile);

    for (const auto& e : entries) {
        std::cout << e.sample_id << ' ' << e.bits;
        if (profile) {
            const double n = mood::normalize_complexity(e.bits, profile->l_max_bits);
            std::cout << ' ' << six(n) << ' ' << mood::select_exit(n, profile->k);
        }
        std::cout << '\n';
    }
    if (o.histogram_bins > 0) {
        std::uint64_t lo = entries.front().bits, hi = lo;
        for (const auto& e : entries) {
            lo = std::min(lo, e.bits);
            hi = std::max(hi, e.bits);
        }
        std::vector<std::size_t> counts(o.histogram_bins, 0);
        const double width = static_cast<double>(hi - lo + 1) / static_cast<double>(o.histogram_bins);
        for (const auto& e : entries) {
            auto b = static_cast<std::size_t>(static_cast<double>(e.bits - lo) / width);
            ++counts[std::min(b, o.histogram_bins - 1)];
        }
        const std::size_t peak = *std::max_element(counts.begin(), counts.end());
        for (std::size_t b = 0; b < counts.size(); ++b) {
            const auto from = static_cast<std::uint64_t>(static_cast<double>(lo) + width * static_cast<double>(b));
            std::cout << std::setw(10) << from << " | " << std::string(peak ? counts[b] * 50 / peak : 0, '#') << ' '
                      << counts[b] << '\n';
        }
    }
    return 0;
}

int cmd_detect(const Options& o) {
    const auto profile = mood::read_profile(o.profile);
    const auto costs = load_costs(o, profile.k);

    mood::LogitsReader logits(o.logits);
    std::optional<mood::LogitsRecord> record;
    while (auto r = logits.next()) {
        if (o.sample.empty() || r->sample_id == o.sample) {
            record = std::move(r);
            break;
        }
    }
    if (!record) throw mood::InputError("no logits record" + (o.sample.empty() ? std::string() : " with id '" + o.sample + "'"));

    mood::ImageReader images(o.images);
    std::optional<mood::ImageBuffer> image;
    const std::string want = o.sample.empty() ? std::string() : o.sample;
    while (auto img = images.next()) {
        if (want.empty() || img->sample_id == want) {
            image = std::move(img->image);
            break;
        }
    }
    if (!image) throw mood::InputError("no image" + (want.empty() ? std::string() : " with id '" + want + "'"));

    const auto outcome = mood::mood_detect(*record, *image, profile, costs);
    std::cout << "decision=" << mood::to_string(outcome.decision) << " exit=" << outcome.exit_used
              << " score=" << full(outcome.score) << " pred="
              << (outcome.predicted_class ? std::to_string(*outcome.predicted_class) : std::string("none"))
              << " flops=" << full(outcome.charged_flops) << '\n';
    return outcome.decision == mood::Decision::In ? 0 : 2;
}

int cmd_eval(const Options& o) {
    const auto profile = mood::read_profile(o.profile);
    const auto costs = load_costs(o, profile.k);
    auto strategy = mood::parse_strategy(o.strategy == "random" ? "random:" + std::to_string(o.seed) : o.strategy);
    if (auto* g = std::get_if<mood::GreedyStrategy>(&strategy)) g->per_exit_gammas = mood::calibrate_greedy_gammas(o.id_logits, profile);

    if (o.ood_logits.empty()) throw mood::InputError("eval needs at least one --ood-logits");
    if (!o.ood_images.empty() && o.ood_images.size() != o.ood_logits.size())
        throw mood::InputError("--ood-images must be given once per --ood-logits");

    const fs::path out_dir = o.out;
    fs::create_directories(out_dir);

    mood::ReportOptions ropts;
    ropts.target_tpr = profile.target_tpr;
    if (o.accuracy == "accepted")
        ropts.accuracy = mood::AccuracyMode::AcceptedOnly;
    else if (o.accuracy != "all")
        throw mood::InputError("--accuracy must be 'all' or 'accepted'");

    const std::string name = mood::strategy_name(strategy);
    mood::DatasetInput id_input{"id", o.id_logits, o.id_images.empty() ? std::nullopt : std::optional<fs::path>(o.id_images)};
    std::ofstream id_sink(out_dir / "outcomes_id.jsonl");
    auto id_result = mood::run_strategy(id_input, strategy, profile, costs, 0, o.workers, &id_sink);
    std::uint64_t ordinal = id_result.outcomes.size();

    const bool labelled = std::all_of(id_result.labels.begin(), id_result.labels.end(), [](const auto& l) { return l.has_value(); });
    std::map<std::string, int> used_names{{"id", 1}};  // outcomes_id.jsonl is taken by the ID set
    std::vector<mood::EvalReport> rows;
    for (std::size_t d = 0; d < o.ood_logits.size(); ++d) {
        std::string dataset = fs::path(o.ood_logits[d]).stem().string();
        if (const int n = used_names[dataset]++; n > 0) dataset += "_" + std::to_string(n + 1);
        mood::DatasetInput input{dataset, o.ood_logits[d],
                                 o.ood_images.empty() ? std::nullopt : std::optional<fs::path>(o.ood_images[d])};
        std::ofstream sink(out_dir / ("outcomes_" + dataset + ".jsonl"));
        auto result = mood::run_strategy(input, strategy, profile, costs, ordinal, o.workers, &sink);
        ordinal += result.outcomes.size();
        if (labelled) {
            rows.push_back(mood::build_report(name, dataset, id_result.outcomes, result.outcomes, id_result.labels, profile.k, ropts));
        } else {
            // Unlabelled ID data: accuracy is undefined, everything else still reported.
            std::vector<std::optional<std::size_t>> dummy(id_result.outcomes.size(), std::size_t{0});
            rows.push_back(mood::build_report(name, dataset, id_result.outcomes, result.outcomes, dummy, profile.k, ropts));
            rows.back().id_accuracy = std::nan("");
        }
    }
    if (rows.size() > 1) rows.push_back(mood::average_report(rows));

    {
        std::ofstream csv(out_dir / "report.csv");
        mood::write_report_csv(rows, csv);
        std::ofstream txt(out_dir / "report.txt");
        mood::write_report_table(rows, txt);
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json row{{"strategy", r.strategy},   {"dataset", r.dataset},
                               {"auroc", r.auroc},         {"fpr95", r.fpr_at_tpr},
                               {"mean_flops", r.mean_flops}, {"exit_histogram", r.exit_histogram},
                               {"id_exit_histogram", r.id_exit_histogram},
                               {"ood_exit_histogram", r.ood_exit_histogram},
                               {"id_count", r.id_count},   {"ood_count", r.ood_count}};
            row["id_acc"] = std::isnan(r.id_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(r.id_accuracy);
            j.push_back(std::move(row));
        }
        std::ofstream js(out_dir / "report.json");
        js << j.dump(2) << '\n';
    }
    mood::write_report_table(rows, std::cout);
    return 0;
}

int cmd_report(const Options& o) {
    std::ifstream in(o.input);
    if (!in) throw mood::IoError("cannot open " + o.input);
    std::vector<std::vector<std::string>> table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        table.push_back(std::move(cells));
    }
    if (table.empty()) throw mood::InputError("report " + o.input + " is empty");
    mood::write_aligned_table(table, std::cout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-level out-of-distribution detection"};
    app.require_subcommand(1);
    Options o;

    auto add_workers = [&](CLI::App* c) {
        c->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    };
    auto add_codec = [&](CLI::App* c) {
        c->add_option("--codec", o.codec, "Complexity codec")->check(CLI::IsMember({"png", "jpeg2000"}));
    };

    auto* calibrate = app.add_subcommand("calibrate", "Calibrate a profile on ID logits and images");
    calibrate->add_option("--id-logits", o.id_logits)->required();
    calibrate->add_option("--id-images", o.id_images)->required();
    add_codec(calibrate);
    calibrate->add_option("--score", o.score)->check(CLI::IsMember({"msp", "odin", "energy", "adjusted-energy"}));
    calibrate->add_option("--temperature", o.temperature, "ODIN temperature");
    calibrate->add_option("--tpr", o.tpr, "Target ID true positive rate");
    calibrate->add_option("--out", o.out, "Profile output path")->required();
    add_workers(calibrate);

    auto* infer = app.add_subcommand("infer", "Run the built-in exit net over images");
    infer->add_option("--weights", o.weights)->required();
    infer->add_option("--images", o.images)->required();
    infer->add_option("--labels", o.labels, "Text file, one class index per image");
    infer->add_option("--model-tag", o.model_tag);
    infer->add_option("--out", o.out, "Logits output path")->required();
    infer->add_option("--costs", o.costs, "Cost model output path (default <out>.costs.json)");
    add_workers(infer);

    auto* complexity = app.add_subcommand("complexity", "Print per-image complexity");
    complexity->add_option("--images", o.images)->required();
    add_codec(complexity);
    complexity->add_option("--profile", o.profile, "Also print normalized value and routed exit");
    complexity->add_option("--histogram", o.histogram_bins, "Print a text histogram with N bins");
    add_workers(complexity);

    auto* detect = app.add_subcommand("detect", "Classify one sample (exit 0 = in, 2 = out)");
    detect->add_option("--profile", o.profile)->required();
    detect->add_option("--costs", o.costs);
    detect->add_option("--logits", o.logits)->required();
    detect->add_option("--images", o.images, "PNG file directory or MOODIMG1 container")->required();
    detect->add_option("--sample", o.sample, "Sample id (default: first record)");

    auto* eval = app.add_subcommand("eval", "Evaluate an exit strategy on ID and OOD sets");
    eval->add_option("--profile", o.profile)->required();
    eval->add_option("--costs", o.costs);
    eval->add_option("--id-logits", o.id_logits)->required();
    eval->add_option("--id-images", o.id_images);
    eval->add_option("--ood-logits", o.ood_logits)->required();
    eval->add_option("--ood-images", o.ood_images);
    eval->add_option("--strategy", o.strategy, "mood | greedy | random[:<seed>] | constant:<exit>");
    eval->add_option("--seed", o.seed, "Seed for --strategy random");
    eval->add_option("--accuracy", o.accuracy, "ID accuracy over 'all' ID samples or 'accepted' only");
    eval->add_option("--out", o.out, "Output directory")->required();
    add_workers(eval);

    auto* report = app.add_subcommand("report", "Print a report CSV as an aligned table");
    report->add_option("--in", o.input)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*calibrate) return cmd_calibrate(o);
        if (*infer) return cmd_infer(o);
        if (*complexity) return cmd_complexity(o);
        if (*detect) return cmd_detect(o);
        if (*eval) return cmd_eval(o);
        if (*report) return cmd_report(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
