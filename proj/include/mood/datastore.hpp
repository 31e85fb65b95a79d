#pragma once

// Readers and writers for every on-disk artifact.
//
//   logits      JSON lines; header {"k","num_classes","model_tag"[,"sample_count"]},
//               then {"id","label"|null,"logits":[[C floats] x k]} per sample
//   images      MOODIMG1 container, or a directory of *.png files
//   profile     one JSON object (see write_profile)
//   costs       {"k","cumulative_flops":[...]}
//   outcomes    JSON lines {"id","decision","exit","score","pred","flops"}
//
// Readers stream: they hold one record at a time.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mood/binary_io.hpp"
#include "mood/complexity.hpp"
#include "mood/cost_model.hpp"
#include "mood/detector.hpp"
#include "mood/error.hpp"
#include "mood/image.hpp"
#include "mood/png_codec.hpp"
#include "mood/scoring.hpp"

namespace mood {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

inline const json& field(const json& obj, const char* name, std::size_t line = 0) {
    auto it = obj.find(name);
    if (it == obj.end()) throw SchemaError(std::string("missing field \"") + name + "\"", line);
    return *it;
}

inline std::uint64_t as_count(const json& v, const char* name, std::size_t line = 0) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw SchemaError(std::string("field \"") + name + "\" must be a non-negative integer", line);
    return v.get<std::uint64_t>();
}

inline double as_real(const json& v, const char* name, std::size_t line = 0) {
    if (!v.is_number()) throw SchemaError(std::string("field \"") + name + "\" must be a number", line);
    return v.get<double>();
}

inline std::vector<double> as_reals(const json& v, const char* name, std::size_t line = 0) {
    if (!v.is_array()) throw SchemaError(std::string("field \"") + name + "\" must be an array", line);
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) out.push_back(as_real(x, name, line));
    return out;
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& what) {
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw SchemaError(what + ": unexpected field \"" + key + "\"");
    }
}

inline json parse_document(const fs::path& path, const std::string& what) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(what + " " + path.string() + ": " + e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Logits

struct LogitsFileHeader {
    std::size_t k = 0;
    std::size_t num_classes = 0;
    std::string model_tag;
    std::optional<std::size_t> sample_count;

    friend bool operator==(const LogitsFileHeader&, const LogitsFileHeader&) = default;
};

inline json to_json(const LogitsFileHeader& h) {
    json j{{"k", h.k}, {"num_classes", h.num_classes}, {"model_tag", h.model_tag}};
    if (h.sample_count) j["sample_count"] = *h.sample_count;
    return j;
}

inline json to_json(const LogitsRecord& r) {
    json j{{"id", r.sample_id}, {"label", nullptr}, {"logits", r.logits}};
    if (r.label) j["label"] = *r.label;
    return j;
}

/// Streaming reader over a logits JSON-lines file.
class LogitsReader {
public:
    explicit LogitsReader(const fs::path& path) : path_(path), in_(detail::open_in(path)) { read_header(); }

    const LogitsFileHeader& header() const noexcept { return header_; }

    /// Next record in file order, or nullopt at end of file.
    std::optional<LogitsRecord> next() {
        std::string text;
        while (std::getline(in_, text)) {
            ++line_;
            if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto rec = parse_record(text);
            ++yielded_;
            return rec;
        }
        if (header_.sample_count && *header_.sample_count != yielded_)
            throw SchemaError("header declares " + std::to_string(*header_.sample_count) + " samples, file holds " +
                              std::to_string(yielded_));
        return std::nullopt;
    }

    std::size_t line() const noexcept { return line_; }

private:
    void read_header() {
        std::string text;
        if (!std::getline(in_, text) || text.find_first_not_of(" \t\r") == std::string::npos)
            throw HeaderError("logits file " + path_.string() + " has no header line", 1);
        line_ = 1;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw HeaderError(std::string("malformed header: ") + e.what(), 1);
        }
        if (!j.is_object()) throw HeaderError("header must be a JSON object", 1);
        try {
            header_.k = detail::as_count(detail::field(j, "k", 1), "k", 1);
            header_.num_classes = detail::as_count(detail::field(j, "num_classes", 1), "num_classes", 1);
            const auto& tag = detail::field(j, "model_tag", 1);
            if (!tag.is_string()) throw SchemaError("field \"model_tag\" must be a string", 1);
            header_.model_tag = tag.get<std::string>();
            if (auto it = j.find("sample_count"); it != j.end() && !it->is_null())
                header_.sample_count = detail::as_count(*it, "sample_count", 1);
        } catch (const HeaderError&) {
            throw;
        } catch (const SchemaError& e) {
            throw HeaderError(e.what());
        }
        if (header_.k == 0 || header_.num_classes == 0) throw HeaderError("header k and num_classes must be >= 1", 1);
    }

    LogitsRecord parse_record(const std::string& text) {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), line_);
        }
        if (!j.is_object()) throw ParseError("record must be a JSON object", line_);
        LogitsRecord r;
        const auto& id = detail::field(j, "id", line_);
        if (!id.is_string()) throw SchemaError("field \"id\" must be a string", line_);
        r.sample_id = id.get<std::string>();
        if (auto it = j.find("label"); it != j.end() && !it->is_null())
            r.label = detail::as_count(*it, "label", line_);
        const auto& logits = detail::field(j, "logits", line_);
        if (!logits.is_array()) throw SchemaError("field \"logits\" must be an array of arrays", line_);
        for (const auto& row : logits) r.logits.push_back(detail::as_reals(row, "logits", line_));
        try {
            r.validate(header_.k, header_.num_classes);
        } catch (const SchemaError& e) {
            throw SchemaError(e.what(), line_);
        }
        return r;
    }

    fs::path path_;
    std::ifstream in_;
    LogitsFileHeader header_;
    std::size_t line_ = 0;
    std::size_t yielded_ = 0;
};

class LogitsWriter {
public:
    LogitsWriter(const fs::path& path, LogitsFileHeader header) : header_(std::move(header)), out_(detail::open_out(path)) {
        out_ << to_json(header_).dump() << '\n';
    }

    void write(const LogitsRecord& r) {
        r.validate(header_.k, header_.num_classes);
        out_ << to_json(r).dump() << '\n';
        if (!out_) throw IoError("write failed");
    }

private:
    LogitsFileHeader header_;
    std::ofstream out_;
};

/// Reads a whole logits file. Convenience for small sets; pipelines use LogitsReader.
inline std::pair<LogitsFileHeader, std::vector<LogitsRecord>> read_logits(const fs::path& path) {
    LogitsReader reader(path);
    std::vector<LogitsRecord> records;
    while (auto r = reader.next()) records.push_back(std::move(*r));
    return {reader.header(), std::move(records)};
}

// ---------------------------------------------------------------------------
// Images

struct NamedImage {
    std::string sample_id;
    ImageBuffer image;
};

/// Writes the MOODIMG1 container: magic, u32 count, then (u16 h, u16 w, u8 c, pixels) per image.
class ImageContainerWriter {
public:
    ImageContainerWriter(const fs::path& path, std::uint32_t count)
        : path_(path), out_(detail::open_out(path, std::ios::binary)), count_(count) {
        out_.write("MOODIMG1", 8);
        bin::write_le(out_, count);
    }

    ~ImageContainerWriter() = default;

    void write(const ImageBuffer& img) {
        img.validate();
        if (written_ == count_) throw InputError("container already holds its declared image count");
        bin::write_le(out_, img.height);
        bin::write_le(out_, img.width);
        bin::write_le(out_, img.channels);
        out_.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
        if (!out_) throw IoError("failed writing " + path_.string());
        ++written_;
    }

    /// Flushes and checks that exactly the declared number of images was written.
    void close() {
        if (written_ != count_)
            throw InputError("container declared " + std::to_string(count_) + " images, wrote " + std::to_string(written_));
        out_.close();
    }

private:
    fs::path path_;
    std::ofstream out_;
    std::uint32_t count_;
    std::uint32_t written_ = 0;
};

inline void write_image_container(const fs::path& path, std::span<const ImageBuffer> images) {
    ImageContainerWriter w(path, static_cast<std::uint32_t>(images.size()));
    for (const auto& img : images) w.write(img);
    w.close();
}

/// Streams images from a MOODIMG1 container (ids "0", "1", ...) or a PNG directory
/// (ids are file stems, lexicographic order).
class ImageReader {
public:
    explicit ImageReader(const fs::path& path) : path_(path) {
        if (fs::is_directory(path)) {
            for (const auto& entry : fs::directory_iterator(path)) {
                if (!entry.is_regular_file()) continue;
                auto ext = entry.path().extension().string();
                std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
                if (ext == ".png") files_.push_back(entry.path());
            }
            std::sort(files_.begin(), files_.end(),
                      [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
            directory_ = true;
            return;
        }
        in_ = detail::open_in(path, std::ios::binary);
        bin::expect_magic(in_, "MOODIMG1", "image container " + path.string());
        count_ = bin::read_le<std::uint32_t>(in_, "image count");
    }

    bool is_directory() const noexcept { return directory_; }

    /// Number of images the source will yield.
    std::size_t size() const noexcept { return directory_ ? files_.size() : count_; }

    std::optional<NamedImage> next() {
        if (index_ >= size()) {
            if (!directory_ && in_.peek() != std::char_traits<char>::eof())
                throw SchemaError("image container " + path_.string() + " has trailing bytes after " +
                                  std::to_string(count_) + " images");
            return std::nullopt;
        }
        const std::size_t i = index_++;
        if (directory_) return NamedImage{files_[i].stem().string(), png::decode_file(files_[i])};

        const std::string what = "image " + std::to_string(i) + " of " + path_.string();
        ImageBuffer img;
        img.height = bin::read_le<std::uint16_t>(in_, what);
        img.width = bin::read_le<std::uint16_t>(in_, what);
        img.channels = bin::read_le<std::uint8_t>(in_, what);
        if (img.height == 0 || img.width == 0 || (img.channels != 1 && img.channels != 3))
            throw SchemaError(what + ": invalid shape " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                              "x" + std::to_string(img.channels));
        img.pixels.resize(img.size());
        bin::read_exact(in_, img.pixels.data(), img.pixels.size(), what);
        return NamedImage{std::to_string(i), std::move(img)};
    }

private:
    fs::path path_;
    bool directory_ = false;
    std::vector<fs::path> files_;
    std::ifstream in_;
    std::uint32_t count_ = 0;
    std::size_t index_ = 0;
};

inline std::vector<NamedImage> read_images(const fs::path& path) {
    ImageReader reader(path);
    std::vector<NamedImage> out;
    while (auto img = reader.next()) out.push_back(std::move(*img));
    return out;
}

// ---------------------------------------------------------------------------
// Calibration profile

inline json to_json(const ScoreFunction& s) {
    json j{{"name", std::string(to_string(s.kind))}};
    if (s.kind == ScoreFunction::Kind::OdinT) j["temperature"] = s.temperature;
    return j;
}

inline json to_json(const CalibrationProfile& p) {
    return json{{"k", p.k},
                {"num_classes", p.num_classes},
                {"energy_means", p.energy_means},
                {"l_max_bits", p.l_max_bits},
                {"gamma", p.gamma},
                {"codec", std::string(to_string(p.codec))},
                {"score_fn", to_json(p.score_fn)},
                {"target_tpr", p.target_tpr},
                {"created_from", p.created_from}};
}

inline CalibrationProfile profile_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("profile must be a JSON object");
    detail::reject_unknown(j, {"k", "num_classes", "energy_means", "l_max_bits", "gamma", "codec", "score_fn", "target_tpr",
                               "created_from"},
                           "profile");
    CalibrationProfile p;
    p.k = detail::as_count(detail::field(j, "k"), "k");
    p.num_classes = detail::as_count(detail::field(j, "num_classes"), "num_classes");
    p.energy_means = detail::as_reals(detail::field(j, "energy_means"), "energy_means");
    p.l_max_bits = detail::as_count(detail::field(j, "l_max_bits"), "l_max_bits");
    p.gamma = detail::as_real(detail::field(j, "gamma"), "gamma");
    const auto& codec = detail::field(j, "codec");
    if (!codec.is_string()) throw SchemaError("field \"codec\" must be a string");
    const auto& sf = detail::field(j, "score_fn");
    if (!sf.is_object()) throw SchemaError("field \"score_fn\" must be an object");
    detail::reject_unknown(sf, {"name", "temperature"}, "score_fn");
    const auto& name = detail::field(sf, "name");
    if (!name.is_string()) throw SchemaError("score_fn.name must be a string");
    try {
        p.codec = parse_codec(codec.get<std::string>());
        const auto n = name.get<std::string>();
        if (n == "odin") {
            p.score_fn = ScoreFunction::odin(detail::as_real(detail::field(sf, "temperature"), "temperature"));
        } else {
            if (sf.contains("temperature")) throw SchemaError("score_fn.temperature is only valid for odin");
            p.score_fn = parse_score_function(n);
        }
    } catch (const InputError& e) {
        throw SchemaError(std::string("profile: ") + e.what());
    }
    p.target_tpr = detail::as_real(detail::field(j, "target_tpr"), "target_tpr");
    p.created_from = detail::as_count(detail::field(j, "created_from"), "created_from");
    p.validate();
    if (p.l_max_bits == 0) throw SchemaError("profile l_max_bits must be positive");
    return p;
}

inline void write_profile(const CalibrationProfile& p, const fs::path& path) {
    p.validate();
    auto out = detail::open_out(path);
    out << to_json(p).dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

inline CalibrationProfile read_profile(const fs::path& path) {
    return profile_from_json(detail::parse_document(path, "profile"));
}

// ---------------------------------------------------------------------------
// Cost model

inline json to_json(const ExitCostModel& c) { return json{{"k", c.k()}, {"cumulative_flops", c.cumulative_flops}}; }

inline ExitCostModel cost_model_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("cost model must be a JSON object");
    detail::reject_unknown(j, {"k", "cumulative_flops"}, "cost model");
    const auto k = detail::as_count(detail::field(j, "k"), "k");
    ExitCostModel c{detail::as_reals(detail::field(j, "cumulative_flops"), "cumulative_flops")};
    if (c.k() != k) throw SchemaError("cost model k disagrees with cumulative_flops length");
    c.validate();
    return c;
}

inline void write_cost_model(const ExitCostModel& c, const fs::path& path) {
    c.validate();
    auto out = detail::open_out(path);
    out << to_json(c).dump() << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

inline ExitCostModel read_cost_model(const fs::path& path) {
    return cost_model_from_json(detail::parse_document(path, "cost model"));
}

// ---------------------------------------------------------------------------
// Outcomes

inline json to_json(const DetectionOutcome& o) {
    json j{{"id", o.sample_id},
           {"decision", to_string(o.decision)},
           {"exit", o.exit_used},
           {"score", o.score},
           {"pred", nullptr},
           {"flops", o.charged_flops}};
    if (o.predicted_class) j["pred"] = *o.predicted_class;
    return j;
}

inline DetectionOutcome outcome_from_json(const json& j, std::size_t line = 0) {
    if (!j.is_object()) throw ParseError("outcome must be a JSON object", line);
    DetectionOutcome o;
    const auto& id = detail::field(j, "id", line);
    if (!id.is_string()) throw SchemaError("outcome id must be a string", line);
    o.sample_id = id.get<std::string>();
    const auto& d = detail::field(j, "decision", line);
    if (d == "in")
        o.decision = Decision::In;
    else if (d == "out")
        o.decision = Decision::Out;
    else
        throw SchemaError("outcome decision must be \"in\" or \"out\"", line);
    o.exit_used = detail::as_count(detail::field(j, "exit", line), "exit", line);
    o.score = detail::as_real(detail::field(j, "score", line), "score", line);
    if (const auto& p = detail::field(j, "pred", line); !p.is_null()) o.predicted_class = detail::as_count(p, "pred", line);
    o.charged_flops = detail::as_real(detail::field(j, "flops", line), "flops", line);
    return o;
}

inline void write_outcome_line(const DetectionOutcome& o, std::ostream& out) { out << to_json(o).dump() << '\n'; }

inline std::vector<DetectionOutcome> read_outcomes(const fs::path& path) {
    auto in = detail::open_in(path);
    std::vector<DetectionOutcome> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(e.what(), line);
        }
        out.push_back(outcome_from_json(j, line));
    }
    return out;
}

}  // namespace mood
