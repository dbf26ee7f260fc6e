#include "idan/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "idan/errors.hpp"

namespace idan::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void bad(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

int to_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) bad("trailing characters in " + key + " = " + v);
        return r;
    } catch (const std::invalid_argument&) {
        bad("expected integer for " + key + ", got '" + v + "'");
    } catch (const std::out_of_range&) {
        bad("integer out of range for " + key + ": " + v);
    }
}

float to_float(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const float r = std::stof(v, &pos);
        if (pos != v.size()) bad("trailing characters in " + key + " = " + v);
        return r;
    } catch (const std::invalid_argument&) {
        bad("expected number for " + key + ", got '" + v + "'");
    } catch (const std::out_of_range&) {
        bad("number out of range for " + key + ": " + v);
    }
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
    std::uint64_t r = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), r);
    if (ec != std::errc() || p != v.data() + v.size())
        bad("expected unsigned integer for " + key + ", got '" + v + "'");
    return r;
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad("expected true/false for " + key + ", got '" + v + "'");
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

diffmap::EdgeOp parse_edge_op(const std::string& name) {
    if (name == "canny") return diffmap::EdgeOp::canny;
    if (name == "sobel") return diffmap::EdgeOp::sobel;
    if (name == "prewitt") return diffmap::EdgeOp::prewitt;
    bad("unknown edge operator '" + name + "' (expected canny|sobel|prewitt)");
}

std::string edge_op_name(diffmap::EdgeOp op) {
    switch (op) {
        case diffmap::EdgeOp::canny: return "canny";
        case diffmap::EdgeOp::sobel: return "sobel";
        case diffmap::EdgeOp::prewitt: return "prewitt";
    }
    return "canny";
}

void apply_extractor_spec(training::PipelineConfig& pc, const std::string& spec) {
    if (spec.rfind("random:", 0) == 0) {
        const std::string rest = spec.substr(7);
        const auto colon = rest.find(':');
        if (colon == std::string::npos)
            bad("extractor spec '" + spec + "' should be random:<seed>:<channels>");
        pc.use_feature_file = false;
        pc.extractor_seed = to_u64(rest.substr(0, colon), "extractor seed");
        pc.feature_channels = to_int(rest.substr(colon + 1), "extractor channels");
        return;
    }
    if (spec.rfind("file:", 0) == 0) {
        pc.use_feature_file = true;
        pc.feature_file = spec.substr(5);
        if (pc.feature_file.empty()) bad("extractor spec 'file:' needs a path");
        return;
    }
    bad("unknown extractor spec '" + spec + "' (expected random:<seed>:<c_p> or file:<path>)");
}

std::string extractor_spec(const training::PipelineConfig& pc) {
    if (pc.use_feature_file) return "file:" + pc.feature_file;
    return "random:" + std::to_string(pc.extractor_seed) + ":" +
           std::to_string(pc.feature_channels);
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') bad("line " + std::to_string(lineno) + ": malformed section");
            section = line.substr(1, line.size() - 2);
            if (section != "run" && section != "model" && section != "train" &&
                section != "diffmap" && section != "tile" && section != "augment")
                bad("unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            bad("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (qual == "run.seed") cfg.seed = to_u64(value, qual);
        else if (qual == "model.base_channels") cfg.model.base_channels = to_int(value, qual);
        else if (qual == "model.depth") cfg.model.depth = to_int(value, qual);
        else if (qual == "model.head_channels") cfg.model.head_channels = to_int(value, qual);
        else if (qual == "model.with_modules") cfg.with_modules = to_bool(value, qual);
        else if (qual == "train.epochs") cfg.train.epochs = to_int(value, qual);
        else if (qual == "train.batch_size") cfg.train.batch_size = to_int(value, qual);
        else if (qual == "train.learning_rate") cfg.train.learning_rate = to_float(value, qual);
        else if (qual == "train.optimizer") {
            if (value == "sgd") cfg.train.optimizer = OptKind::sgd;
            else if (value == "adam") cfg.train.optimizer = OptKind::adam;
            else bad("train.optimizer must be sgd or adam, got '" + value + "'");
        }
        else if (qual == "train.seed") cfg.train.seed = to_u64(value, qual);
        else if (qual == "train.threshold") cfg.train.threshold = to_float(value, qual);
        else if (qual == "diffmap.edge") cfg.pipeline.edge.op = parse_edge_op(value);
        else if (qual == "diffmap.canny_sigma") cfg.pipeline.edge.canny_sigma = to_float(value, qual);
        else if (qual == "diffmap.canny_low") cfg.pipeline.edge.canny_low = to_float(value, qual);
        else if (qual == "diffmap.canny_high") cfg.pipeline.edge.canny_high = to_float(value, qual);
        else if (qual == "diffmap.magnitude_threshold")
            cfg.pipeline.edge.magnitude_threshold = to_float(value, qual);
        else if (qual == "diffmap.extractor") apply_extractor_spec(cfg.pipeline, value);
        else if (qual == "diffmap.kernel") cfg.pipeline.kernel_side = to_int(value, qual);
        else if (qual == "tile.window") cfg.tile.window = to_int(value, qual);
        else if (qual == "tile.stride") cfg.tile.stride = to_int(value, qual);
        else if (qual == "tile.test_every") cfg.tile.test_every_k = to_int(value, qual);
        else if (qual == "augment.pad_to") cfg.augment.pad_to = to_int(value, qual);
        else if (qual == "augment.crop_min") cfg.augment.crop_min = to_float(value, qual);
        else if (qual == "augment.crop_max") cfg.augment.crop_max = to_float(value, qual);
        else if (qual == "augment.output_size") cfg.augment.output_size = to_int(value, qual);
        else if (qual == "augment.rotation") cfg.augment.rotation_deg = to_float(value, qual);
        else if (qual == "augment.illum_min") cfg.augment.illum_min = to_float(value, qual);
        else if (qual == "augment.illum_max") cfg.augment.illum_max = to_float(value, qual);
        else bad("unknown key '" + key + "' in section [" + section + "]");
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[run]\n";
    out << "seed = " << cfg.seed << "\n\n";
    out << "[model]\n";
    out << "base_channels = " << cfg.model.base_channels << '\n';
    out << "depth = " << cfg.model.depth << '\n';
    out << "head_channels = " << cfg.model.head_channels << '\n';
    out << "with_modules = " << (cfg.with_modules ? "true" : "false") << "\n\n";
    out << "[train]\n";
    out << "epochs = " << cfg.train.epochs << '\n';
    out << "batch_size = " << cfg.train.batch_size << '\n';
    out << "learning_rate = " << fmt_float(cfg.train.learning_rate) << '\n';
    out << "optimizer = " << (cfg.train.optimizer == OptKind::adam ? "adam" : "sgd") << '\n';
    out << "seed = " << cfg.train.seed << '\n';
    out << "threshold = " << fmt_float(cfg.train.threshold) << "\n\n";
    out << "[diffmap]\n";
    out << "edge = " << edge_op_name(cfg.pipeline.edge.op) << '\n';
    out << "canny_sigma = " << fmt_float(cfg.pipeline.edge.canny_sigma) << '\n';
    out << "canny_low = " << fmt_float(cfg.pipeline.edge.canny_low) << '\n';
    out << "canny_high = " << fmt_float(cfg.pipeline.edge.canny_high) << '\n';
    out << "magnitude_threshold = " << fmt_float(cfg.pipeline.edge.magnitude_threshold) << '\n';
    out << "extractor = " << extractor_spec(cfg.pipeline) << '\n';
    out << "kernel = " << cfg.pipeline.kernel_side << "\n\n";
    out << "[tile]\n";
    out << "window = " << cfg.tile.window << '\n';
    out << "stride = " << cfg.tile.stride << '\n';
    out << "test_every = " << cfg.tile.test_every_k << "\n\n";
    out << "[augment]\n";
    out << "pad_to = " << cfg.augment.pad_to << '\n';
    out << "crop_min = " << fmt_float(cfg.augment.crop_min) << '\n';
    out << "crop_max = " << fmt_float(cfg.augment.crop_max) << '\n';
    out << "output_size = " << cfg.augment.output_size << '\n';
    out << "rotation = " << fmt_float(cfg.augment.rotation_deg) << '\n';
    out << "illum_min = " << fmt_float(cfg.augment.illum_min) << '\n';
    out << "illum_max = " << fmt_float(cfg.augment.illum_max) << '\n';
    return out.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) {
    const auto& pa = a.pipeline;
    const auto& pb = b.pipeline;
    return a.seed == b.seed && a.with_modules == b.with_modules &&
           a.model.in_channels == b.model.in_channels &&
           a.model.base_channels == b.model.base_channels && a.model.depth == b.model.depth &&
           a.model.head_channels == b.model.head_channels && a.train.epochs == b.train.epochs &&
           a.train.batch_size == b.train.batch_size &&
           a.train.learning_rate == b.train.learning_rate &&
           a.train.optimizer == b.train.optimizer && a.train.seed == b.train.seed &&
           a.train.threshold == b.train.threshold &&
           a.train.checkpoint_path == b.train.checkpoint_path && pa.edge.op == pb.edge.op &&
           pa.edge.canny_sigma == pb.edge.canny_sigma && pa.edge.canny_low == pb.edge.canny_low &&
           pa.edge.canny_high == pb.edge.canny_high &&
           pa.edge.magnitude_threshold == pb.edge.magnitude_threshold &&
           pa.kernel_side == pb.kernel_side && pa.use_feature_file == pb.use_feature_file &&
           pa.feature_file == pb.feature_file && pa.extractor_seed == pb.extractor_seed &&
           pa.feature_channels == pb.feature_channels && a.tile.window == b.tile.window &&
           a.tile.stride == b.tile.stride && a.tile.test_every_k == b.tile.test_every_k &&
           a.augment.pad_to == b.augment.pad_to && a.augment.crop_min == b.augment.crop_min &&
           a.augment.crop_max == b.augment.crop_max &&
           a.augment.output_size == b.augment.output_size &&
           a.augment.rotation_deg == b.augment.rotation_deg &&
           a.augment.illum_min == b.augment.illum_min &&
           a.augment.illum_max == b.augment.illum_max;
}

}  // namespace idan::config
