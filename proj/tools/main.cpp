#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "idan/config.hpp"
#include "idan/data.hpp"
#include "idan/diffmap.hpp"
#include "idan/errors.hpp"
#include "idan/imgproc.hpp"
#include "idan/model.hpp"
#include "idan/tensor_io.hpp"
#include "idan/training.hpp"

namespace fs = std::filesystem;
using namespace idan;

namespace {

config::RunConfig load_or_default(const std::string& path) {
    if (path.empty()) return {};
    return config::load_config(path);
}

std::vector<data::SamplePair> load_split(const std::string& root, const std::string& split) {
    std::vector<data::SamplePair> out;
    for (const auto& e : data::read_index(root))
        if (split.empty() || e.split == split) out.push_back(data::load_sample(root, e.id));
    return out;
}

StructuringElement kernel_from(int side) { return StructuringElement::full_square(side); }

// ---- tile ---------------------------------------------------------------------

struct TileArgs {
    std::string a, b, label, out, config;
    int window = -1, stride = -1, test_every = -1;
    bool dry_run = false;
    int width = 0, height = 0;
};

int run_tile(const TileArgs& args) {
    config::RunConfig cfg = load_or_default(args.config);
    data::TileSpec spec = cfg.tile;
    if (args.window > 0) spec.window = args.window;
    if (args.stride > 0) spec.stride = args.stride;
    if (args.test_every > 0) spec.test_every_k = args.test_every;
    spec.validate();

    if (args.dry_run) {
        if (args.width < 1 || args.height < 1)
            throw std::invalid_argument("tile --dry-run needs --width and --height");
        const auto [tx, ty] = data::tile_grid(args.width, args.height, spec);
        const int total = tx * ty;
        const int test = total / spec.test_every_k;
        std::printf("tiles=%d train=%d test=%d\n", total, total - test, test);
        return 0;
    }
    if (args.a.empty() || args.b.empty() || args.label.empty() || args.out.empty())
        throw std::invalid_argument("tile needs --a, --b, --label and --out");

    const RgbImage raster_a = data::load_png(args.a);
    const RgbImage raster_b = data::load_png(args.b);
    const BinaryMask label = data::load_png_mask(args.label);
    const auto tiles = data::tile_pair(raster_a, raster_b, label, spec);
    if (tiles.empty())
        std::fprintf(stderr, "warning: raster %dx%d smaller than window %d, no tiles\n",
                     raster_a.width, raster_a.height, spec.window);

    std::vector<std::string> splits(tiles.size());
    int test = 0;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const bool is_test = (i + 1) % static_cast<std::size_t>(spec.test_every_k) == 0;
        splits[i] = is_test ? "test" : "train";
        test += is_test ? 1 : 0;
    }
    data::write_dataset(args.out, tiles, splits);
    std::printf("tiles=%zu train=%zu test=%d\n", tiles.size(), tiles.size() - test, test);
    return 0;
}

// ---- diffmap ------------------------------------------------------------------

struct DiffmapArgs {
    std::string a, b, out, config;
    std::string edge, extractor;
    int kernel = -1;
};

int run_diffmap(const DiffmapArgs& args) {
    config::RunConfig cfg = load_or_default(args.config);
    training::PipelineConfig pc = cfg.pipeline;
    if (!args.edge.empty()) pc.edge.op = config::parse_edge_op(args.edge);
    if (!args.extractor.empty()) config::apply_extractor_spec(pc, args.extractor);
    if (args.kernel > 0) pc.kernel_side = args.kernel;

    const RgbImage img_a = data::load_png(args.a);
    const RgbImage img_b = data::load_png(args.b);
    const StructuringElement kernel = kernel_from(pc.kernel_side);

    std::unique_ptr<diffmap::FeatureExtractor> extractor;
    if (pc.use_feature_file)
        extractor = diffmap::feature_file_extractor(pc.feature_file);
    else
        extractor = diffmap::random_cnn_extractor(pc.extractor_seed, pc.feature_channels);

    const diffmap::FDMap fd = diffmap::build_fd_map(img_a, img_b, *extractor, kernel);
    const diffmap::EDMap ed = diffmap::build_ed_map(img_a, img_b, pc.edge, kernel);

    fs::create_directories(args.out);
    save_tensor_file((fs::path(args.out) / "fd.idtn").string(), fd.tensor);
    data::save_png((fs::path(args.out) / "ed.png").string(), ed.mask);

    // channel-mean FD map, min-max scaled for viewing
    const int c = fd.tensor.dim(0), h = fd.tensor.dim(1), w = fd.tensor.dim(2);
    GrayImage vis{h, w, std::vector<float>(static_cast<std::size_t>(h) * w, 0.f)};
    const float* src = fd.tensor.values().data();
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h * w; ++i)
            vis.pixels[static_cast<std::size_t>(i)] += src[ci * h * w + i];
    for (auto& v : vis.pixels) v /= static_cast<float>(c);
    data::save_png((fs::path(args.out) / "fd_vis.png").string(), imgproc::minmax_normalize(vis));

    std::printf("fd=%s ed=%s\n", shape_str(fd.tensor.shape()).c_str(),
                (std::to_string(ed.mask.width) + "x" + std::to_string(ed.mask.height)).c_str());
    return 0;
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
    std::string config, data_dir, out;
    int epochs = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_train(const TrainArgs& args) {
    config::RunConfig cfg = load_or_default(args.config);
    if (args.epochs > 0) cfg.train.epochs = args.epochs;
    if (args.seed_set) cfg.train.seed = args.seed;
    cfg.train.checkpoint_path = args.out;

    auto train_set = load_split(args.data_dir, "train");
    if (train_set.empty()) throw IoError("no training samples under " + args.data_dir);
    auto val_set = load_split(args.data_dir, "val");

    training::Pipeline pipeline(cfg.pipeline);
    model::IDANModel m(cfg.model, pipeline.feature_channels(), cfg.with_modules, cfg.train.seed);
    training::train(m, train_set, pipeline, cfg.train, val_set.empty() ? nullptr : &val_set,
                    &std::cout);
    std::printf("checkpoint=%s\n", args.out.c_str());
    return 0;
}

// ---- eval / infer -----------------------------------------------------------------

int run_eval(const std::string& ckpt, const std::string& data_dir, float threshold) {
    training::Bundle bundle = training::load_bundle(ckpt);
    auto test_set = load_split(data_dir, "test");
    if (test_set.empty()) test_set = load_split(data_dir, "");
    if (test_set.empty()) throw IoError("no samples under " + data_dir);
    training::Pipeline pipeline(bundle.pipeline);
    const auto report = training::evaluate(bundle.model, test_set, pipeline, threshold);
    std::printf("accuracy=%.4f precision=%.4f recall=%.4f f1=%.4f\n", report.accuracy,
                report.precision, report.recall, report.f1);
    return 0;
}

struct InferArgs {
    std::string ckpt, a, b, out, overlay;
    float threshold = 0.5f;
};

int run_infer(const InferArgs& args) {
    training::Bundle bundle = training::load_bundle(args.ckpt);
    const RgbImage img_a = data::load_png(args.a);
    const RgbImage img_b = data::load_png(args.b);

    training::Pipeline pipeline(bundle.pipeline);
    data::SamplePair pair;
    pair.image_before = img_a;
    pair.image_after = img_b;

    Tensor fd, ed;
    if (bundle.model.with_modules()) {
        auto [fd3, ed3] = pipeline.prepare(pair);
        fd = Tensor::from_data({1, fd3.dim(0), fd3.dim(1), fd3.dim(2)},
                               std::vector<float>(fd3.values().begin(), fd3.values().end()));
        ed = Tensor::from_data({1, ed3.dim(0), ed3.dim(1), ed3.dim(2)},
                               std::vector<float>(ed3.values().begin(), ed3.values().end()));
    }
    const Tensor pred =
        bundle.model.forward(to_tensor(img_a), to_tensor(img_b), fd, ed);
    const auto masks = training::binarize(pred, args.threshold);

    data::save_png(args.out, masks[0]);
    std::string overlay_path = args.overlay;
    if (overlay_path.empty()) {
        fs::path p(args.out);
        overlay_path = (p.parent_path() / (p.stem().string() + "_overlay.png")).string();
    }
    data::save_png(overlay_path, data::overlay_mask(img_b, masks[0]));
    std::printf("mask=%s overlay=%s changed=%lld\n", args.out.c_str(), overlay_path.c_str(),
                static_cast<long long>(masks[0].count_on()));
    return 0;
}

// ---- flops -------------------------------------------------------------------------

int run_flops(const std::string& config_path, int width, int height, bool paper_scale) {
    config::RunConfig cfg = load_or_default(config_path);
    model::UNetConfig mc = cfg.model;
    int h = height, w = width;
    if (paper_scale) {
        mc.base_channels = 64;
        mc.depth = 4;
        mc.head_channels = 64;
        h = w = 512;
    }
    const auto report =
        model::flop_count(mc, cfg.with_modules, h, w, cfg.pipeline.feature_channels);
    for (const auto& [name, flops] : report.layers)
        std::printf("%-22s %16.0f\n", name.c_str(), flops);
    std::printf("total=%.2f GFLOPs\n", report.gflops());
    return 0;
}

// ---- synth -------------------------------------------------------------------------

int run_synth(std::uint64_t seed, int count, int size, const std::string& out, int test_every) {
    if (count < 1) throw std::invalid_argument("synth: --count must be >= 1");
    if (test_every < 1) throw std::invalid_argument("synth: --test-every must be >= 1");
    const auto samples = data::synth_dataset(seed, count, size);
    std::vector<std::string> splits(samples.size());
    int test = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const bool is_test = (i + 1) % static_cast<std::size_t>(test_every) == 0;
        splits[i] = is_test ? "test" : "train";
        test += is_test ? 1 : 0;
    }
    data::write_dataset(out, samples, splits);
    std::printf("samples=%zu train=%zu test=%d\n", samples.size(), samples.size() - test, test);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IDAN change-detection pipeline"};
    app.require_subcommand(1);

    TileArgs tile_args;
    auto* tile = app.add_subcommand("tile", "Tile a bi-temporal raster pair into a dataset");
    tile->add_option("--a", tile_args.a, "Image at date A (PNG)");
    tile->add_option("--b", tile_args.b, "Image at date B (PNG)");
    tile->add_option("--label", tile_args.label, "Change label (PNG, {0,255})");
    tile->add_option("--out", tile_args.out, "Output dataset directory");
    tile->add_option("--config", tile_args.config, "Config file");
    tile->add_option("--window", tile_args.window, "Tile window size");
    tile->add_option("--stride", tile_args.stride, "Tile stride");
    tile->add_option("--test-every", tile_args.test_every, "Every k-th tile goes to test");
    tile->add_flag("--dry-run", tile_args.dry_run, "Only print counts from dimensions");
    tile->add_option("--width", tile_args.width, "Raster width for --dry-run");
    tile->add_option("--height", tile_args.height, "Raster height for --dry-run");

    DiffmapArgs diffmap_args;
    auto* diff = app.add_subcommand("diffmap", "Build FD/ED difference maps for an image pair");
    diff->add_option("--a", diffmap_args.a, "Image at date A")->required();
    diff->add_option("--b", diffmap_args.b, "Image at date B")->required();
    diff->add_option("--out", diffmap_args.out, "Output directory")->required();
    diff->add_option("--config", diffmap_args.config, "Config file");
    diff->add_option("--edge", diffmap_args.edge, "Edge operator: canny|sobel|prewitt");
    diff->add_option("--extractor", diffmap_args.extractor,
                     "random:<seed>:<c_p> or file:<path>");
    diff->add_option("--kernel", diffmap_args.kernel, "Morphology kernel side (odd)");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train on a dataset directory");
    train->add_option("--config", train_args.config, "Config file");
    train->add_option("--data", train_args.data_dir, "Dataset directory")->required();
    train->add_option("--out", train_args.out, "Checkpoint path")->required();
    train->add_option("--epochs", train_args.epochs, "Override epochs");
    auto* seed_opt = train->add_option("--seed", train_args.seed, "Override training seed");

    std::string eval_ckpt, eval_data;
    float eval_threshold = 0.5f;
    auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
    evalc->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
    evalc->add_option("--data", eval_data, "Dataset directory")->required();
    evalc->add_option("--threshold", eval_threshold, "Binarization threshold");

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Run change detection on one image pair");
    infer->add_option("--ckpt", infer_args.ckpt, "Checkpoint file")->required();
    infer->add_option("--a", infer_args.a, "Image at date A")->required();
    infer->add_option("--b", infer_args.b, "Image at date B")->required();
    infer->add_option("--out", infer_args.out, "Output mask PNG")->required();
    infer->add_option("--overlay", infer_args.overlay, "Overlay PNG path");
    infer->add_option("--threshold", infer_args.threshold, "Binarization threshold");

    std::string flops_config;
    int flops_w = 512, flops_h = 512;
    bool flops_paper = false;
    auto* flops = app.add_subcommand("flops", "Print the analytic per-layer FLOP table");
    flops->add_option("--config", flops_config, "Config file");
    flops->add_option("--width", flops_w, "Input width");
    flops->add_option("--height", flops_h, "Input height");
    flops->add_flag("--paper-scale", flops_paper, "Base 64, depth 4, 512x512");

    std::uint64_t synth_seed = 42;
    int synth_count = 100, synth_size = 64, synth_test_every = 5;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic change-pair dataset");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--count", synth_count, "Number of sample pairs");
    synth->add_option("--size", synth_size, "Square raster size");
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--test-every", synth_test_every, "Every k-th sample goes to test");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (tile->parsed()) return run_tile(tile_args);
        if (diff->parsed()) return run_diffmap(diffmap_args);
        if (train->parsed()) {
            train_args.seed_set = seed_opt->count() > 0;
            return run_train(train_args);
        }
        if (evalc->parsed()) return run_eval(eval_ckpt, eval_data, eval_threshold);
        if (infer->parsed()) return run_infer(infer_args);
        if (flops->parsed()) return run_flops(flops_config, flops_w, flops_h, flops_paper);
        if (synth->parsed()) return run_synth(synth_seed, synth_count, synth_size, synth_out,
                                              synth_test_every);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const IoError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    }
    return 0;
}
