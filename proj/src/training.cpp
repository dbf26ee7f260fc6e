#include "idan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "idan/errors.hpp"
#include "idan/tensor_io.hpp"

namespace idan::training {

template <typename S>
TensorT<S> bcd_loss(const TensorT<S>& pred, const TensorT<S>& label) {
    if (pred.shape() != label.shape())
        throw std::invalid_argument("bcd_loss: shape mismatch " + shape_str(pred.shape()) +
                                    " vs " + shape_str(label.shape()));
    const TensorT<S> numerator = reduce_sum(abs(sub(pred, label)));
    TensorT<S> denominator = add(reduce_sum(pred), reduce_sum(label));
    denominator = add_const(denominator, S(1e-7));
    return div(numerator, denominator);
}

template TensorT<float> bcd_loss<float>(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> bcd_loss<double>(const TensorT<double>&, const TensorT<double>&);

std::vector<BinaryMask> binarize(const Tensor& change_map, float threshold) {
    if (change_map.rank() != 4 || change_map.dim(1) != 1)
        throw std::invalid_argument("binarize: expected (N,1,H,W), got " +
                                    shape_str(change_map.shape()));
    const int n = change_map.dim(0), h = change_map.dim(2), w = change_map.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const float* src = change_map.values().data();
    std::vector<BinaryMask> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        BinaryMask m = BinaryMask::zeros(h, w);
        const float* p = src + i * plane;
        for (std::int64_t j = 0; j < plane; ++j)
            m.pixels[static_cast<std::size_t>(j)] = p[j] > threshold ? 1 : 0;
        out.push_back(std::move(m));
    }
    return out;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& label) {
    if (pred.height != label.height || pred.width != label.width)
        throw std::invalid_argument("confusion: size mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        const bool p = pred.pixels[i] != 0, l = label.pixels[i] != 0;
        if (p && l)
            ++c.tp;
        else if (!p && !l)
            ++c.tn;
        else if (p && !l)
            ++c.fp;
        else
            ++c.fn;
    }
    return c;
}

MetricsReport metrics(const ConfusionCounts& c) {
    MetricsReport r;
    r.counts = c;
    const auto ratio = [](std::int64_t num, std::int64_t den, double& out, bool& flag) {
        if (den == 0) {
            out = 0.0;
            flag = true;
        } else {
            out = static_cast<double>(num) / static_cast<double>(den);
        }
    };
    ratio(c.tp + c.tn, c.total(), r.accuracy, r.accuracy_degenerate);
    ratio(c.tp, c.tp + c.fp, r.precision, r.precision_degenerate);
    ratio(c.tp, c.tp + c.fn, r.recall, r.recall_degenerate);
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, r.f1, r.f1_degenerate);
    return r;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.f))
        throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (!(threshold > 0.f) || !(threshold < 1.f))
        throw std::invalid_argument("TrainConfig: threshold must be in (0,1)");
}

Pipeline::Pipeline(PipelineConfig cfg)
    : cfg_(std::move(cfg)), kernel_(StructuringElement::full_square(cfg_.kernel_side)) {
    if (cfg_.use_feature_file)
        extractor_ = diffmap::feature_file_extractor(cfg_.feature_file);
    else
        extractor_ = diffmap::random_cnn_extractor(cfg_.extractor_seed, cfg_.feature_channels);
}

std::pair<Tensor, Tensor> Pipeline::prepare(const data::SamplePair& sample) const {
    const diffmap::FDMap fd =
        diffmap::build_fd_map(sample.image_before, sample.image_after, *extractor_, kernel_);
    const diffmap::EDMap ed =
        diffmap::build_ed_map(sample.image_before, sample.image_after, cfg_.edge, kernel_);
    std::vector<float> edf(ed.mask.pixels.size());
    for (std::size_t i = 0; i < edf.size(); ++i) edf[i] = static_cast<float>(ed.mask.pixels[i]);
    Tensor ed_t = Tensor::from_data({1, ed.mask.height, ed.mask.width}, std::move(edf));
    return {fd.tensor, std::move(ed_t)};
}

namespace {

// concatenates per-sample buffers of identical shape into one (n,...) tensor
Tensor collate(const std::vector<const Tensor*>& items, std::vector<int> item_shape) {
    std::vector<float> out;
    out.reserve(items.size() * static_cast<std::size_t>(shape_numel(item_shape)));
    for (const Tensor* t : items) out.insert(out.end(), t->values().begin(), t->values().end());
    std::vector<int> shape;
    shape.push_back(static_cast<int>(items.size()));
    shape.insert(shape.end(), item_shape.begin(), item_shape.end());
    return Tensor::from_data(std::move(shape), std::move(out));
}

Tensor label_tensor(const BinaryMask& m) {
    std::vector<float> v(m.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(m.pixels[i]);
    return Tensor::from_data({1, m.height, m.width}, std::move(v));
}

struct SampleCache {
    Tensor a, b, label;  // rank-3
    Tensor fd, ed;       // rank-3; undefined without modules
};

std::vector<SampleCache> build_cache(const std::vector<data::SamplePair>& dataset,
                                     const Pipeline& pipeline, bool with_modules) {
    std::vector<SampleCache> cache;
    cache.reserve(dataset.size());
    const int h = dataset[0].image_before.height, w = dataset[0].image_before.width;
    for (const auto& s : dataset) {
        if (s.image_before.height != h || s.image_before.width != w)
            throw std::invalid_argument("train/evaluate: all samples must share dimensions");
        SampleCache c;
        Tensor a4 = to_tensor(s.image_before);  // (1,3,H,W)
        Tensor b4 = to_tensor(s.image_after);
        c.a = Tensor::from_data({3, h, w},
                                std::vector<float>(a4.values().begin(), a4.values().end()));
        c.b = Tensor::from_data({3, h, w},
                                std::vector<float>(b4.values().begin(), b4.values().end()));
        c.label = label_tensor(s.label);
        if (with_modules) std::tie(c.fd, c.ed) = pipeline.prepare(s);
        cache.push_back(std::move(c));
    }
    return cache;
}

struct Batch {
    Tensor a, b, fd, ed, label;
};

Batch collate_batch(const std::vector<SampleCache>& cache, const std::vector<int>& order,
                    std::size_t begin, std::size_t end, bool with_modules) {
    std::vector<const Tensor*> as, bs, fds, eds, labels;
    for (std::size_t i = begin; i < end; ++i) {
        const auto& c = cache[static_cast<std::size_t>(order[i])];
        as.push_back(&c.a);
        bs.push_back(&c.b);
        labels.push_back(&c.label);
        if (with_modules) {
            fds.push_back(&c.fd);
            eds.push_back(&c.ed);
        }
    }
    Batch batch;
    batch.a = collate(as, cache[0].a.shape());
    batch.b = collate(bs, cache[0].b.shape());
    batch.label = collate(labels, cache[0].label.shape());
    if (with_modules) {
        batch.fd = collate(fds, cache[0].fd.shape());
        batch.ed = collate(eds, cache[0].ed.shape());
    }
    return batch;
}

}  // namespace

TrainResult train(model::IDANModel& m, const std::vector<data::SamplePair>& dataset,
                  const Pipeline& pipeline, const TrainConfig& cfg,
                  const std::vector<data::SamplePair>* validation, std::ostream* log_stream) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    const auto cache = build_cache(dataset, pipeline, m.with_modules());
    Optimizer opt(cfg.optimizer, cfg.learning_rate, m.parameters());
    Rng shuffle_rng(cfg.seed);

    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates with the seeded stream
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            Batch batch = collate_batch(cache, order, begin, end, m.with_modules());
            Tensor pred = m.forward(batch.a, batch.b, batch.fd, batch.ed);
            Tensor loss = bcd_loss(pred, batch.label);
            const float lv = loss.item();
            if (!std::isfinite(lv))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch starting at sample " + std::to_string(begin));
            backward(loss);
            opt.step();
            loss_sum += static_cast<double>(lv) * static_cast<double>(end - begin);
        }
        EpochLog log;
        log.epoch = epoch;
        log.mean_loss = loss_sum / static_cast<double>(dataset.size());
        if (validation && !validation->empty())
            log.f1 = evaluate(m, *validation, pipeline, cfg.threshold).f1;
        if (log_stream) {
            char line[96];
            if (log.f1 >= 0)
                std::snprintf(line, sizeof(line), "epoch=%d loss=%.6f f1=%.4f", log.epoch,
                              log.mean_loss, log.f1);
            else
                std::snprintf(line, sizeof(line), "epoch=%d loss=%.6f", log.epoch, log.mean_loss);
            (*log_stream) << line << '\n';
            log_stream->flush();
        }
        result.log.push_back(log);
    }

    if (!cfg.checkpoint_path.empty()) save_bundle(cfg.checkpoint_path, m, pipeline.config());
    return result;
}

MetricsReport evaluate(const model::IDANModel& m, const std::vector<data::SamplePair>& dataset,
                       const Pipeline& pipeline, float threshold) {
    if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
    ConfusionCounts totals;
    for (const auto& sample : dataset) {
        Tensor a = to_tensor(sample.image_before);
        Tensor b = to_tensor(sample.image_after);
        Tensor fd, ed;
        if (m.with_modules()) {
            auto [fd3, ed3] = pipeline.prepare(sample);
            fd = Tensor::from_data({1, fd3.dim(0), fd3.dim(1), fd3.dim(2)},
                                   std::vector<float>(fd3.values().begin(), fd3.values().end()));
            ed = Tensor::from_data({1, ed3.dim(0), ed3.dim(1), ed3.dim(2)},
                                   std::vector<float>(ed3.values().begin(), ed3.values().end()));
        }
        const Tensor pred = m.forward(a, b, fd, ed);
        const auto masks = binarize(pred, threshold);
        const ConfusionCounts c = confusion(masks[0], sample.label);
        totals.tp += c.tp;
        totals.tn += c.tn;
        totals.fp += c.fp;
        totals.fn += c.fn;
    }
    return metrics(totals);
}

// ---- checkpoint bundle ---------------------------------------------------------

namespace {

constexpr int kMetaLen = 17;
constexpr float kBundleVersion = 1.0f;

int edge_op_code(diffmap::EdgeOp op) {
    switch (op) {
        case diffmap::EdgeOp::canny: return 0;
        case diffmap::EdgeOp::sobel: return 1;
        case diffmap::EdgeOp::prewitt: return 2;
    }
    return 0;
}

diffmap::EdgeOp edge_op_from_code(int code) {
    switch (code) {
        case 0: return diffmap::EdgeOp::canny;
        case 1: return diffmap::EdgeOp::sobel;
        case 2: return diffmap::EdgeOp::prewitt;
    }
    throw IoError("checkpoint: unknown edge operator code " + std::to_string(code));
}

}  // namespace

void save_bundle(const std::string& path, const model::IDANModel& m, const PipelineConfig& pc) {
    if (pc.use_feature_file)
        throw std::invalid_argument(
            "save_bundle: feature-file extractors are per-pair inputs and cannot be "
            "checkpointed; train with a seeded random extractor");
    std::vector<std::pair<std::string, Tensor>> entries;
    std::vector<float> meta(kMetaLen, 0.f);
    const auto& cfg = m.config();
    meta[0] = kBundleVersion;
    meta[1] = static_cast<float>(cfg.in_channels);
    meta[2] = static_cast<float>(cfg.base_channels);
    meta[3] = static_cast<float>(cfg.depth);
    meta[4] = static_cast<float>(cfg.head_channels);
    meta[5] = m.with_modules() ? 1.f : 0.f;
    meta[6] = static_cast<float>(m.feature_channels());
    meta[7] = static_cast<float>(pc.kernel_side);
    meta[8] = static_cast<float>(edge_op_code(pc.edge.op));
    meta[9] = pc.edge.canny_sigma;
    meta[10] = pc.edge.canny_low;
    meta[11] = pc.edge.canny_high;
    meta[12] = pc.edge.magnitude_threshold;
    // 64-bit seed as four exact 16-bit chunks
    for (int i = 0; i < 4; ++i)
        meta[13 + i] = static_cast<float>((pc.extractor_seed >> (16 * i)) & 0xffffu);
    entries.emplace_back("__meta__", Tensor::from_data({kMetaLen}, std::move(meta)));
    for (const auto& p : m.named_parameters())
        entries.emplace_back(p.name, p.value.detached(false));
    save_named_tensors(path, entries);
}

Bundle load_bundle(const std::string& path) {
    const auto entries = load_named_tensors(path);
    const Tensor* meta = nullptr;
    for (const auto& [name, t] : entries)
        if (name == "__meta__") meta = &t;
    if (!meta || meta->numel() < kMetaLen)
        throw IoError("checkpoint " + path + ": missing or short __meta__ entry");
    const auto mv = meta->values();
    if (mv[0] != kBundleVersion)
        throw IoError("checkpoint " + path + ": unsupported bundle version");

    model::UNetConfig cfg;
    cfg.in_channels = static_cast<int>(mv[1]);
    cfg.base_channels = static_cast<int>(mv[2]);
    cfg.depth = static_cast<int>(mv[3]);
    cfg.head_channels = static_cast<int>(mv[4]);
    const bool with_modules = mv[5] != 0.f;
    const int c_p = static_cast<int>(mv[6]);

    PipelineConfig pc;
    pc.kernel_side = static_cast<int>(mv[7]);
    pc.edge.op = edge_op_from_code(static_cast<int>(mv[8]));
    pc.edge.canny_sigma = mv[9];
    pc.edge.canny_low = mv[10];
    pc.edge.canny_high = mv[11];
    pc.edge.magnitude_threshold = mv[12];
    pc.feature_channels = c_p;
    std::uint64_t seed = 0;
    for (int i = 0; i < 4; ++i)
        seed |= static_cast<std::uint64_t>(static_cast<std::uint32_t>(mv[13 + i])) << (16 * i);
    pc.extractor_seed = seed;

    model::IDANModel m(cfg, c_p, with_modules, /*seed=*/0);
    std::size_t loaded = 0;
    for (const auto& [name, t] : entries) {
        if (name == "__meta__") continue;
        m.load_parameter(name, t);
        ++loaded;
    }
    if (loaded != m.named_parameters().size())
        throw IoError("checkpoint " + path + ": has " + std::to_string(loaded) +
                      " parameters, model needs " + std::to_string(m.named_parameters().size()));
    return Bundle{std::move(m), std::move(pc)};
}

}  // namespace idan::training
