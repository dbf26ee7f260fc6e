#include "idan/model.hpp"

#include <cmath>
#include <stdexcept>

namespace idan::model {

void UNetConfig::validate() const {
    if (in_channels <= 0 || base_channels <= 0 || depth <= 0 || head_channels <= 0)
        throw std::invalid_argument("UNetConfig: all fields must be positive");
    if (head_channels % 2 != 0)
        throw std::invalid_argument("UNetConfig: head_channels must be even, got " +
                                    std::to_string(head_channels));
}

template <typename S>
TensorT<S> fda_module(const TensorT<S>& x1, const TensorT<S>& fd, const FdaParamsT<S>& p) {
    if (x1.rank() != 4 || fd.rank() != 4)
        throw std::invalid_argument("fda_module: expected rank-4 tensors, got " +
                                    shape_str(x1.shape()) + " and " + shape_str(fd.shape()));
    if (x1.dim(0) != fd.dim(0))
        throw std::invalid_argument("fda_module: batch mismatch " + shape_str(x1.shape()) +
                                    " vs " + shape_str(fd.shape()));
    TensorT<S> prior = fd;
    if (fd.dim(2) != x1.dim(2) || fd.dim(3) != x1.dim(3))
        prior = resize_bilinear(fd, x1.dim(2), x1.dim(3));
    if (p.conv_a.weight.dim(1) != prior.dim(1))
        throw std::invalid_argument("fda_module: prior has " + std::to_string(prior.dim(1)) +
                                    " channels, conv expects " +
                                    std::to_string(p.conv_a.weight.dim(1)));
    const TensorT<S> gate = sigmoid(p.conv_a(prior));
    const TensorT<S> enrich = p.conv_b(prior);
    if (gate.dim(1) != x1.dim(1))
        throw std::invalid_argument("fda_module: channel mismatch after 1x1 conv: " +
                                    shape_str(gate.shape()) + " vs " + shape_str(x1.shape()));
    return add(mul(x1, gate), enrich);
}

template <typename S>
TensorT<S> ec_modulation_mask(const TensorT<S>& ed, const TensorT<S>& fd) {
    if (ed.rank() != 4 || ed.dim(1) != 1)
        throw std::invalid_argument("ec_modulation_mask: ed must be (N,1,H,W), got " +
                                    shape_str(ed.shape()));
    if (fd.rank() != 4)
        throw std::invalid_argument("ec_modulation_mask: fd must be rank 4, got " +
                                    shape_str(fd.shape()));
    TensorT<S> m = reduce_mean_channels(fd);
    m = upsample_bilinear(m, 8);
    if (m.dim(2) != ed.dim(2) || m.dim(3) != ed.dim(3))
        throw std::invalid_argument("ec_modulation_mask: fd at 1/8 resolution " +
                                    shape_str(fd.shape()) + " does not match ed " +
                                    shape_str(ed.shape()));
    m = minmax_normalize_per_sample(m);
    m = step_threshold(m, S(0.5));
    return mul(ed, m);
}

template <typename S>
TensorT<S> ec_module(const TensorT<S>& x2, const TensorT<S>& ed, const TensorT<S>& fd,
                     const EcParamsT<S>& p) {
    if (x2.rank() != 4)
        throw std::invalid_argument("ec_module: x2 must be rank 4, got " + shape_str(x2.shape()));
    const TensorT<S> mask = ec_modulation_mask(ed, fd);
    if (mask.dim(0) != x2.dim(0) || mask.dim(2) != x2.dim(2) || mask.dim(3) != x2.dim(3))
        throw std::invalid_argument("ec_module: ed " + shape_str(ed.shape()) +
                                    " does not match x2 " + shape_str(x2.shape()));
    return add(x2, p.conv_e(mask));
}

template <typename S>
TensorT<S> split_subtract_head(const TensorT<S>& f, const HeadParamsT<S>& p) {
    auto [f1, f2] = split_channels_half(f);
    const TensorT<S> d = sub(f1, f2);  // signed difference
    return sigmoid(p.conv(d));
}

template <typename S>
TensorT<S> IDANModelT<S>::reg(const std::string& name, TensorT<S> t) {
    for (const auto& existing : params_)
        if (existing.name == name)
            throw std::invalid_argument("duplicate parameter name: " + name);
    params_.push_back({name, t});
    return t;
}

template <typename S>
Conv2dLayerT<S> IDANModelT<S>::make_conv(const std::string& name, int c_in, int c_out, int k,
                                         bool bias, int padding, Rng& rng) {
    Conv2dLayerT<S> layer;
    layer.weight = reg(name + ".weight",
                       kaiming_uniform<S>({c_out, c_in, k, k},
                                          static_cast<std::int64_t>(c_in) * k * k, rng));
    if (bias) layer.bias = reg(name + ".bias", TensorT<S>::zeros({c_out}, true));
    layer.stride = 1;
    layer.padding = padding;
    return layer;
}

template <typename S>
IDANModelT<S>::IDANModelT(UNetConfig cfg, int feature_channels, bool with_modules,
                          std::uint64_t seed)
    : cfg_(cfg), c_p_(feature_channels), with_modules_(with_modules) {
    cfg_.validate();
    if (with_modules_ && c_p_ <= 0)
        throw std::invalid_argument("IDANModel: feature_channels must be positive");
    Rng rng(seed);

    int prev = cfg_.in_channels;
    for (int i = 0; i < cfg_.depth; ++i) {
        const int ch = cfg_.base_channels << i;
        Stage s;
        s.conv1 = make_conv("enc" + std::to_string(i) + ".conv1", prev, ch, 3, true, 1, rng);
        s.conv2 = make_conv("enc" + std::to_string(i) + ".conv2", ch, ch, 3, true, 1, rng);
        encoder_.push_back(s);
        prev = ch;
    }
    const int deep = cfg_.base_channels << cfg_.depth;
    bottleneck_.conv1 = make_conv("bottleneck.conv1", prev, deep, 3, true, 1, rng);
    bottleneck_.conv2 = make_conv("bottleneck.conv2", deep, deep, 3, true, 1, rng);

    for (int i = cfg_.depth - 1; i >= 0; --i) {
        const int ch = cfg_.base_channels << i;
        const int out = (i == 0) ? cfg_.head_channels : ch;
        DecoderStage d;
        const std::string base = "dec" + std::to_string(i);
        d.up = make_conv(base + ".up", ch * 2, ch, 3, true, 1, rng);
        d.conv1 = make_conv(base + ".conv1", ch * 2, ch, 3, true, 1, rng);
        d.conv2 = make_conv(base + ".conv2", ch, out, 3, true, 1, rng);
        decoder_.push_back(d);
    }

    if (with_modules_) {
        fda_.conv_a = make_conv("fda.conv_a", c_p_, deep, 1, true, 0, rng);
        fda_.conv_b = make_conv("fda.conv_b", c_p_, deep, 1, false, 0, rng);
        ec_.conv_e = make_conv("ec.conv_e", 1, cfg_.head_channels, 1, false, 0, rng);
    }
    head_.conv = make_conv("head.conv", cfg_.head_channels / 2, 1, 1, true, 0, rng);
}

template <typename S>
TensorT<S> IDANModelT<S>::forward(const TensorT<S>& img_a, const TensorT<S>& img_b,
                                  const TensorT<S>& fd, const TensorT<S>& ed) const {
    if (!img_a.defined() || !img_b.defined())
        throw std::invalid_argument("forward: undefined input image tensor");
    if (img_a.shape() != img_b.shape())
        throw std::invalid_argument("forward(input): image shapes differ, " +
                                    shape_str(img_a.shape()) + " vs " + shape_str(img_b.shape()));
    if (img_a.rank() != 4 || img_a.dim(1) * 2 != cfg_.in_channels)
        throw std::invalid_argument("forward(input): expected (N," +
                                    std::to_string(cfg_.in_channels / 2) + ",H,W), got " +
                                    shape_str(img_a.shape()));
    const int mod = 1 << cfg_.depth;
    if (img_a.dim(2) % mod != 0 || img_a.dim(3) % mod != 0)
        throw std::invalid_argument("forward(input): spatial dims must be divisible by " +
                                    std::to_string(mod) + ", got " + shape_str(img_a.shape()));
    if (with_modules_) {
        if (!fd.defined() || !ed.defined())
            throw std::invalid_argument("forward(priors): fd and ed are required");
        if (fd.rank() != 4 || ed.rank() != 4)
            throw std::invalid_argument("forward(priors): fd and ed must be rank-4 batches");
        if (fd.dim(2) * 8 != img_a.dim(2) || fd.dim(3) * 8 != img_a.dim(3))
            throw std::invalid_argument("forward(priors): fd " + shape_str(fd.shape()) +
                                        " is not 1/8 of input " + shape_str(img_a.shape()));
        if (ed.dim(2) != img_a.dim(2) || ed.dim(3) != img_a.dim(3))
            throw std::invalid_argument("forward(priors): ed " + shape_str(ed.shape()) +
                                        " does not match input " + shape_str(img_a.shape()));
    }

    TensorT<S> x = concat_channels(img_a, img_b);
    std::vector<TensorT<S>> skips;
    skips.reserve(encoder_.size());
    for (const auto& s : encoder_) {
        x = relu(s.conv1(x));
        x = relu(s.conv2(x));
        skips.push_back(x);
        x = max_pool2d(x);
    }
    x = relu(bottleneck_.conv1(x));
    x = relu(bottleneck_.conv2(x));

    if (with_modules_) x = fda_module(x, fd, fda_);

    for (std::size_t di = 0; di < decoder_.size(); ++di) {
        const auto& d = decoder_[di];
        x = upsample_bilinear(x, 2);
        x = relu(d.up(x));
        x = concat_channels(x, skips[skips.size() - 1 - di]);
        x = relu(d.conv1(x));
        x = relu(d.conv2(x));
    }

    if (with_modules_) x = ec_module(x, ed, fd, ec_);

    return split_subtract_head(x, head_);
}

template <typename S>
std::vector<ParameterT<S>*> IDANModelT<S>::parameters() {
    std::vector<ParameterT<S>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

template <typename S>
void IDANModelT<S>::load_parameter(const std::string& name, const TensorT<S>& value) {
    for (auto& p : params_) {
        if (p.name != name) continue;
        if (p.value.shape() != value.shape())
            throw std::invalid_argument("load_parameter " + name + ": shape " +
                                        shape_str(value.shape()) + " does not match " +
                                        shape_str(p.value.shape()));
        auto dst = p.value.mutable_values();
        auto src = value.values();
        std::copy(src.begin(), src.end(), dst.begin());
        return;
    }
    throw std::invalid_argument("load_parameter: unknown parameter " + name);
}

// ---- FLOP accounting ---------------------------------------------------------

double conv_flops(int k, int c_in, int c_out, int h_out, int w_out) {
    return 2.0 * k * k * c_in * c_out * static_cast<double>(h_out) * w_out;
}

namespace {

void add_layer(FlopReport& report, const std::string& name, double flops) {
    report.layers.emplace_back(name, flops);
    report.total += flops;
}

double elems(int c, int h, int w) { return static_cast<double>(c) * h * w; }

}  // namespace

FlopReport flop_count(const UNetConfig& cfg, bool with_modules, int input_h, int input_w,
                      int feature_channels) {
    cfg.validate();
    FlopReport report;
    int h = input_h, w = input_w;
    int prev = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const int ch = cfg.base_channels << i;
        const std::string base = "enc" + std::to_string(i);
        add_layer(report, base + ".conv1", conv_flops(3, prev, ch, h, w));
        add_layer(report, base + ".relu1", elems(ch, h, w));
        add_layer(report, base + ".conv2", conv_flops(3, ch, ch, h, w));
        add_layer(report, base + ".relu2", elems(ch, h, w));
        h /= 2;
        w /= 2;
        add_layer(report, base + ".pool", elems(ch, h, w));
        prev = ch;
    }
    const int deep = cfg.base_channels << cfg.depth;
    add_layer(report, "bottleneck.conv1", conv_flops(3, prev, deep, h, w));
    add_layer(report, "bottleneck.relu1", elems(deep, h, w));
    add_layer(report, "bottleneck.conv2", conv_flops(3, deep, deep, h, w));
    add_layer(report, "bottleneck.relu2", elems(deep, h, w));

    if (with_modules) {
        // gate conv + sigmoid + mul, enrichment conv + add
        add_layer(report, "fda.conv_a", conv_flops(1, feature_channels, deep, h, w));
        add_layer(report, "fda.sigmoid", elems(deep, h, w));
        add_layer(report, "fda.conv_b", conv_flops(1, feature_channels, deep, h, w));
        add_layer(report, "fda.mul_add", 2.0 * elems(deep, h, w));
    }

    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int ch = cfg.base_channels << i;
        const int out = (i == 0) ? cfg.head_channels : ch;
        const std::string base = "dec" + std::to_string(i);
        h *= 2;
        w *= 2;
        add_layer(report, base + ".upsample", elems(ch * 2, h, w));
        add_layer(report, base + ".up", conv_flops(3, ch * 2, ch, h, w));
        add_layer(report, base + ".relu_up", elems(ch, h, w));
        add_layer(report, base + ".conv1", conv_flops(3, ch * 2, ch, h, w));
        add_layer(report, base + ".relu1", elems(ch, h, w));
        add_layer(report, base + ".conv2", conv_flops(3, ch, out, h, w));
        add_layer(report, base + ".relu2", elems(out, h, w));
    }

    if (with_modules) {
        // mask plumbing (mean, upsample, normalize, step, mul) + 1x1 conv + add
        const int hc = cfg.head_channels;
        add_layer(report, "ec.mask", 5.0 * elems(1, h, w));
        add_layer(report, "ec.conv_e", conv_flops(1, 1, hc, h, w));
        add_layer(report, "ec.add", elems(hc, h, w));
    }

    add_layer(report, "head.sub", elems(cfg.head_channels / 2, h, w));
    add_layer(report, "head.conv", conv_flops(1, cfg.head_channels / 2, 1, h, w));
    add_layer(report, "head.sigmoid", elems(1, h, w));
    return report;
}

// ---- explicit instantiations --------------------------------------------------

template class IDANModelT<float>;
template class IDANModelT<double>;

#define IDAN_INSTANTIATE_MODEL(S)                                                            \
    template TensorT<S> fda_module<S>(const TensorT<S>&, const TensorT<S>&,                  \
                                      const FdaParamsT<S>&);                                 \
    template TensorT<S> ec_modulation_mask<S>(const TensorT<S>&, const TensorT<S>&);         \
    template TensorT<S> ec_module<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,\
                                     const EcParamsT<S>&);                                   \
    template TensorT<S> split_subtract_head<S>(const TensorT<S>&, const HeadParamsT<S>&);

IDAN_INSTANTIATE_MODEL(float)
IDAN_INSTANTIATE_MODEL(double)

}  // namespace idan::model
