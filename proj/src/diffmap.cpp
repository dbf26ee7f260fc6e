#include "idan/diffmap.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

#include "idan/errors.hpp"
#include "idan/tensor_io.hpp"

namespace idan::diffmap {

namespace {

class RandomCnnExtractor final : public FeatureExtractor {
public:
    RandomCnnExtractor(std::uint64_t seed, int c_p) : c_p_(c_p) {
        if (c_p <= 0 || c_p % 4 != 0)
            throw std::invalid_argument("random_cnn_extractor: c_p must be a positive multiple of 4");
        Rng rng(seed);
        const int chans[4] = {3, c_p / 4, c_p / 2, c_p};
        for (int b = 0; b < 3; ++b) {
            const int ci = chans[b], co = chans[b + 1];
            // frozen: requires_grad stays false
            weights_.push_back(kaiming_uniform<float>({co, ci, 3, 3},
                                                      static_cast<std::int64_t>(ci) * 9, rng)
                                   .detached(false));
            biases_.push_back(Tensor::zeros({co}));
        }
    }

    int output_channels() const override { return c_p_; }

    Tensor extract(const RgbImage& img) const override {
        if (img.height % kDownsample != 0 || img.width % kDownsample != 0)
            throw std::invalid_argument("extractor: image dims must be divisible by 8, got " +
                                        std::to_string(img.width) + "x" +
                                        std::to_string(img.height));
        Tensor x = to_tensor(img);
        for (int b = 0; b < 3; ++b) {
            x = conv2d(x, weights_[static_cast<std::size_t>(b)],
                       biases_[static_cast<std::size_t>(b)], 1, 1);
            x = relu(x);
            x = max_pool2d(x);
        }
        return x;  // (1, c_p, H/8, W/8)
    }

private:
    int c_p_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

class FeatureFileExtractor final : public FeatureExtractor {
public:
    explicit FeatureFileExtractor(const std::string& path) : features_(load_feature_file(path)) {}

    int output_channels() const override { return features_.dim(0); }

    Tensor extract(const RgbImage& img) const override {
        if (features_.dim(1) * kDownsample != img.height ||
            features_.dim(2) * kDownsample != img.width)
            throw std::invalid_argument(
                "feature file shape " + shape_str(features_.shape()) +
                " does not match image " + std::to_string(img.width) + "x" +
                std::to_string(img.height) + " at 1/8 resolution");
        // stored features stand in for the network output; add batch axis
        return Tensor::from_data({1, features_.dim(0), features_.dim(1), features_.dim(2)},
                                 std::vector<float>(features_.values().begin(),
                                                    features_.values().end()));
    }

private:
    Tensor features_;  // (c_p, h, w)
};

}  // namespace

std::unique_ptr<FeatureExtractor> random_cnn_extractor(std::uint64_t seed, int c_p) {
    return std::make_unique<RandomCnnExtractor>(seed, c_p);
}

std::unique_ptr<FeatureExtractor> feature_file_extractor(const std::string& path) {
    return std::make_unique<FeatureFileExtractor>(path);
}

Tensor load_feature_file(const std::string& path) {
    Tensor t = load_tensor_file(path);
    if (t.rank() == 4) {
        if (t.dim(0) != 1)
            throw IoError("feature file " + path + ": rank-4 tensor must have batch 1, got " +
                          shape_str(t.shape()));
        return Tensor::from_data({t.dim(1), t.dim(2), t.dim(3)},
                                 std::vector<float>(t.values().begin(), t.values().end()));
    }
    if (t.rank() != 3)
        throw IoError("feature file " + path + ": expected rank 3 or 4, got " +
                      shape_str(t.shape()));
    return t;
}

GrayImage difference_op(const GrayImage& a, const GrayImage& b,
                        const StructuringElement& kernel) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("difference_op: size mismatch " + std::to_string(a.width) +
                                    "x" + std::to_string(a.height) + " vs " +
                                    std::to_string(b.width) + "x" + std::to_string(b.height));
    GrayImage r{a.height, a.width, std::vector<float>(a.pixels.size())};
    for (std::size_t i = 0; i < r.pixels.size(); ++i)
        r.pixels[i] = std::abs(a.pixels[i] - b.pixels[i]);
    return imgproc::erode_gray(imgproc::dilate_gray(r, kernel), kernel);
}

BinaryMask difference_op(const BinaryMask& a, const BinaryMask& b,
                         const StructuringElement& kernel) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("difference_op: size mismatch");
    BinaryMask r = BinaryMask::zeros(a.height, a.width);
    for (std::size_t i = 0; i < r.pixels.size(); ++i)
        r.pixels[i] = a.pixels[i] != b.pixels[i] ? 1 : 0;  // |a-b| on {0,1} = xor
    return imgproc::erode(imgproc::dilate(r, kernel), kernel);
}

Tensor difference_op(const Tensor& a, const Tensor& b, const StructuringElement& kernel) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("difference_op: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    if (a.rank() < 2)
        throw std::invalid_argument("difference_op: need at least 2 spatial dims, got " +
                                    shape_str(a.shape()));
    const int h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t channels = a.numel() / plane;
    const float* pa = a.values().data();
    const float* pb = b.values().data();
    std::vector<float> out;
    out.reserve(static_cast<std::size_t>(a.numel()));
    GrayImage ch{h, w, std::vector<float>(static_cast<std::size_t>(plane))};
    for (std::int64_t c = 0; c < channels; ++c) {
        const float* sa = pa + c * plane;
        const float* sb = pb + c * plane;
        for (std::int64_t i = 0; i < plane; ++i)
            ch.pixels[static_cast<std::size_t>(i)] = std::abs(sa[i] - sb[i]);
        GrayImage closed = imgproc::erode_gray(imgproc::dilate_gray(ch, kernel), kernel);
        out.insert(out.end(), closed.pixels.begin(), closed.pixels.end());
    }
    return Tensor::from_data(a.shape(), std::move(out));
}

FDMap build_fd_map(const RgbImage& img_a, const RgbImage& img_b, const FeatureExtractor& p,
                   const StructuringElement& kernel) {
    if (img_a.height != img_b.height || img_a.width != img_b.width)
        throw std::invalid_argument("build_fd_map: image size mismatch");
    if (img_a.height % FeatureExtractor::kDownsample != 0 ||
        img_a.width % FeatureExtractor::kDownsample != 0)
        throw std::invalid_argument("build_fd_map: dims must be divisible by 8, got " +
                                    std::to_string(img_a.width) + "x" +
                                    std::to_string(img_a.height));
    const Tensor fa = p.extract(img_a);
    const Tensor fb = p.extract(img_b);
    Tensor fd4 = difference_op(fa, fb, kernel);  // (1, c_p, H/8, W/8)
    return FDMap{Tensor::from_data(
        {fd4.dim(1), fd4.dim(2), fd4.dim(3)},
        std::vector<float>(fd4.values().begin(), fd4.values().end()))};
}

BinaryMask run_edge_op(const GrayImage& img, const EdgeConfig& cfg) {
    switch (cfg.op) {
        case EdgeOp::canny:
            return imgproc::canny(img, cfg.canny_sigma, cfg.canny_low, cfg.canny_high);
        case EdgeOp::sobel:
            return imgproc::sobel_edges(img, cfg.magnitude_threshold);
        case EdgeOp::prewitt:
            return imgproc::prewitt_edges(img, cfg.magnitude_threshold);
    }
    throw std::invalid_argument("run_edge_op: unknown operator");
}

EDMap build_ed_map(const RgbImage& img_a, const RgbImage& img_b, const EdgeConfig& edge,
                   const StructuringElement& kernel) {
    if (img_a.height != img_b.height || img_a.width != img_b.width)
        throw std::invalid_argument("build_ed_map: image size mismatch");
    const BinaryMask ea = run_edge_op(imgproc::to_gray(img_a), edge);
    const BinaryMask eb = run_edge_op(imgproc::to_gray(img_b), edge);
    return EDMap{difference_op(ea, eb, kernel)};
}

}  // namespace idan::diffmap
