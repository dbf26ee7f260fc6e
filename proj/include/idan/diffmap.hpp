#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "idan/image.hpp"
#include "idan/imgproc.hpp"
#include "idan/tensor.hpp"

namespace idan::diffmap {

// Stand-in for the pretrained feature model: maps an RGB image to a
// (c_p, H/8, W/8) feature tensor. Implementations are immutable.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual int output_channels() const = 0;
    virtual Tensor extract(const RgbImage& img) const = 0;

    static constexpr int kDownsample = 8;
};

// Three frozen blocks of (3x3 conv, relu, 2x2 max-pool), channels
// 3 -> c_p/4 -> c_p/2 -> c_p, Kaiming-uniform weights from the seed.
std::unique_ptr<FeatureExtractor> random_cnn_extractor(std::uint64_t seed, int c_p);

// Serves a tensor loaded from an IDTN file; ignores pixel content but
// validates the spatial contract against the requested image.
std::unique_ptr<FeatureExtractor> feature_file_extractor(const std::string& path);

Tensor load_feature_file(const std::string& path);

struct FDMap {
    Tensor tensor;  // (c_p, H/8, W/8), non-negative
};

struct EDMap {
    BinaryMask mask;  // H x W
};

enum class EdgeOp { canny, sobel, prewitt };

struct EdgeConfig {
    EdgeOp op = EdgeOp::canny;
    float canny_sigma = 1.4f;
    float canny_low = 0.1f;
    float canny_high = 0.2f;
    float magnitude_threshold = 0.5f;  // sobel / prewitt
};

BinaryMask run_edge_op(const GrayImage& img, const EdgeConfig& cfg);

// |a-b|, then dilation, then erosion (a closing), each channel on its own.
// Grayscale morphology (windowed max/min) for float inputs.
Tensor difference_op(const Tensor& a, const Tensor& b, const StructuringElement& kernel);
GrayImage difference_op(const GrayImage& a, const GrayImage& b, const StructuringElement& kernel);
BinaryMask difference_op(const BinaryMask& a, const BinaryMask& b,
                         const StructuringElement& kernel);

FDMap build_fd_map(const RgbImage& img_a, const RgbImage& img_b, const FeatureExtractor& p,
                   const StructuringElement& kernel);

EDMap build_ed_map(const RgbImage& img_a, const RgbImage& img_b, const EdgeConfig& edge,
                   const StructuringElement& kernel);

}  // namespace idan::diffmap
