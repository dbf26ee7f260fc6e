#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "idan/tensor.hpp"

namespace idan::model {

struct UNetConfig {
    int in_channels = 6;  // two RGB images, channel-concatenated
    int base_channels = 8;
    int depth = 3;  // down/up stages; bottleneck sits at 1/2^depth
    int head_channels = 8;

    void validate() const;
};

template <typename S>
struct Conv2dLayerT {
    TensorT<S> weight;
    TensorT<S> bias;  // may be undefined
    int stride = 1;
    int padding = 0;

    TensorT<S> operator()(const TensorT<S>& x) const {
        return conv2d(x, weight, bias, stride, padding);
    }
};

template <typename S>
struct FdaParamsT {
    Conv2dLayerT<S> conv_a;  // c_p -> C, 1x1, with bias (attention branch)
    Conv2dLayerT<S> conv_b;  // c_p -> C, 1x1, no bias (enrichment branch)
};

template <typename S>
struct EcParamsT {
    Conv2dLayerT<S> conv_e;  // 1 -> C, 1x1, no bias
};

template <typename S>
struct HeadParamsT {
    Conv2dLayerT<S> conv;  // C/2 -> 1, 1x1, with bias
};

// x1 * sigmoid(ConvA(fd)) + ConvB(fd); fd is resized to x1's spatial dims
// when they differ.
template <typename S>
TensorT<S> fda_module(const TensorT<S>& x1, const TensorT<S>& fd, const FdaParamsT<S>& p);

// Modulation mask of the edge-compensation path:
// ed * step(minmax_normalize(upsample8(mean_c(fd))), 0.5).
template <typename S>
TensorT<S> ec_modulation_mask(const TensorT<S>& ed, const TensorT<S>& fd);

// x2 + ConvE(mask); exact no-op when the mask is all zero.
template <typename S>
TensorT<S> ec_module(const TensorT<S>& x2, const TensorT<S>& ed, const TensorT<S>& fd,
                     const EcParamsT<S>& p);

// Split channels in half, subtract (signed), project to one channel, sigmoid.
template <typename S>
TensorT<S> split_subtract_head(const TensorT<S>& f, const HeadParamsT<S>& p);

template <typename S>
class IDANModelT {
public:
    IDANModelT(UNetConfig cfg, int feature_channels, bool with_modules, std::uint64_t seed);

    IDANModelT(const IDANModelT&) = delete;
    IDANModelT& operator=(const IDANModelT&) = delete;
    IDANModelT(IDANModelT&&) = default;
    IDANModelT& operator=(IDANModelT&&) = default;

    // fd: (N,c_p,H/8,W/8), ed: (N,1,H,W); both ignored (may be undefined)
    // when the model was built without modules.
    TensorT<S> forward(const TensorT<S>& img_a, const TensorT<S>& img_b, const TensorT<S>& fd,
                       const TensorT<S>& ed) const;

    std::vector<ParameterT<S>*> parameters();
    const std::vector<ParameterT<S>>& named_parameters() const { return params_; }
    void load_parameter(const std::string& name, const TensorT<S>& value);

    const UNetConfig& config() const { return cfg_; }
    int feature_channels() const { return c_p_; }
    bool with_modules() const { return with_modules_; }

private:
    struct Stage {
        Conv2dLayerT<S> conv1, conv2;
    };
    struct DecoderStage {
        Conv2dLayerT<S> up;  // 3x3 after bilinear upsample, halves channels
        Conv2dLayerT<S> conv1, conv2;
    };

    TensorT<S> reg(const std::string& name, TensorT<S> t);
    Conv2dLayerT<S> make_conv(const std::string& name, int c_in, int c_out, int k, bool bias,
                              int padding, Rng& rng);

    UNetConfig cfg_;
    int c_p_ = 0;
    bool with_modules_ = true;
    std::vector<Stage> encoder_;
    Stage bottleneck_;
    std::vector<DecoderStage> decoder_;  // deepest first
    FdaParamsT<S> fda_;
    EcParamsT<S> ec_;
    HeadParamsT<S> head_;
    std::vector<ParameterT<S>> params_;
};

using IDANModel = IDANModelT<float>;

// Analytic cost model: convs at 2*K^2*C_in*C_out*H_out*W_out, everything
// else (pool, activation, upsample, elementwise) at 1 op per output element.
struct FlopReport {
    std::vector<std::pair<std::string, double>> layers;
    double total = 0.0;
    double gflops() const { return total * 1e-9; }
};

double conv_flops(int k, int c_in, int c_out, int h_out, int w_out);
FlopReport flop_count(const UNetConfig& cfg, bool with_modules, int input_h, int input_w,
                      int feature_channels = 16);

}  // namespace idan::model
