#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "idan/rng.hpp"

namespace idan {

std::string shape_str(const std::vector<int>& shape);
std::int64_t shape_numel(const std::vector<int>& shape);

namespace detail {

// One node of the per-forward-pass gradient tape. `backprop` reads this
// node's grad and accumulates into the inputs' grads; it receives the node
// by reference so the closure never owns its own output (no cycles).
template <typename S>
struct TensorNode {
    std::vector<int> shape;
    std::vector<S> data;
    std::vector<S> grad;  // allocated by backward()
    bool requires_grad = false;
    bool consumed = false;  // backward() already ran from this node
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backprop;
};

}  // namespace detail

// Dense float tensor, row-major, NCHW for rank-4. Value-semantic handle;
// the payload is immutable once another op has consumed it (only grad
// buffers and leaf parameter data are ever rewritten).
template <typename S>
class TensorT {
public:
    using Node = detail::TensorNode<S>;

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorT full(std::vector<int> shape, S value, bool requires_grad = false);
    static TensorT from_data(std::vector<int> shape, std::vector<S> data,
                             bool requires_grad = false);
    static TensorT scalar(S value);
    static TensorT uniform(std::vector<int> shape, Rng& rng, S lo, S hi,
                           bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

    std::span<const S> values() const { return node_->data; }
    // Leaf mutation only (parameter updates, test fixtures). Mutating a
    // tensor that already feeds a recorded graph is a logic error.
    std::span<S> mutable_values() { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return defined() && !node_->grad.empty(); }
    std::span<const S> grad() const { return node_->grad; }

    S item() const;
    // Flat index accessor plus the NCHW convenience form.
    S at(std::int64_t flat) const { return node_->data[static_cast<std::size_t>(flat)]; }
    S at(int n, int c, int y, int x) const;

    // Fresh leaf with copied data and no tape history.
    TensorT detached(bool requires_grad = false) const;

    std::shared_ptr<Node> node() const { return node_; }
    static TensorT wrap(std::shared_ptr<Node> node) { return TensorT(std::move(node)); }

private:
    explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;    // production dtype
using TensorD = TensorT<double>;  // 64-bit gradient-check mode

// ---- ops (all differentiable unless noted) --------------------------------

// bias may be default-constructed (= no bias).
template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& weight,
                  const TensorT<S>& bias, int stride, int padding);

// 2x2 window, stride 2; gradient routed to the first-found argmax.
template <typename S>
TensorT<S> max_pool2d(const TensorT<S>& input);

template <typename S>
TensorT<S> upsample_bilinear(const TensorT<S>& input, int factor);

// General bilinear resize, align-corners-false convention.
template <typename S>
TensorT<S> resize_bilinear(const TensorT<S>& input, int out_h, int out_w);

template <typename S> TensorT<S> relu(const TensorT<S>& t);
template <typename S> TensorT<S> sigmoid(const TensorT<S>& t);

template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b);
template <typename S>
std::pair<TensorT<S>, TensorT<S>> split_channels_half(const TensorT<S>& t);

template <typename S> TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> abs(const TensorT<S>& t);
template <typename S> TensorT<S> add_const(const TensorT<S>& t, S c);
template <typename S> TensorT<S> mul_const(const TensorT<S>& t, S c);

template <typename S> TensorT<S> reduce_sum(const TensorT<S>& t);  // -> shape {1}
template <typename S> TensorT<S> reduce_mean_channels(const TensorT<S>& t);  // NCHW -> N,1,H,W

// Non-differentiable prior-map plumbing; these reject requires_grad inputs.
template <typename S> TensorT<S> minmax_normalize_per_sample(const TensorT<S>& t);
template <typename S> TensorT<S> step_threshold(const TensorT<S>& t, S tau);
template <typename S> TensorT<S> stack_batch(const std::vector<TensorT<S>>& items);

template <typename S> void backward(const TensorT<S>& loss);

// Central-difference check of the whole reverse pass: returns
// max_i |analytic_i - numeric_i| / max(1e-8, |analytic_i| + |numeric_i|).
template <typename S>
double grad_check(const std::function<TensorT<S>(const TensorT<S>&)>& f,
                  const TensorT<S>& point, S epsilon);

// Same check restricted to a coordinate subset (large parameter groups).
template <typename S>
double grad_check_coords(const std::function<TensorT<S>(const TensorT<S>&)>& f,
                         const TensorT<S>& point, S epsilon,
                         const std::vector<std::int64_t>& coords);

template <typename To, typename From>
TensorT<To> cast_tensor(const TensorT<From>& t, bool requires_grad = false);

// ---- parameters and optimizers --------------------------------------------

template <typename S>
struct ParameterT {
    std::string name;
    TensorT<S> value;  // requires_grad = true
};

using Parameter = ParameterT<float>;

// bound = sqrt(6 / fan_in), the ReLU-family uniform init.
template <typename S>
TensorT<S> kaiming_uniform(std::vector<int> shape, std::int64_t fan_in, Rng& rng);

enum class OptKind { sgd, adam };

template <typename S>
class OptimizerT {
public:
    OptimizerT(OptKind kind, S learning_rate, std::vector<ParameterT<S>*> params);

    void step();
    std::int64_t step_count() const { return step_count_; }

private:
    OptKind kind_;
    S lr_;
    std::vector<ParameterT<S>*> params_;
    std::vector<std::vector<S>> m_, v_;  // adam moments, one pair per parameter
    std::int64_t step_count_ = 0;
};

using Optimizer = OptimizerT<float>;

}  // namespace idan
