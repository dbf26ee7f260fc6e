#include "idan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace idan {

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

namespace {

template <typename S>
using NodePtr = std::shared_ptr<detail::TensorNode<S>>;

template <typename S>
NodePtr<S> make_node(std::vector<int> shape, std::vector<S> data, bool requires_grad) {
    auto node = std::make_shared<detail::TensorNode<S>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return node;
}

template <typename S>
void check_positive_shape(const std::vector<int>& shape, const char* who) {
    if (shape.empty())
        throw std::invalid_argument(std::string(who) + ": empty shape");
    for (int d : shape)
        if (d <= 0)
            throw std::invalid_argument(std::string(who) + ": non-positive dim in " +
                                        shape_str(shape));
}

template <typename S>
void require_rank4(const TensorT<S>& t, const char* who) {
    if (t.rank() != 4)
        throw std::invalid_argument(std::string(who) + ": expected rank-4 NCHW tensor, got " +
                                    shape_str(t.shape()));
}

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* who) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Accumulates v into the grad buffer of `input` if it participates in the tape.
template <typename S>
inline S* grad_of(const NodePtr<S>& n) {
    return n->requires_grad ? n->grad.data() : nullptr;
}

}  // namespace

// ---- construction ----------------------------------------------------------

template <typename S>
TensorT<S> TensorT<S>::zeros(std::vector<int> shape, bool requires_grad) {
    check_positive_shape<S>(shape, "zeros");
    std::vector<S> data(static_cast<std::size_t>(shape_numel(shape)), S(0));
    return TensorT(make_node<S>(std::move(shape), std::move(data), requires_grad));
}

template <typename S>
TensorT<S> TensorT<S>::full(std::vector<int> shape, S value, bool requires_grad) {
    check_positive_shape<S>(shape, "full");
    std::vector<S> data(static_cast<std::size_t>(shape_numel(shape)), value);
    return TensorT(make_node<S>(std::move(shape), std::move(data), requires_grad));
}

template <typename S>
TensorT<S> TensorT<S>::from_data(std::vector<int> shape, std::vector<S> data,
                                 bool requires_grad) {
    check_positive_shape<S>(shape, "from_data");
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
        throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                    " values for shape " + shape_str(shape));
    return TensorT(make_node<S>(std::move(shape), std::move(data), requires_grad));
}

template <typename S>
TensorT<S> TensorT<S>::scalar(S value) {
    return from_data({1}, {value});
}

template <typename S>
TensorT<S> TensorT<S>::uniform(std::vector<int> shape, Rng& rng, S lo, S hi,
                               bool requires_grad) {
    check_positive_shape<S>(shape, "uniform");
    std::vector<S> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = static_cast<S>(rng.uniform(lo, hi));
    return TensorT(make_node<S>(std::move(shape), std::move(data), requires_grad));
}

template <typename S>
S TensorT<S>::item() const {
    if (numel() != 1)
        throw std::invalid_argument("item: tensor has " + std::to_string(numel()) +
                                    " elements, expected 1");
    return node_->data[0];
}

template <typename S>
S TensorT<S>::at(int n, int c, int y, int x) const {
    const auto& s = node_->shape;
    std::int64_t idx = ((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + y) * s[3] + x;
    return node_->data[static_cast<std::size_t>(idx)];
}

template <typename S>
TensorT<S> TensorT<S>::detached(bool requires_grad) const {
    return TensorT(make_node<S>(node_->shape, node_->data, requires_grad));
}

// ---- op helpers ------------------------------------------------------------

namespace {

template <typename S>
TensorT<S> record_unary(const TensorT<S>& in, std::vector<int> shape, std::vector<S> data,
                        std::function<void(detail::TensorNode<S>&)> backprop) {
    auto node = make_node<S>(std::move(shape), std::move(data), in.requires_grad());
    if (in.requires_grad()) {
        node->inputs = {in.node()};
        node->backprop = std::move(backprop);
    }
    return TensorT<S>::wrap(node);
}

template <typename S>
TensorT<S> record_binary(const TensorT<S>& a, const TensorT<S>& b, std::vector<int> shape,
                         std::vector<S> data,
                         std::function<void(detail::TensorNode<S>&)> backprop) {
    const bool rg = a.requires_grad() || b.requires_grad();
    auto node = make_node<S>(std::move(shape), std::move(data), rg);
    if (rg) {
        node->inputs = {a.node(), b.node()};
        node->backprop = std::move(backprop);
    }
    return TensorT<S>::wrap(node);
}

}  // namespace

// ---- convolution -----------------------------------------------------------

template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                  int stride, int padding) {
    require_rank4(input, "conv2d input");
    require_rank4(weight, "conv2d weight");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");

    const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Co = weight.dim(0), K = weight.dim(2);
    if (weight.dim(1) != Ci)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                    " input channels but input is " + shape_str(input.shape()) +
                                    ", weight " + shape_str(weight.shape()));
    if (weight.dim(2) != weight.dim(3))
        throw std::invalid_argument("conv2d: non-square kernel " + shape_str(weight.shape()));
    if (K > H + 2 * padding || K > W + 2 * padding)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(K) +
                                    " exceeds padded input " + shape_str(input.shape()));
    if (bias.defined()) {
        if (bias.rank() != 1 || bias.dim(0) != Co)
            throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                        " does not match " + std::to_string(Co) + " filters");
    }

    const int Ho = (H + 2 * padding - K) / stride + 1;
    const int Wo = (W + 2 * padding - K) / stride + 1;

    std::vector<S> out(static_cast<std::size_t>(N) * Co * Ho * Wo, S(0));
    const S* in = input.values().data();
    const S* wt = weight.values().data();

    if (bias.defined()) {
        const S* bv = bias.values().data();
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co) {
                S* dst = out.data() + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
                std::fill(dst, dst + static_cast<std::size_t>(Ho) * Wo, bv[co]);
            }
    }

    // Kernel-offset outer loops: the inner loop is a contiguous-row FMA.
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            S* out_base = out.data() + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
            for (int ci = 0; ci < Ci; ++ci) {
                const S* in_base = in + (static_cast<std::size_t>(n) * Ci + ci) * H * W;
                const S* w_base = wt + (static_cast<std::size_t>(co) * Ci + ci) * K * K;
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const S w = w_base[ky * K + kx];
                        if (w == S(0)) continue;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride - padding + ky;
                            if (iy < 0 || iy >= H) continue;
                            const S* in_row = in_base + static_cast<std::size_t>(iy) * W;
                            S* out_row = out_base + static_cast<std::size_t>(oy) * Wo;
                            if (stride == 1) {
                                const int lo = std::max(0, padding - kx);
                                const int hi = std::min(Wo, W - kx + padding);
                                const S* src = in_row + kx - padding;
                                for (int ox = lo; ox < hi; ++ox)
                                    out_row[ox] += w * src[ox];
                            } else {
                                for (int ox = 0; ox < Wo; ++ox) {
                                    const int ix = ox * stride - padding + kx;
                                    if (ix < 0 || ix >= W) continue;
                                    out_row[ox] += w * in_row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    const bool rg = input.requires_grad() || weight.requires_grad() ||
                    (bias.defined() && bias.requires_grad());
    auto node = make_node<S>({N, Co, Ho, Wo}, std::move(out), rg);
    if (rg) {
        node->inputs = {input.node(), weight.node()};
        if (bias.defined()) node->inputs.push_back(bias.node());
        auto in_node = input.node();
        auto w_node = weight.node();
        auto b_node = bias.defined() ? bias.node() : nullptr;
        node->backprop = [in_node, w_node, b_node, N, Ci, Co, H, W, K, Ho, Wo, stride,
                          padding](detail::TensorNode<S>& self) {
            const S* go = self.grad.data();
            const S* in = in_node->data.data();
            const S* wt = w_node->data.data();
            S* gin = grad_of(in_node);
            S* gw = grad_of(w_node);

            for (int n = 0; n < N; ++n) {
                for (int co = 0; co < Co; ++co) {
                    const S* go_base = go + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const S* in_base = in + (static_cast<std::size_t>(n) * Ci + ci) * H * W;
                        S* gin_base =
                            gin ? gin + (static_cast<std::size_t>(n) * Ci + ci) * H * W : nullptr;
                        const std::size_t w_off = (static_cast<std::size_t>(co) * Ci + ci) * K * K;
                        for (int ky = 0; ky < K; ++ky) {
                            for (int kx = 0; kx < K; ++kx) {
                                const S w = wt[w_off + ky * K + kx];
                                S w_acc = S(0);
                                for (int oy = 0; oy < Ho; ++oy) {
                                    const int iy = oy * stride - padding + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    const S* go_row = go_base + static_cast<std::size_t>(oy) * Wo;
                                    const S* in_row = in_base + static_cast<std::size_t>(iy) * W;
                                    S* gin_row =
                                        gin_base ? gin_base + static_cast<std::size_t>(iy) * W
                                                 : nullptr;
                                    if (stride == 1) {
                                        const int lo = std::max(0, padding - kx);
                                        const int hi = std::min(Wo, W - kx + padding);
                                        const int shift = kx - padding;
                                        if (gw) {
                                            const S* src = in_row + shift;
                                            for (int ox = lo; ox < hi; ++ox)
                                                w_acc += go_row[ox] * src[ox];
                                        }
                                        if (gin_row) {
                                            S* dst = gin_row + shift;
                                            for (int ox = lo; ox < hi; ++ox)
                                                dst[ox] += w * go_row[ox];
                                        }
                                    } else {
                                        for (int ox = 0; ox < Wo; ++ox) {
                                            const int ix = ox * stride - padding + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            if (gw) w_acc += go_row[ox] * in_row[ix];
                                            if (gin_row) gin_row[ix] += w * go_row[ox];
                                        }
                                    }
                                }
                                if (gw) gw[w_off + ky * K + kx] += w_acc;
                            }
                        }
                    }
                }
            }
            if (b_node && b_node->requires_grad) {
                S* gb = b_node->grad.data();
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        const S* go_base =
                            go + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
                        S acc = S(0);
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i)
                            acc += go_base[i];
                        gb[co] += acc;
                    }
            }
        };
    }
    return TensorT<S>::wrap(node);
}

// ---- pooling ---------------------------------------------------------------

template <typename S>
TensorT<S> max_pool2d(const TensorT<S>& input) {
    require_rank4(input, "max_pool2d");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("max_pool2d: spatial dims must be even, got " +
                                    shape_str(input.shape()));
    const int Ho = H / 2, Wo = W / 2;
    const S* in = input.values().data();
    std::vector<S> out(static_cast<std::size_t>(N) * C * Ho * Wo);
    std::vector<std::int64_t> argmax(out.size());

    std::size_t o = 0;
    for (int nc = 0; nc < N * C; ++nc) {
        const S* plane = in + static_cast<std::size_t>(nc) * H * W;
        const std::int64_t plane_off = static_cast<std::int64_t>(nc) * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox, ++o) {
                const int iy = oy * 2, ix = ox * 2;
                // first-found tie-break: scan order (0,0),(0,1),(1,0),(1,1)
                std::int64_t best = static_cast<std::int64_t>(iy) * W + ix;
                S best_v = plane[best];
                const std::int64_t cand[3] = {best + 1, best + W, best + W + 1};
                for (std::int64_t c : cand) {
                    if (plane[c] > best_v) {
                        best_v = plane[c];
                        best = c;
                    }
                }
                out[o] = best_v;
                argmax[o] = plane_off + best;
            }
        }
    }

    auto in_node = input.node();
    return record_unary<S>(input, {N, C, Ho, Wo}, std::move(out),
                           [in_node, argmax = std::move(argmax)](detail::TensorNode<S>& self) {
                               S* gin = in_node->grad.data();
                               const S* go = self.grad.data();
                               for (std::size_t i = 0; i < argmax.size(); ++i)
                                   gin[static_cast<std::size_t>(argmax[i])] += go[i];
                           });
}

// ---- bilinear resize -------------------------------------------------------

namespace {

struct LinTap {
    int i0, i1;
    double w1;  // weight of i1; i0 gets 1-w1
};

// align-corners-false source taps for one axis
inline std::vector<LinTap> bilinear_taps(int in_n, int out_n) {
    std::vector<LinTap> taps(static_cast<std::size_t>(out_n));
    const double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        double fl = std::floor(src);
        int i0 = static_cast<int>(fl);
        double t = src - fl;
        int i1 = i0 + 1;
        if (i0 < 0) { i0 = 0; }
        if (i1 < 0) { i1 = 0; }
        if (i0 > in_n - 1) { i0 = in_n - 1; }
        if (i1 > in_n - 1) { i1 = in_n - 1; }
        taps[static_cast<std::size_t>(o)] = {i0, i1, t};
    }
    return taps;
}

}  // namespace

template <typename S>
TensorT<S> resize_bilinear(const TensorT<S>& input, int out_h, int out_w) {
    require_rank4(input, "resize_bilinear");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize_bilinear: output dims must be positive");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const auto ty = bilinear_taps(H, out_h);
    const auto tx = bilinear_taps(W, out_w);

    const S* in = input.values().data();
    std::vector<S> out(static_cast<std::size_t>(N) * C * out_h * out_w);
    std::size_t o = 0;
    for (int nc = 0; nc < N * C; ++nc) {
        const S* plane = in + static_cast<std::size_t>(nc) * H * W;
        for (int oy = 0; oy < out_h; ++oy) {
            const auto& y = ty[static_cast<std::size_t>(oy)];
            const S* r0 = plane + static_cast<std::size_t>(y.i0) * W;
            const S* r1 = plane + static_cast<std::size_t>(y.i1) * W;
            for (int ox = 0; ox < out_w; ++ox, ++o) {
                const auto& x = tx[static_cast<std::size_t>(ox)];
                const double top = r0[x.i0] * (1.0 - x.w1) + r0[x.i1] * x.w1;
                const double bot = r1[x.i0] * (1.0 - x.w1) + r1[x.i1] * x.w1;
                out[o] = static_cast<S>(top * (1.0 - y.w1) + bot * y.w1);
            }
        }
    }

    auto in_node = input.node();
    return record_unary<S>(
        input, {N, C, out_h, out_w}, std::move(out),
        [in_node, ty, tx, N, C, H, W, out_h, out_w](detail::TensorNode<S>& self) {
            S* gin = in_node->grad.data();
            const S* go = self.grad.data();
            std::size_t o = 0;
            for (int nc = 0; nc < N * C; ++nc) {
                S* gplane = gin + static_cast<std::size_t>(nc) * H * W;
                for (int oy = 0; oy < out_h; ++oy) {
                    const auto& y = ty[static_cast<std::size_t>(oy)];
                    for (int ox = 0; ox < out_w; ++ox, ++o) {
                        const auto& x = tx[static_cast<std::size_t>(ox)];
                        const S g = go[o];
                        gplane[y.i0 * W + x.i0] += static_cast<S>(g * (1.0 - y.w1) * (1.0 - x.w1));
                        gplane[y.i0 * W + x.i1] += static_cast<S>(g * (1.0 - y.w1) * x.w1);
                        gplane[y.i1 * W + x.i0] += static_cast<S>(g * y.w1 * (1.0 - x.w1));
                        gplane[y.i1 * W + x.i1] += static_cast<S>(g * y.w1 * x.w1);
                    }
                }
            }
        });
}

template <typename S>
TensorT<S> upsample_bilinear(const TensorT<S>& input, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
    require_rank4(input, "upsample_bilinear");
    if (factor == 1) {
        // identity; still recorded so gradients flow
        auto in_node = input.node();
        std::vector<S> copy(input.values().begin(), input.values().end());
        return record_unary<S>(input, input.shape(), std::move(copy),
                               [in_node](detail::TensorNode<S>& self) {
                                   S* gin = in_node->grad.data();
                                   const S* go = self.grad.data();
                                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                                       gin[i] += go[i];
                               });
    }
    return resize_bilinear(input, input.dim(2) * factor, input.dim(3) * factor);
}

// ---- activations -----------------------------------------------------------

template <typename S>
TensorT<S> relu(const TensorT<S>& t) {
    const S* in = t.values().data();
    std::vector<S> out(static_cast<std::size_t>(t.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > S(0) ? in[i] : S(0);
    auto in_node = t.node();
    return record_unary<S>(t, t.shape(), std::move(out), [in_node](detail::TensorNode<S>& self) {
        S* gin = in_node->grad.data();
        const S* go = self.grad.data();
        const S* x = in_node->data.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (x[i] > S(0)) gin[i] += go[i];  // subgradient 0 at 0
    });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& t) {
    const S* in = t.values().data();
    std::vector<S> out(static_cast<std::size_t>(t.numel()));
    const S hi = std::nextafter(S(1), S(0));
    const S lo = std::numeric_limits<S>::min();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const S x = in[i];
        S y;
        if (x >= S(0)) {
            y = S(1) / (S(1) + std::exp(-x));
        } else {
            const S e = std::exp(x);
            y = e / (S(1) + e);
        }
        // keep the open-interval contract in finite precision
        out[i] = std::min(hi, std::max(lo, y));
    }
    auto in_node = t.node();
    std::vector<S> saved = out;
    return record_unary<S>(t, t.shape(), std::move(out),
                           [in_node, saved = std::move(saved)](detail::TensorNode<S>& self) {
                               S* gin = in_node->grad.data();
                               const S* go = self.grad.data();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                   gin[i] += go[i] * saved[i] * (S(1) - saved[i]);
                           });
}

// ---- channel plumbing ------------------------------------------------------

template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
    require_rank4(a, "concat_channels");
    require_rank4(b, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    std::vector<S> out(static_cast<std::size_t>(N) * (Ca + Cb) * hw);
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    for (int n = 0; n < N; ++n) {
        std::copy(pa + n * Ca * hw, pa + (n + 1) * Ca * hw,
                  out.begin() + static_cast<std::int64_t>(n) * (Ca + Cb) * hw);
        std::copy(pb + n * Cb * hw, pb + (n + 1) * Cb * hw,
                  out.begin() + static_cast<std::int64_t>(n) * (Ca + Cb) * hw + Ca * hw);
    }
    auto na = a.node();
    auto nb = b.node();
    return record_binary<S>(a, b, {N, Ca + Cb, H, W}, std::move(out),
                            [na, nb, N, Ca, Cb, hw](detail::TensorNode<S>& self) {
                                const S* go = self.grad.data();
                                for (int n = 0; n < N; ++n) {
                                    const S* ga = go + static_cast<std::int64_t>(n) * (Ca + Cb) * hw;
                                    const S* gb = ga + Ca * hw;
                                    if (na->requires_grad) {
                                        S* dst = na->grad.data() + static_cast<std::int64_t>(n) * Ca * hw;
                                        for (std::int64_t i = 0; i < Ca * hw; ++i) dst[i] += ga[i];
                                    }
                                    if (nb->requires_grad) {
                                        S* dst = nb->grad.data() + static_cast<std::int64_t>(n) * Cb * hw;
                                        for (std::int64_t i = 0; i < Cb * hw; ++i) dst[i] += gb[i];
                                    }
                                }
                            });
}

namespace {

template <typename S>
TensorT<S> channel_slice(const TensorT<S>& t, int c0, int c1) {
    const int N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const int Cs = c1 - c0;
    std::vector<S> out(static_cast<std::size_t>(N) * Cs * hw);
    const S* in = t.values().data();
    for (int n = 0; n < N; ++n)
        std::copy(in + (static_cast<std::int64_t>(n) * C + c0) * hw,
                  in + (static_cast<std::int64_t>(n) * C + c1) * hw,
                  out.begin() + static_cast<std::int64_t>(n) * Cs * hw);
    auto tn = t.node();
    return record_unary<S>(t, {N, Cs, H, W}, std::move(out),
                           [tn, N, C, c0, Cs, hw](detail::TensorNode<S>& self) {
                               S* gin = tn->grad.data();
                               const S* go = self.grad.data();
                               for (int n = 0; n < N; ++n) {
                                   S* dst = gin + (static_cast<std::int64_t>(n) * C + c0) * hw;
                                   const S* src = go + static_cast<std::int64_t>(n) * Cs * hw;
                                   for (std::int64_t i = 0; i < Cs * hw; ++i) dst[i] += src[i];
                               }
                           });
}

}  // namespace

template <typename S>
std::pair<TensorT<S>, TensorT<S>> split_channels_half(const TensorT<S>& t) {
    require_rank4(t, "split_channels_half");
    const int C = t.dim(1);
    if (C % 2 != 0)
        throw std::invalid_argument("split_channels_half: odd channel count in " +
                                    shape_str(t.shape()));
    return {channel_slice(t, 0, C / 2), channel_slice(t, C / 2, C)};
}

// ---- elementwise -----------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "add");
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    std::vector<S> out(static_cast<std::size_t>(a.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    auto na = a.node();
    auto nb = b.node();
    return record_binary<S>(a, b, a.shape(), std::move(out),
                            [na, nb](detail::TensorNode<S>& self) {
                                const S* go = self.grad.data();
                                if (na->requires_grad) {
                                    S* g = na->grad.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += go[i];
                                }
                                if (nb->requires_grad) {
                                    S* g = nb->grad.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += go[i];
                                }
                            });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "sub");
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    std::vector<S> out(static_cast<std::size_t>(a.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
    auto na = a.node();
    auto nb = b.node();
    return record_binary<S>(a, b, a.shape(), std::move(out),
                            [na, nb](detail::TensorNode<S>& self) {
                                const S* go = self.grad.data();
                                if (na->requires_grad) {
                                    S* g = na->grad.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += go[i];
                                }
                                if (nb->requires_grad) {
                                    S* g = nb->grad.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= go[i];
                                }
                            });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "mul");
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    std::vector<S> out(static_cast<std::size_t>(a.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
    auto na = a.node();
    auto nb = b.node();
    return record_binary<S>(a, b, a.shape(), std::move(out),
                            [na, nb](detail::TensorNode<S>& self) {
                                const S* go = self.grad.data();
                                if (na->requires_grad) {
                                    S* g = na->grad.data();
                                    const S* other = nb->data.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                        g[i] += go[i] * other[i];
                                }
                                if (nb->requires_grad) {
                                    S* g = nb->grad.data();
                                    const S* other = na->data.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                        g[i] += go[i] * other[i];
                                }
                            });
}

template <typename S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "div");
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    std::vector<S> out(static_cast<std::size_t>(a.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] / pb[i];
    auto na = a.node();
    auto nb = b.node();
    return record_binary<S>(a, b, a.shape(), std::move(out),
                            [na, nb](detail::TensorNode<S>& self) {
                                const S* go = self.grad.data();
                                const S* x = na->data.data();
                                const S* y = nb->data.data();
                                if (na->requires_grad) {
                                    S* g = na->grad.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                        g[i] += go[i] / y[i];
                                }
                                if (nb->requires_grad) {
                                    S* g = nb->grad.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                        g[i] -= go[i] * x[i] / (y[i] * y[i]);
                                }
                            });
}

template <typename S>
TensorT<S> abs(const TensorT<S>& t) {
    const S* in = t.values().data();
    std::vector<S> out(static_cast<std::size_t>(t.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] < S(0) ? -in[i] : in[i];
    auto tn = t.node();
    return record_unary<S>(t, t.shape(), std::move(out), [tn](detail::TensorNode<S>& self) {
        S* gin = tn->grad.data();
        const S* go = self.grad.data();
        const S* x = tn->data.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            // subgradient 0 at 0
            if (x[i] > S(0))
                gin[i] += go[i];
            else if (x[i] < S(0))
                gin[i] -= go[i];
        }
    });
}

template <typename S>
TensorT<S> add_const(const TensorT<S>& t, S c) {
    const S* in = t.values().data();
    std::vector<S> out(static_cast<std::size_t>(t.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] + c;
    auto tn = t.node();
    return record_unary<S>(t, t.shape(), std::move(out), [tn](detail::TensorNode<S>& self) {
        S* gin = tn->grad.data();
        const S* go = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gin[i] += go[i];
    });
}

template <typename S>
TensorT<S> mul_const(const TensorT<S>& t, S c) {
    const S* in = t.values().data();
    std::vector<S> out(static_cast<std::size_t>(t.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * c;
    auto tn = t.node();
    return record_unary<S>(t, t.shape(), std::move(out), [tn, c](detail::TensorNode<S>& self) {
        S* gin = tn->grad.data();
        const S* go = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gin[i] += go[i] * c;
    });
}

// ---- reductions ------------------------------------------------------------

template <typename S>
TensorT<S> reduce_sum(const TensorT<S>& t) {
    const S* in = t.values().data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < t.numel(); ++i) acc += in[static_cast<std::size_t>(i)];
    auto tn = t.node();
    return record_unary<S>(t, {1}, {static_cast<S>(acc)}, [tn](detail::TensorNode<S>& self) {
        S* gin = tn->grad.data();
        const S g = self.grad[0];
        for (std::size_t i = 0; i < tn->grad.size(); ++i) gin[i] += g;
    });
}

template <typename S>
TensorT<S> reduce_mean_channels(const TensorT<S>& t) {
    require_rank4(t, "reduce_mean_channels");
    const int N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    std::vector<S> out(static_cast<std::size_t>(N) * hw, S(0));
    const S* in = t.values().data();
    for (int n = 0; n < N; ++n) {
        S* dst = out.data() + static_cast<std::int64_t>(n) * hw;
        for (int c = 0; c < C; ++c) {
            const S* src = in + (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
        }
        const S inv = S(1) / static_cast<S>(C);
        for (std::int64_t i = 0; i < hw; ++i) dst[i] *= inv;
    }
    auto tn = t.node();
    return record_unary<S>(t, {N, 1, H, W}, std::move(out),
                           [tn, N, C, hw](detail::TensorNode<S>& self) {
                               S* gin = tn->grad.data();
                               const S* go = self.grad.data();
                               const S inv = S(1) / static_cast<S>(C);
                               for (int n = 0; n < N; ++n) {
                                   const S* src = go + static_cast<std::int64_t>(n) * hw;
                                   for (int c = 0; c < C; ++c) {
                                       S* dst = gin + (static_cast<std::int64_t>(n) * C + c) * hw;
                                       for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i] * inv;
                                   }
                               }
                           });
}

// ---- non-differentiable map plumbing ----------------------------------------

template <typename S>
TensorT<S> minmax_normalize_per_sample(const TensorT<S>& t) {
    if (t.requires_grad())
        throw std::invalid_argument("minmax_normalize_per_sample is not differentiable");
    require_rank4(t, "minmax_normalize_per_sample");
    const int N = t.dim(0);
    const std::int64_t per = t.numel() / N;
    const S* in = t.values().data();
    std::vector<S> out(static_cast<std::size_t>(t.numel()));
    for (int n = 0; n < N; ++n) {
        const S* src = in + static_cast<std::int64_t>(n) * per;
        S* dst = out.data() + static_cast<std::int64_t>(n) * per;
        S mn = src[0], mx = src[0];
        for (std::int64_t i = 1; i < per; ++i) {
            mn = std::min(mn, src[i]);
            mx = std::max(mx, src[i]);
        }
        if (mx > mn) {
            const S inv = S(1) / (mx - mn);
            for (std::int64_t i = 0; i < per; ++i) dst[i] = (src[i] - mn) * inv;
        } else {
            // constant sample: degenerate convention, all zeros
            for (std::int64_t i = 0; i < per; ++i) dst[i] = S(0);
        }
    }
    return TensorT<S>::from_data(t.shape(), std::move(out));
}

template <typename S>
TensorT<S> step_threshold(const TensorT<S>& t, S tau) {
    if (t.requires_grad())
        throw std::invalid_argument("step_threshold is not differentiable");
    const S* in = t.values().data();
    std::vector<S> out(static_cast<std::size_t>(t.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > tau ? S(1) : S(0);
    return TensorT<S>::from_data(t.shape(), std::move(out));
}

template <typename S>
TensorT<S> stack_batch(const std::vector<TensorT<S>>& items) {
    if (items.empty()) throw std::invalid_argument("stack_batch: empty batch");
    const auto& s0 = items[0].shape();
    if (s0.size() != 3)
        throw std::invalid_argument("stack_batch: expected rank-3 items, got " + shape_str(s0));
    std::vector<S> out;
    out.reserve(static_cast<std::size_t>(items.size()) * items[0].numel());
    for (const auto& it : items) {
        if (it.requires_grad())
            throw std::invalid_argument("stack_batch: inputs must not require grad");
        if (it.shape() != s0)
            throw std::invalid_argument("stack_batch: mixed shapes " + shape_str(s0) + " vs " +
                                        shape_str(it.shape()));
        out.insert(out.end(), it.values().begin(), it.values().end());
    }
    return TensorT<S>::from_data({static_cast<int>(items.size()), s0[0], s0[1], s0[2]},
                                 std::move(out));
}

// ---- backward --------------------------------------------------------------

template <typename S>
void backward(const TensorT<S>& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(loss.shape()));
    auto root = loss.node();
    if (root->consumed)
        throw std::runtime_error("backward: called twice without a new forward pass");
    if (!root->requires_grad)
        throw std::runtime_error("backward: loss does not depend on any requires_grad tensor");

    // iterative DFS post-order over the tape
    std::vector<detail::TensorNode<S>*> topo;
    std::unordered_set<detail::TensorNode<S>*> seen;
    std::vector<std::pair<detail::TensorNode<S>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            auto* child = node->inputs[next].get();
            ++next;
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* n : topo) n->grad.assign(n->data.size(), S(0));
    root->grad[0] = S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
    root->consumed = true;
}

// ---- gradient checking -----------------------------------------------------

template <typename S>
double grad_check_coords(const std::function<TensorT<S>(const TensorT<S>&)>& f,
                         const TensorT<S>& point, S epsilon,
                         const std::vector<std::int64_t>& coords) {
    TensorT<S> p = point.detached(/*requires_grad=*/true);
    TensorT<S> loss = f(p);
    backward(loss);
    std::vector<S> analytic(p.grad().begin(), p.grad().end());

    double max_rel = 0.0;
    std::vector<S> base(point.values().begin(), point.values().end());
    for (std::int64_t i : coords) {
        const auto ui = static_cast<std::size_t>(i);
        std::vector<S> vp = base, vm = base;
        vp[ui] += epsilon;
        vm[ui] -= epsilon;
        const double fp =
            static_cast<double>(f(TensorT<S>::from_data(point.shape(), std::move(vp))).item());
        const double fm =
            static_cast<double>(f(TensorT<S>::from_data(point.shape(), std::move(vm))).item());
        const double numeric = (fp - fm) / (2.0 * static_cast<double>(epsilon));
        const double a = static_cast<double>(analytic[ui]);
        const double rel = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

template <typename S>
double grad_check(const std::function<TensorT<S>(const TensorT<S>&)>& f,
                  const TensorT<S>& point, S epsilon) {
    std::vector<std::int64_t> coords(static_cast<std::size_t>(point.numel()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
    return grad_check_coords(f, point, epsilon, coords);
}

// ---- cast ------------------------------------------------------------------

template <typename To, typename From>
TensorT<To> cast_tensor(const TensorT<From>& t, bool requires_grad) {
    std::vector<To> data(static_cast<std::size_t>(t.numel()));
    const From* in = t.values().data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<To>(in[i]);
    return TensorT<To>::from_data(t.shape(), std::move(data), requires_grad);
}

// ---- init and optimizers ----------------------------------------------------

template <typename S>
TensorT<S> kaiming_uniform(std::vector<int> shape, std::int64_t fan_in, Rng& rng) {
    if (fan_in <= 0) throw std::invalid_argument("kaiming_uniform: fan_in must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return TensorT<S>::uniform(std::move(shape), rng, static_cast<S>(-bound),
                               static_cast<S>(bound), /*requires_grad=*/true);
}

template <typename S>
OptimizerT<S>::OptimizerT(OptKind kind, S learning_rate, std::vector<ParameterT<S>*> params)
    : kind_(kind), lr_(learning_rate), params_(std::move(params)) {
    if (lr_ <= S(0)) throw std::invalid_argument("optimizer: learning rate must be positive");
    if (kind_ == OptKind::adam) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto n = static_cast<std::size_t>(params_[i]->value.numel());
            m_[i].assign(n, S(0));
            v_[i].assign(n, S(0));
        }
    }
}

template <typename S>
void OptimizerT<S>::step() {
    ++step_count_;
    constexpr S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
    const S bc1 = S(1) - static_cast<S>(std::pow(0.9, static_cast<double>(step_count_)));
    const S bc2 = S(1) - static_cast<S>(std::pow(0.999, static_cast<double>(step_count_)));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& param = *params_[pi];
        if (!param.value.has_grad()) continue;  // no backward yet: leave untouched
        auto data = param.value.mutable_values();
        const auto g = param.value.grad();
        if (kind_ == OptKind::sgd) {
            for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr_ * g[i];
        } else {
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (std::size_t i = 0; i < data.size(); ++i) {
                m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
                v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
                const S mh = m[i] / bc1;
                const S vh = v[i] / bc2;
                data[i] -= lr_ * mh / (std::sqrt(vh) + eps);
            }
        }
    }
}

// ---- explicit instantiations -------------------------------------------------

template class TensorT<float>;
template class TensorT<double>;
template class OptimizerT<float>;
template class OptimizerT<double>;

#define IDAN_INSTANTIATE_OPS(S)                                                              \
    template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,  \
                                  int, int);                                                 \
    template TensorT<S> max_pool2d<S>(const TensorT<S>&);                                    \
    template TensorT<S> upsample_bilinear<S>(const TensorT<S>&, int);                        \
    template TensorT<S> resize_bilinear<S>(const TensorT<S>&, int, int);                     \
    template TensorT<S> relu<S>(const TensorT<S>&);                                          \
    template TensorT<S> sigmoid<S>(const TensorT<S>&);                                       \
    template TensorT<S> concat_channels<S>(const TensorT<S>&, const TensorT<S>&);            \
    template std::pair<TensorT<S>, TensorT<S>> split_channels_half<S>(const TensorT<S>&);    \
    template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                        \
    template TensorT<S> sub<S>(const TensorT<S>&, const TensorT<S>&);                        \
    template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&);                        \
    template TensorT<S> div<S>(const TensorT<S>&, const TensorT<S>&);                        \
    template TensorT<S> abs<S>(const TensorT<S>&);                                           \
    template TensorT<S> add_const<S>(const TensorT<S>&, S);                                  \
    template TensorT<S> mul_const<S>(const TensorT<S>&, S);                                  \
    template TensorT<S> reduce_sum<S>(const TensorT<S>&);                                    \
    template TensorT<S> reduce_mean_channels<S>(const TensorT<S>&);                          \
    template TensorT<S> minmax_normalize_per_sample<S>(const TensorT<S>&);                   \
    template TensorT<S> step_threshold<S>(const TensorT<S>&, S);                             \
    template TensorT<S> stack_batch<S>(const std::vector<TensorT<S>>&);                      \
    template void backward<S>(const TensorT<S>&);                                            \
    template double grad_check<S>(const std::function<TensorT<S>(const TensorT<S>&)>&,       \
                                  const TensorT<S>&, S);                                     \
    template double grad_check_coords<S>(const std::function<TensorT<S>(const TensorT<S>&)>&,\
                                         const TensorT<S>&, S,                               \
                                         const std::vector<std::int64_t>&);                  \
    template TensorT<S> kaiming_uniform<S>(std::vector<int>, std::int64_t, Rng&);

IDAN_INSTANTIATE_OPS(float)
IDAN_INSTANTIATE_OPS(double)

template TensorT<double> cast_tensor<double, float>(const TensorT<float>&, bool);
template TensorT<float> cast_tensor<float, double>(const TensorT<double>&, bool);
template TensorT<float> cast_tensor<float, float>(const TensorT<float>&, bool);
template TensorT<double> cast_tensor<double, double>(const TensorT<double>&, bool);

}  // namespace idan
