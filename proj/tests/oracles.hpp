#pragma once

// Reference implementations used as independent oracles. These deliberately
// take the dumbest correct route (nested loops, set arithmetic) and stay
// separate from the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>
#include <utility>
#include <vector>

#include "idan/image.hpp"
#include "idan/imgproc.hpp"
#include "idan/rng.hpp"
#include "idan/tensor.hpp"

namespace oracle {

// Direct six-nested-loop convolution, zero padding.
template <typename S>
idan::TensorT<S> conv2d_reference(const idan::TensorT<S>& input, const idan::TensorT<S>& weight,
                                  const idan::TensorT<S>& bias, int stride, int padding) {
    const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Co = weight.dim(0), K = weight.dim(2);
    const int Ho = (H + 2 * padding - K) / stride + 1;
    const int Wo = (W + 2 * padding - K) / stride + 1;
    std::vector<S> out(static_cast<std::size_t>(N) * Co * Ho * Wo, S(0));
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    S acc = bias.defined() ? bias.values()[static_cast<std::size_t>(co)] : S(0);
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                const int iy = oy * stride - padding + ky;
                                const int ix = ox * stride - padding + kx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += input.at(n, ci, iy, ix) * weight.at(co, ci, ky, kx);
                            }
                    out[static_cast<std::size_t>(
                        ((static_cast<std::int64_t>(n) * Co + co) * Ho + oy) * Wo + ox)] = acc;
                }
    return idan::TensorT<S>::from_data({N, Co, Ho, Wo}, std::move(out));
}

// Windowed max over 2x2, loop form.
template <typename S>
idan::TensorT<S> max_pool2d_reference(const idan::TensorT<S>& input) {
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    std::vector<S> out;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < H / 2; ++oy)
                for (int ox = 0; ox < W / 2; ++ox) {
                    S m = input.at(n, c, oy * 2, ox * 2);
                    m = std::max(m, input.at(n, c, oy * 2, ox * 2 + 1));
                    m = std::max(m, input.at(n, c, oy * 2 + 1, ox * 2));
                    m = std::max(m, input.at(n, c, oy * 2 + 1, ox * 2 + 1));
                    out.push_back(m);
                }
    return idan::TensorT<S>::from_data({N, C, H / 2, W / 2}, std::move(out));
}

inline int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

// Non-separable 2-D Gaussian, same kernel construction as the library spec:
// radius ceil(3 sigma), normalized, reflective borders.
inline idan::GrayImage gaussian_blur_2d_reference(const idan::GrayImage& img, float sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const int side = 2 * radius + 1;
    std::vector<double> k(static_cast<std::size_t>(side) * side);
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            k[static_cast<std::size_t>(dy + radius) * side + (dx + radius)] = v;
            sum += v;
        }
    for (auto& v : k) v /= sum;
    idan::GrayImage out{img.height, img.width, std::vector<float>(img.pixels.size())};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    acc += k[static_cast<std::size_t>(dy + radius) * side + (dx + radius)] *
                           img.at(reflect_index(y + dy, img.height),
                                  reflect_index(x + dx, img.width));
            out.at(y, x) = static_cast<float>(acc);
        }
    return out;
}

using PixelSet = std::set<std::pair<int, int>>;

inline PixelSet mask_to_set(const idan::BinaryMask& m) {
    PixelSet s;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(y, x)) s.insert({y, x});
    return s;
}

inline PixelSet footprint(const idan::StructuringElement& k, int y, int x) {
    PixelSet s;
    const int r = k.radius();
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (k.at(dy, dx)) s.insert({y + dy, x + dx});
    return s;
}

// Literal set definitions: dilation keeps (x,y) whose footprint meets R,
// erosion keeps (x,y) whose footprint lies inside R (out of bounds fails).
inline idan::BinaryMask dilate_reference(const idan::BinaryMask& m,
                                         const idan::StructuringElement& k) {
    const PixelSet r = mask_to_set(m);
    idan::BinaryMask out = idan::BinaryMask::zeros(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            const PixelSet f = footprint(k, y, x);
            PixelSet inter;
            std::set_intersection(f.begin(), f.end(), r.begin(), r.end(),
                                  std::inserter(inter, inter.begin()));
            out.at(y, x) = inter.empty() ? 0 : 1;
        }
    return out;
}

inline idan::BinaryMask erode_reference(const idan::BinaryMask& m,
                                        const idan::StructuringElement& k) {
    const PixelSet r = mask_to_set(m);
    idan::BinaryMask out = idan::BinaryMask::zeros(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            const PixelSet f = footprint(k, y, x);
            out.at(y, x) = std::includes(r.begin(), r.end(), f.begin(), f.end()) ? 1 : 0;
        }
    return out;
}

inline idan::BinaryMask random_mask(idan::Rng& rng, int h, int w, double p_on = 0.35) {
    idan::BinaryMask m = idan::BinaryMask::zeros(h, w);
    for (auto& v : m.pixels) v = rng.bernoulli(p_on) ? 1 : 0;
    return m;
}

template <typename S>
idan::TensorT<S> random_tensor(idan::Rng& rng, std::vector<int> shape, S lo = S(-2), S hi = S(2),
                               bool requires_grad = false) {
    return idan::TensorT<S>::uniform(std::move(shape), rng, lo, hi, requires_grad);
}

// pushes every coordinate at least `margin` away from `kink`
template <typename S>
idan::TensorT<S> away_from(const idan::TensorT<S>& t, S kink, S margin) {
    std::vector<S> v(t.values().begin(), t.values().end());
    for (auto& x : v)
        if (std::abs(x - kink) < margin) x = kink + (x >= kink ? margin : -margin);
    return idan::TensorT<S>::from_data(t.shape(), std::move(v));
}

template <typename S>
bool bit_identical(const idan::TensorT<S>& a, const idan::TensorT<S>& b) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (std::memcmp(&a.values()[static_cast<std::size_t>(i)],
                        &b.values()[static_cast<std::size_t>(i)], sizeof(S)) != 0)
            return false;
    }
    return true;
}

}  // namespace oracle
