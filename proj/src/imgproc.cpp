#include "idan/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace idan {

RgbImage RgbImage::filled(int height, int width, float r, float g, float b) {
    RgbImage img{height, width, {}};
    img.pixels.resize(static_cast<std::size_t>(height) * width * 3);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = r;
        img.pixels[i + 1] = g;
        img.pixels[i + 2] = b;
    }
    return img;
}

GrayImage GrayImage::filled(int height, int width, float v) {
    return GrayImage{height, width,
                     std::vector<float>(static_cast<std::size_t>(height) * width, v)};
}

BinaryMask BinaryMask::zeros(int height, int width) {
    return BinaryMask{height, width,
                      std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
}

std::int64_t BinaryMask::count_on() const {
    std::int64_t n = 0;
    for (auto v : pixels) n += v;
    return n;
}

StructuringElement StructuringElement::full_square(int side) {
    if (side <= 0 || side % 2 == 0)
        throw std::invalid_argument("structuring element side must be odd and positive");
    return StructuringElement{side,
                              std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side, 1)};
}

Tensor to_tensor(const RgbImage& img) {
    std::vector<float> data(static_cast<std::size_t>(3) * img.height * img.width);
    const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                data[c * plane + static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
    return Tensor::from_data({1, 3, img.height, img.width}, std::move(data));
}

Tensor to_tensor(const GrayImage& img) {
    return Tensor::from_data({1, 1, img.height, img.width}, img.pixels);
}

Tensor to_tensor(const BinaryMask& mask) {
    std::vector<float> data(mask.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(mask.pixels[i]);
    return Tensor::from_data({1, 1, mask.height, mask.width}, std::move(data));
}

RgbImage rgb_from_tensor(const Tensor& t) {
    int c_axis = 0;
    if (t.rank() == 4 && t.dim(0) == 1)
        c_axis = 1;
    else if (t.rank() != 3)
        throw std::invalid_argument("rgb_from_tensor: expected (1,3,H,W) or (3,H,W), got " +
                                    shape_str(t.shape()));
    if (t.dim(c_axis) != 3)
        throw std::invalid_argument("rgb_from_tensor: expected 3 channels, got " +
                                    shape_str(t.shape()));
    const int h = t.dim(c_axis + 1), w = t.dim(c_axis + 2);
    RgbImage img{h, w, std::vector<float>(static_cast<std::size_t>(3) * h * w)};
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const float* src = t.values().data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = src[c * plane + static_cast<std::size_t>(y) * w + x];
    return img;
}

GrayImage gray_from_tensor(const Tensor& t) {
    const int h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
    if (t.numel() != static_cast<std::int64_t>(h) * w)
        throw std::invalid_argument("gray_from_tensor: expected single channel, got " +
                                    shape_str(t.shape()));
    return GrayImage{h, w, std::vector<float>(t.values().begin(), t.values().end())};
}

}  // namespace idan

namespace idan::imgproc {

namespace {

// symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1
inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

GrayImage correlate3(const GrayImage& img, const float k[9]) {
    GrayImage out{img.height, img.width,
                  std::vector<float>(static_cast<std::size_t>(img.height) * img.width)};
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            float acc = 0.f;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    acc += k[(dy + 1) * 3 + (dx + 1)] *
                           img.at(reflect(y + dy, img.height), reflect(x + dx, img.width));
            out.at(y, x) = acc;
        }
    }
    return out;
}

constexpr float kSobelX[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
constexpr float kSobelY[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
constexpr float kPrewittX[9] = {-1, 0, 1, -1, 0, 1, -1, 0, 1};
constexpr float kPrewittY[9] = {-1, -1, -1, 0, 0, 0, 1, 1, 1};

BinaryMask magnitude_edges(const GrayImage& gx, const GrayImage& gy, float threshold) {
    BinaryMask out = BinaryMask::zeros(gx.height, gx.width);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const float m = std::sqrt(gx.pixels[i] * gx.pixels[i] + gy.pixels[i] * gy.pixels[i]);
        out.pixels[i] = m > threshold ? 1 : 0;
    }
    return out;
}

}  // namespace

GrayImage to_gray(const RgbImage& rgb) {
    GrayImage out{rgb.height, rgb.width,
                  std::vector<float>(static_cast<std::size_t>(rgb.height) * rgb.width)};
    for (std::size_t i = 0, p = 0; i < out.pixels.size(); ++i, p += 3)
        out.pixels[i] =
            0.299f * rgb.pixels[p] + 0.587f * rgb.pixels[p + 1] + 0.114f * rgb.pixels[p + 2];
    return out;
}

GrayImage gaussian_blur(const GrayImage& img, float sigma) {
    if (!(sigma > 0.f)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
        sum += v;
    }
    for (auto& v : kernel) v = static_cast<float>(v / sum);

    // horizontal then vertical pass
    GrayImage tmp{img.height, img.width, std::vector<float>(img.pixels.size())};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float acc = 0.f;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       img.at(y, reflect(x + i, img.width));
            tmp.at(y, x) = acc;
        }
    GrayImage out{img.height, img.width, std::vector<float>(img.pixels.size())};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float acc = 0.f;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       tmp.at(reflect(y + i, img.height), x);
            out.at(y, x) = acc;
        }
    return out;
}

GradientField sobel_gradients(const GrayImage& img) {
    return {correlate3(img, kSobelX), correlate3(img, kSobelY)};
}

BinaryMask sobel_edges(const GrayImage& img, float threshold) {
    auto g = sobel_gradients(img);
    return magnitude_edges(g.gx, g.gy, threshold);
}

BinaryMask prewitt_edges(const GrayImage& img, float threshold) {
    const GrayImage gx = correlate3(img, kPrewittX);
    const GrayImage gy = correlate3(img, kPrewittY);
    return magnitude_edges(gx, gy, threshold);
}

BinaryMask canny(const GrayImage& img, float sigma, float t_low, float t_high) {
    if (!(t_low > 0.f) || !(t_low < t_high))
        throw std::invalid_argument("canny: need 0 < t_low < t_high");
    const int h = img.height, w = img.width;
    const GrayImage smoothed = gaussian_blur(img, sigma);
    const auto [gx, gy] = sobel_gradients(smoothed);

    // magnitude on the [0,1] scale: peak Sobel response on unit-range input
    // is 4 per axis, 4*sqrt(2) overall
    const float inv_peak = 1.0f / (4.0f * std::sqrt(2.0f));
    std::vector<float> mag(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < mag.size(); ++i)
        mag[i] = std::sqrt(gx.pixels[i] * gx.pixels[i] + gy.pixels[i] * gy.pixels[i]) * inv_peak;

    // non-maximum suppression, direction quantized to 4 bins; strict ">"
    // against the forward neighbor, ">=" against the backward one, so a
    // plateau cannot produce a double-wide edge
    std::vector<std::uint8_t> nms(mag.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (mag[i] <= 0.f) continue;
            float angle = std::atan2(gy.pixels[i], gx.pixels[i]) * 180.0f /
                          3.14159265358979323846f;
            if (angle < 0.f) angle += 180.0f;
            int dy1, dx1;  // forward neighbor along the gradient
            if (angle < 22.5f || angle >= 157.5f) {
                dy1 = 0; dx1 = 1;
            } else if (angle < 67.5f) {
                dy1 = 1; dx1 = 1;
            } else if (angle < 112.5f) {
                dy1 = 1; dx1 = 0;
            } else {
                dy1 = 1; dx1 = -1;
            }
            auto mag_at = [&](int yy, int xx) -> float {
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.f;
                return mag[static_cast<std::size_t>(yy) * w + xx];
            };
            const float fwd = mag_at(y + dy1, x + dx1);
            const float bwd = mag_at(y - dy1, x - dx1);
            if (mag[i] > fwd && mag[i] >= bwd) nms[i] = 1;
        }
    }

    // double threshold + hysteresis (8-connected BFS from strong pixels)
    constexpr std::uint8_t kWeak = 1, kStrong = 2;
    std::vector<std::uint8_t> cls(mag.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        if (!nms[i]) continue;
        if (mag[i] > t_high) {
            cls[i] = kStrong;
            stack.push_back(i);
        } else if (mag[i] > t_low) {
            cls[i] = kWeak;
        }
    }
    BinaryMask out = BinaryMask::zeros(h, w);
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        if (out.pixels[i]) continue;
        out.pixels[i] = 1;
        const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dy == 0 && dx == 0) continue;
                const int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
                if (cls[j] != 0 && !out.pixels[j]) stack.push_back(j);
            }
    }
    return out;
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& k) {
    const int r = k.radius();
    BinaryMask out = BinaryMask::zeros(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            std::uint8_t hit = 0;
            for (int dy = -r; dy <= r && !hit; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (!k.at(dy, dx)) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width) continue;
                    if (mask.at(yy, xx)) {
                        hit = 1;
                        break;
                    }
                }
            out.at(y, x) = hit;
        }
    return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& k) {
    const int r = k.radius();
    BinaryMask out = BinaryMask::zeros(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            std::uint8_t all = 1;
            for (int dy = -r; dy <= r && all; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (!k.at(dy, dx)) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width ||
                        !mask.at(yy, xx)) {
                        all = 0;
                        break;
                    }
                }
            out.at(y, x) = all;
        }
    return out;
}

GrayImage dilate_gray(const GrayImage& img, const StructuringElement& k) {
    const int r = k.radius();
    GrayImage out{img.height, img.width, std::vector<float>(img.pixels.size())};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float best = 0.f;  // out of bounds contributes background (0)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (!k.at(dy, dx)) continue;
                    const int yy = y + dy, xx = x + dx;
                    const float v = (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width)
                                        ? 0.f
                                        : img.at(yy, xx);
                    best = std::max(best, v);
                }
            out.at(y, x) = best;
        }
    return out;
}

GrayImage erode_gray(const GrayImage& img, const StructuringElement& k) {
    const int r = k.radius();
    GrayImage out{img.height, img.width, std::vector<float>(img.pixels.size())};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float best = std::numeric_limits<float>::max();
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (!k.at(dy, dx)) continue;
                    const int yy = y + dy, xx = x + dx;
                    const float v = (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width)
                                        ? 0.f
                                        : img.at(yy, xx);
                    best = std::min(best, v);
                }
            out.at(y, x) = best;
        }
    return out;
}

GrayImage minmax_normalize(const GrayImage& img) {
    float mn = img.pixels[0], mx = img.pixels[0];
    for (float v : img.pixels) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    GrayImage out{img.height, img.width, std::vector<float>(img.pixels.size(), 0.f)};
    if (mx > mn) {
        const float inv = 1.0f / (mx - mn);
        for (std::size_t i = 0; i < out.pixels.size(); ++i)
            out.pixels[i] = (img.pixels[i] - mn) * inv;
    }
    return out;
}

BinaryMask step(const GrayImage& img, float tau) {
    BinaryMask out = BinaryMask::zeros(img.height, img.width);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = img.pixels[i] > tau ? 1 : 0;
    return out;
}

BinaryMask complement(const BinaryMask& mask) {
    BinaryMask out = mask;
    for (auto& v : out.pixels) v = v ? 0 : 1;
    return out;
}

}  // namespace idan::imgproc
