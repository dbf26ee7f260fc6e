#pragma once

#include <cstdint>
#include <vector>

#include "idan/tensor.hpp"

namespace idan {

// Interleaved RGB, floats in [0,1], row-major.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // 3 * height * width

    static RgbImage filled(int height, int width, float r, float g, float b);
    float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

// Single channel, floats in [0,1].
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    static GrayImage filled(int height, int width, float v);
    float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Values restricted to {0,1}.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    static BinaryMask zeros(int height, int width);
    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::int64_t count_on() const;
};

// Morphology kernel; odd side, center always set.
struct StructuringElement {
    int side = 0;
    std::vector<std::uint8_t> cells;  // side * side booleans

    static StructuringElement full_square(int side);
    bool at(int dy, int dx) const {  // dy,dx in [-side/2, side/2]
        const int r = side / 2;
        return cells[static_cast<std::size_t>(dy + r) * side + (dx + r)] != 0;
    }
    int radius() const { return side / 2; }
};

// NCHW bridges (planar layout for the network, interleaved for images).
Tensor to_tensor(const RgbImage& img);        // (1,3,H,W)
Tensor to_tensor(const GrayImage& img);       // (1,1,H,W)
Tensor to_tensor(const BinaryMask& mask);     // (1,1,H,W), {0,1} floats
RgbImage rgb_from_tensor(const Tensor& t);    // (1,3,H,W) or (3,H,W)
GrayImage gray_from_tensor(const Tensor& t);  // single channel

}  // namespace idan
