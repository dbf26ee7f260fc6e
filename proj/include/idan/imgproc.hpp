#pragma once

#include <utility>

#include "idan/image.hpp"

namespace idan::imgproc {

// 0.299 R + 0.587 G + 0.114 B
GrayImage to_gray(const RgbImage& rgb);

// Separable Gaussian, kernel radius ceil(3*sigma), normalized to sum 1,
// reflective borders.
GrayImage gaussian_blur(const GrayImage& img, float sigma);

struct GradientField {
    GrayImage gx;  // values unrestricted (not clamped to [0,1])
    GrayImage gy;
};

GradientField sobel_gradients(const GrayImage& img);
BinaryMask sobel_edges(const GrayImage& img, float threshold);
BinaryMask prewitt_edges(const GrayImage& img, float threshold);

// Multi-stage: blur, Sobel, 4-bin non-maximum suppression, double threshold,
// 8-connected hysteresis. Thresholds are on gradient magnitude rescaled to
// [0,1] (divided by the 4*sqrt(2) peak response of Sobel on [0,1] inputs).
BinaryMask canny(const GrayImage& img, float sigma, float t_low, float t_high);

// Binary morphology, literal set definitions; out of bounds = background.
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& k);
BinaryMask erode(const BinaryMask& mask, const StructuringElement& k);

// Grayscale morphology used by the float difference path: windowed max/min
// over the kernel footprint, out of bounds contributing 0. Reduces to the
// binary definitions on {0,1} inputs.
GrayImage dilate_gray(const GrayImage& img, const StructuringElement& k);
GrayImage erode_gray(const GrayImage& img, const StructuringElement& k);

// min -> 0, max -> 1; constant input maps to all zeros.
GrayImage minmax_normalize(const GrayImage& img);

// 1 where value > tau (strict).
BinaryMask step(const GrayImage& img, float tau);

BinaryMask complement(const BinaryMask& mask);

}  // namespace idan::imgproc
