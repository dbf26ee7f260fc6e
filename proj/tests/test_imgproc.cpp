#include <doctest.h>

#include <cmath>

#include "idan/imgproc.hpp"
#include "oracles.hpp"

using namespace idan;
namespace ip = idan::imgproc;

namespace {

GrayImage vertical_step(int h, int w, int step_col, float lo, float hi) {
    GrayImage img = GrayImage::filled(h, w, lo);
    for (int y = 0; y < h; ++y)
        for (int x = step_col; x < w; ++x) img.at(y, x) = hi;
    return img;
}

bool masks_equal(const BinaryMask& a, const BinaryMask& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
}

}  // namespace

TEST_CASE("to_gray: weighted sum") {
    RgbImage white = RgbImage::filled(2, 2, 1.f, 1.f, 1.f);
    CHECK(ip::to_gray(white).at(0, 0) == doctest::Approx(1.f));

    RgbImage red = RgbImage::filled(1, 1, 1.f, 0.f, 0.f);
    CHECK(ip::to_gray(red).at(0, 0) == doctest::Approx(0.299f));

    RgbImage px = RgbImage::filled(1, 1, 0.2f, 0.7f, 0.4f);
    CHECK(ip::to_gray(px).at(0, 0) ==
          doctest::Approx(0.299f * 0.2f + 0.587f * 0.7f + 0.114f * 0.4f));
}

TEST_CASE("gaussian_blur: constant, impulse, 2-D reference") {
    auto c = GrayImage::filled(12, 12, 0.42f);
    auto bc = ip::gaussian_blur(c, 1.3f);
    for (float v : bc.pixels) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));

    // impulse response reproduces the normalized kernel
    const float sigma = 0.8f;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    GrayImage imp = GrayImage::filled(21, 21, 0.f);
    imp.at(10, 10) = 1.f;
    auto bi = ip::gaussian_blur(imp, sigma);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i)
        ksum += std::exp(-(i * i) / (2.0 * sigma * sigma));
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const double expect = std::exp(-(dy * dy) / (2.0 * sigma * sigma)) *
                                  std::exp(-(dx * dx) / (2.0 * sigma * sigma)) / (ksum * ksum);
            CHECK(bi.at(10 + dy, 10 + dx) == doctest::Approx(expect).epsilon(1e-5));
        }

    Rng rng(5);
    GrayImage noisy{16, 16, {}};
    noisy.pixels.resize(256);
    for (auto& v : noisy.pixels) v = static_cast<float>(rng.uniform01());
    auto fast = ip::gaussian_blur(noisy, 1.4f);
    auto ref = oracle::gaussian_blur_2d_reference(noisy, 1.4f);
    for (std::size_t i = 0; i < fast.pixels.size(); ++i)
        CHECK(std::abs(fast.pixels[i] - ref.pixels[i]) <= 1e-5f);

    CHECK_THROWS_AS(ip::gaussian_blur(c, 0.f), std::invalid_argument);
    CHECK_THROWS_AS(ip::gaussian_blur(c, -1.f), std::invalid_argument);
}

TEST_CASE("sobel/prewitt: constant and step responses") {
    auto c = GrayImage::filled(8, 8, 0.3f);
    auto [gx0, gy0] = ip::sobel_gradients(c);
    for (float v : gx0.pixels) CHECK(v == doctest::Approx(0.f));
    for (float v : gy0.pixels) CHECK(v == doctest::Approx(0.f));
    CHECK(ip::sobel_edges(c, 0.1f).count_on() == 0);

    // 0 -> 1 step between columns 3 and 4
    auto img = vertical_step(8, 8, 4, 0.f, 1.f);
    auto [gx, gy] = ip::sobel_gradients(img);
    for (int y = 0; y < 8; ++y) {
        CHECK(gx.at(y, 3) == doctest::Approx(4.f));  // hand-applied kernel at the step
        CHECK(gx.at(y, 4) == doctest::Approx(4.f));
        CHECK(gx.at(y, 2) == doctest::Approx(0.f));
        CHECK(gx.at(y, 5) == doctest::Approx(0.f));
        for (int x = 0; x < 8; ++x) CHECK(gy.at(y, x) == doctest::Approx(0.f));
    }

    // Prewitt peaks at 3 where Sobel peaks at 4
    CHECK(ip::prewitt_edges(img, 2.9f).count_on() == 16);
    CHECK(ip::prewitt_edges(img, 3.1f).count_on() == 0);
    CHECK(ip::sobel_edges(img, 3.1f).count_on() == 16);
    CHECK(ip::sobel_edges(img, 4.1f).count_on() == 0);
}

TEST_CASE("canny: constant image yields an empty mask") {
    CHECK(ip::canny(GrayImage::filled(16, 16, 0.6f), 1.4f, 0.1f, 0.2f).count_on() == 0);
    CHECK_THROWS_AS(ip::canny(GrayImage::filled(8, 8, 0.f), 1.4f, 0.3f, 0.2f),
                    std::invalid_argument);
    CHECK_THROWS_AS(ip::canny(GrayImage::filled(8, 8, 0.f), 1.4f, 0.2f, 0.2f),
                    std::invalid_argument);
}

TEST_CASE("canny: sharp vertical step gives one thin edge near the boundary") {
    auto img = vertical_step(32, 32, 16, 0.f, 1.f);
    auto mask = ip::canny(img, 1.4f, 0.1f, 0.2f);
    // every row has exactly one edge pixel, all in the same column
    int edge_col = -1;
    for (int y = 0; y < 32; ++y) {
        int count = 0, col = -1;
        for (int x = 0; x < 32; ++x)
            if (mask.at(y, x)) {
                ++count;
                col = x;
            }
        CHECK(count == 1);
        if (edge_col < 0) edge_col = col;
        CHECK(col == edge_col);
    }
    // true boundary lies between columns 15 and 16
    CHECK(edge_col >= 15);
    CHECK(edge_col <= 16);
}

TEST_CASE("canny: hysteresis keeps connected weak edges, drops isolated ones") {
    // one long step edge whose contrast ramps from strong at the top to weak
    // at the bottom (a single connected line), plus a short isolated
    // low-contrast step elsewhere
    const int h = 48, w = 48;
    GrayImage img = GrayImage::filled(h, w, 0.f);
    for (int y = 0; y < h; ++y) {
        const float contrast = 0.9f - (0.9f - 0.28f) * static_cast<float>(y) / (h - 1);
        for (int x = 24; x < w; ++x) img.at(y, x) = contrast;
    }
    for (int y = 36; y < 44; ++y)
        for (int x = 6; x < 12; ++x) img.at(y, x) = 0.28f;

    // derive thresholds from the oracle blur + 3x3 Sobel so the top of the
    // edge clears t_high and the bottom lands between t_low and t_high
    auto blurred = oracle::gaussian_blur_2d_reference(img, 1.4f);
    auto [gx, gy] = ip::sobel_gradients(blurred);
    auto mag_at = [&](int y, int x) {
        return std::sqrt(gx.at(y, x) * gx.at(y, x) + gy.at(y, x) * gy.at(y, x)) /
               (4.f * std::sqrt(2.f));
    };
    const float strong_mag = std::max(mag_at(4, 23), mag_at(4, 24));
    const float weak_mag = std::max(mag_at(h - 5, 23), mag_at(h - 5, 24));
    REQUIRE(weak_mag < strong_mag);
    const float t_low = weak_mag * 0.5f;
    const float t_high = (weak_mag + strong_mag) * 0.5f;

    auto mask = ip::canny(img, 1.4f, t_low, t_high);
    // the weak lower half of the main edge stays (connected to the strong top)
    int weak_half_on = 0;
    for (int y = h / 2 + 4; y < h - 2; ++y)
        for (int x = 20; x < 30; ++x) weak_half_on += mask.at(y, x);
    CHECK(weak_half_on > 0);
    // the isolated weak blob is removed entirely
    int isolated_on = 0;
    for (int y = 30; y < h; ++y)
        for (int x = 0; x < 18; ++x) isolated_on += mask.at(y, x);
    CHECK(isolated_on == 0);
}

TEST_CASE("canny: output is a subset of pixels above t_low") {
    Rng rng(17);
    GrayImage img{24, 24, {}};
    img.pixels.resize(24 * 24);
    for (auto& v : img.pixels) v = static_cast<float>(rng.uniform01());
    const float t_low = 0.08f, t_high = 0.2f, sigma = 1.2f;
    auto mask = ip::canny(img, sigma, t_low, t_high);

    auto blurred = oracle::gaussian_blur_2d_reference(img, sigma);
    auto [gx, gy] = ip::sobel_gradients(blurred);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            if (mask.at(y, x)) {
                const float m = std::sqrt(gx.at(y, x) * gx.at(y, x) +
                                          gy.at(y, x) * gy.at(y, x)) /
                                (4.f * std::sqrt(2.f));
                CHECK(m > t_low);
            }
}

TEST_CASE("dilate/erode: definitional cases") {
    auto k = StructuringElement::full_square(3);

    auto empty = BinaryMask::zeros(7, 7);
    CHECK(ip::dilate(empty, k).count_on() == 0);

    BinaryMask dot = BinaryMask::zeros(7, 7);
    dot.at(3, 3) = 1;
    auto d = ip::dilate(dot, k);
    CHECK(d.count_on() == 9);
    for (int y = 2; y <= 4; ++y)
        for (int x = 2; x <= 4; ++x) CHECK(d.at(y, x) == 1);

    CHECK(ip::erode(dot, k).count_on() == 0);

    BinaryMask full{7, 7, std::vector<std::uint8_t>(49, 1)};
    auto e = ip::erode(full, k);
    CHECK(e.count_on() == 25);  // 1-pixel border footprint leaves the image
    for (int y = 1; y <= 5; ++y)
        for (int x = 1; x <= 5; ++x) CHECK(e.at(y, x) == 1);

    CHECK_THROWS_AS(StructuringElement::full_square(4), std::invalid_argument);
}

TEST_CASE("dilate/erode: 100 random masks match the set-definition oracle") {
    auto k3 = StructuringElement::full_square(3);
    // a cross-shaped kernel exercises non-full footprints
    StructuringElement cross = StructuringElement::full_square(3);
    cross.cells = {0, 1, 0, 1, 1, 1, 0, 1, 0};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        auto m = oracle::random_mask(rng, 16, 16);
        const auto& k = (seed % 2 == 0) ? k3 : cross;
        CHECK(masks_equal(ip::dilate(m, k), oracle::dilate_reference(m, k)));
        CHECK(masks_equal(ip::erode(m, k), oracle::erode_reference(m, k)));
    }
}

TEST_CASE("morphology: extensivity and interior duality") {
    auto k = StructuringElement::full_square(3);
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        Rng rng(seed);
        auto m = oracle::random_mask(rng, 20, 20);
        auto d = ip::dilate(m, k);
        auto e = ip::erode(m, k);
        for (std::size_t i = 0; i < m.pixels.size(); ++i) {
            CHECK(d.pixels[i] >= m.pixels[i]);  // dilation grows
            CHECK(e.pixels[i] <= m.pixels[i]);  // erosion shrinks
        }
        // duality away from the border: erode(m) == ~dilate(~m)
        auto dual = ip::complement(ip::dilate(ip::complement(m), k));
        for (int y = 1; y < 19; ++y)
            for (int x = 1; x < 19; ++x) CHECK(e.at(y, x) == dual.at(y, x));
    }
}

TEST_CASE("minmax_normalize and step") {
    auto c = GrayImage::filled(4, 4, 0.7f);
    for (float v : ip::minmax_normalize(c).pixels) CHECK(v == 0.f);

    GrayImage g{1, 3, {0.f, 2.f, 4.f}};
    auto n = ip::minmax_normalize(g);
    CHECK(n.pixels[0] == doctest::Approx(0.f));
    CHECK(n.pixels[1] == doctest::Approx(0.5f));
    CHECK(n.pixels[2] == doctest::Approx(1.f));

    GrayImage s{1, 3, {0.2f, 0.5f, 0.9f}};
    auto m = ip::step(s, 0.5f);
    CHECK(m.pixels[0] == 0);
    CHECK(m.pixels[1] == 0);  // strict inequality at the threshold
    CHECK(m.pixels[2] == 1);
}

TEST_CASE("gaussian_blur: interior impulse keeps its mass") {
    GrayImage imp = GrayImage::filled(31, 31, 0.f);
    imp.at(15, 15) = 1.f;
    auto b = ip::gaussian_blur(imp, 1.4f);
    double sum = 0.0;
    for (float v : b.pixels) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-6);
}
