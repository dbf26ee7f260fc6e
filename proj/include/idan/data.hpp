#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "idan/image.hpp"
#include "idan/rng.hpp"

namespace idan::data {

struct SamplePair {
    RgbImage image_before;
    RgbImage image_after;
    BinaryMask label;
    int tile_x = -1;  // source tile origin; -1 for synthetic samples
    int tile_y = -1;
    std::uint64_t synth_seed = 0;
};

struct TileSpec {
    int window = 512;
    int stride = 512;
    int test_every_k = 5;

    void validate() const;
};

struct AugmentConfig {
    int pad_to = 1024;
    float crop_min = 0.7f;  // fraction of output_size
    float crop_max = 1.3f;
    int output_size = 512;
    float rotation_deg = 15.0f;  // range is +-rotation_deg
    float illum_min = 0.8f;
    float illum_max = 1.2f;

    void validate() const;
};

// Border tiles smaller than the window are discarded.
std::pair<int, int> tile_grid(int width, int height, const TileSpec& spec);  // (tiles_x, tiles_y)

std::vector<SamplePair> tile_pair(const RgbImage& img_a, const RgbImage& img_b,
                                  const BinaryMask& label, const TileSpec& spec);

// 1-based positions divisible by k go to test.
std::pair<std::vector<SamplePair>, std::vector<SamplePair>> split_every_k(
    const std::vector<SamplePair>& tiles, int k);

// Non-overlapping quadrants in TL, TR, BL, BR order; dims must be even.
std::array<SamplePair, 4> crop_quarters(const SamplePair& sample);

// Pad to pad_to, random square crop, resize to output_size, shared rotation,
// per-image illumination. Geometric draws are shared by both images and the
// label; illumination is independent per image.
SamplePair augment(const SamplePair& sample, Rng& rng, const AugmentConfig& cfg);

// PNG I/O (8-bit; palette/gray/16-bit inputs are converted on load).
RgbImage load_png(const std::string& path);
BinaryMask load_png_mask(const std::string& path);  // {0,255} on disk -> {0,1}
void save_png(const std::string& path, const RgbImage& img);
void save_png(const std::string& path, const GrayImage& img);
void save_png(const std::string& path, const BinaryMask& mask);

// Change pixels tinted red over the base image.
RgbImage overlay_mask(const RgbImage& base, const BinaryMask& mask);

// Smooth shared background with a global style shift, plus 1-4 rectangles
// present in exactly one image of the pair; label is the union.
std::vector<SamplePair> synth_dataset(std::uint64_t seed, int count, int size);

// Dataset directory: <root>/{A,B,label}/<tile_id>.png plus index.txt with
// one "tile_id split" line per sample.
struct IndexEntry {
    std::string id;
    std::string split;  // train / test / val
};

void write_dataset(const std::string& root, const std::vector<SamplePair>& samples,
                   const std::vector<std::string>& splits);
std::vector<IndexEntry> read_index(const std::string& root);
SamplePair load_sample(const std::string& root, const std::string& id);

}  // namespace idan::data
