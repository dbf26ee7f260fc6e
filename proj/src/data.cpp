#include "idan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "idan/errors.hpp"

namespace idan::data {

namespace fs = std::filesystem;

void TileSpec::validate() const {
    if (window < 1 || stride < 1 || test_every_k < 1)
        throw std::invalid_argument("TileSpec: window, stride and test_every_k must be >= 1");
}

void AugmentConfig::validate() const {
    if (pad_to < 1 || output_size < 1)
        throw std::invalid_argument("AugmentConfig: pad_to and output_size must be >= 1");
    if (!(crop_min > 0.f) || crop_min > crop_max)
        throw std::invalid_argument("AugmentConfig: need 0 < crop_min <= crop_max");
    if (rotation_deg < 0.f)
        throw std::invalid_argument("AugmentConfig: rotation_deg must be >= 0");
    if (!(illum_min > 0.f) || illum_min > illum_max)
        throw std::invalid_argument("AugmentConfig: need 0 < illum_min <= illum_max");
}

std::pair<int, int> tile_grid(int width, int height, const TileSpec& spec) {
    spec.validate();
    if (width < spec.window || height < spec.window) return {0, 0};
    return {(width - spec.window) / spec.stride + 1, (height - spec.window) / spec.stride + 1};
}

namespace {

RgbImage crop_rgb(const RgbImage& img, int y0, int x0, int h, int w) {
    RgbImage out{h, w, std::vector<float>(static_cast<std::size_t>(h) * w * 3)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

BinaryMask crop_mask(const BinaryMask& m, int y0, int x0, int h, int w) {
    BinaryMask out = BinaryMask::zeros(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(y, x) = m.at(y0 + y, x0 + x);
    return out;
}

}  // namespace

std::vector<SamplePair> tile_pair(const RgbImage& img_a, const RgbImage& img_b,
                                  const BinaryMask& label, const TileSpec& spec) {
    if (img_a.height != img_b.height || img_a.width != img_b.width ||
        img_a.height != label.height || img_a.width != label.width)
        throw std::invalid_argument("tile_pair: rasters must share dimensions");
    const auto [tx, ty] = tile_grid(img_a.width, img_a.height, spec);
    std::vector<SamplePair> tiles;
    tiles.reserve(static_cast<std::size_t>(tx) * ty);
    for (int gy = 0; gy < ty; ++gy) {
        for (int gx = 0; gx < tx; ++gx) {
            const int x0 = gx * spec.stride, y0 = gy * spec.stride;
            SamplePair s;
            s.image_before = crop_rgb(img_a, y0, x0, spec.window, spec.window);
            s.image_after = crop_rgb(img_b, y0, x0, spec.window, spec.window);
            s.label = crop_mask(label, y0, x0, spec.window, spec.window);
            s.tile_x = x0;
            s.tile_y = y0;
            tiles.push_back(std::move(s));
        }
    }
    return tiles;
}

std::pair<std::vector<SamplePair>, std::vector<SamplePair>> split_every_k(
    const std::vector<SamplePair>& tiles, int k) {
    if (k < 1) throw std::invalid_argument("split_every_k: k must be >= 1");
    std::vector<SamplePair> train, test;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if ((i + 1) % static_cast<std::size_t>(k) == 0)
            test.push_back(tiles[i]);
        else
            train.push_back(tiles[i]);
    }
    return {std::move(train), std::move(test)};
}

std::array<SamplePair, 4> crop_quarters(const SamplePair& sample) {
    const int h = sample.image_before.height, w = sample.image_before.width;
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("crop_quarters: dims must be even, got " +
                                    std::to_string(w) + "x" + std::to_string(h));
    const int hh = h / 2, hw = w / 2;
    std::array<SamplePair, 4> out;
    int qi = 0;
    for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx, ++qi) {
            SamplePair& q = out[static_cast<std::size_t>(qi)];
            q.image_before = crop_rgb(sample.image_before, qy * hh, qx * hw, hh, hw);
            q.image_after = crop_rgb(sample.image_after, qy * hh, qx * hw, hh, hw);
            q.label = crop_mask(sample.label, qy * hh, qx * hw, hh, hw);
            q.tile_x = (sample.tile_x >= 0 ? sample.tile_x : 0) + qx * hw;
            q.tile_y = (sample.tile_y >= 0 ? sample.tile_y : 0) + qy * hh;
        }
    }
    return out;
}

// ---- geometric helpers -------------------------------------------------------

namespace {

struct Tap {
    int i0, i1;
    float w1;
};

std::vector<Tap> resize_taps(int in_n, int out_n) {
    std::vector<Tap> taps(static_cast<std::size_t>(out_n));
    const double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        int i0 = static_cast<int>(std::floor(src));
        float t = static_cast<float>(src - std::floor(src));
        int i1 = i0 + 1;
        i0 = std::clamp(i0, 0, in_n - 1);
        i1 = std::clamp(i1, 0, in_n - 1);
        taps[static_cast<std::size_t>(o)] = {i0, i1, t};
    }
    return taps;
}

RgbImage resize_rgb(const RgbImage& img, int oh, int ow) {
    const auto ty = resize_taps(img.height, oh);
    const auto tx = resize_taps(img.width, ow);
    RgbImage out{oh, ow, std::vector<float>(static_cast<std::size_t>(oh) * ow * 3)};
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const auto& a = ty[static_cast<std::size_t>(y)];
            const auto& b = tx[static_cast<std::size_t>(x)];
            for (int c = 0; c < 3; ++c) {
                const float top =
                    img.at(a.i0, b.i0, c) * (1.f - b.w1) + img.at(a.i0, b.i1, c) * b.w1;
                const float bot =
                    img.at(a.i1, b.i0, c) * (1.f - b.w1) + img.at(a.i1, b.i1, c) * b.w1;
                out.at(y, x, c) = top * (1.f - a.w1) + bot * a.w1;
            }
        }
    return out;
}

BinaryMask resize_mask_nearest(const BinaryMask& m, int oh, int ow) {
    BinaryMask out = BinaryMask::zeros(oh, ow);
    const double sy = static_cast<double>(m.height) / oh;
    const double sx = static_cast<double>(m.width) / ow;
    for (int y = 0; y < oh; ++y) {
        const int iy = std::clamp(static_cast<int>(std::lround((y + 0.5) * sy - 0.5)), 0,
                                  m.height - 1);
        for (int x = 0; x < ow; ++x) {
            const int ix = std::clamp(static_cast<int>(std::lround((x + 0.5) * sx - 0.5)), 0,
                                      m.width - 1);
            out.at(y, x) = m.at(iy, ix);
        }
    }
    return out;
}

RgbImage rotate_rgb(const RgbImage& img, float deg) {
    const double rad = static_cast<double>(deg) * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
    RgbImage out{img.height, img.width,
                 std::vector<float>(static_cast<std::size_t>(img.height) * img.width * 3, 0.f)};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            // inverse map (rotate destination back into the source)
            const double dy = y - cy, dx = x - cx;
            const double sy = cy + (-sn * dx + cs * dy);
            const double sx = cx + (cs * dx + sn * dy);
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const float fy = static_cast<float>(sy - y0), fx = static_cast<float>(sx - x0);
            auto px = [&](int yy, int xx, int c) -> float {
                if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) return 0.f;
                return img.at(yy, xx, c);
            };
            for (int c = 0; c < 3; ++c) {
                const float top = px(y0, x0, c) * (1.f - fx) + px(y0, x0 + 1, c) * fx;
                const float bot = px(y0 + 1, x0, c) * (1.f - fx) + px(y0 + 1, x0 + 1, c) * fx;
                out.at(y, x, c) = top * (1.f - fy) + bot * fy;
            }
        }
    return out;
}

BinaryMask rotate_mask_nearest(const BinaryMask& m, float deg) {
    const double rad = static_cast<double>(deg) * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (m.height - 1) / 2.0, cx = (m.width - 1) / 2.0;
    BinaryMask out = BinaryMask::zeros(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            const double dy = y - cy, dx = x - cx;
            const int sy = static_cast<int>(std::lround(cy + (-sn * dx + cs * dy)));
            const int sx = static_cast<int>(std::lround(cx + (cs * dx + sn * dy)));
            if (sy < 0 || sy >= m.height || sx < 0 || sx >= m.width) continue;
            out.at(y, x) = m.at(sy, sx);
        }
    return out;
}

RgbImage pad_rgb(const RgbImage& img, int target, int oy, int ox) {
    RgbImage out{target, target,
                 std::vector<float>(static_cast<std::size_t>(target) * target * 3, 0.f)};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(oy + y, ox + x, c) = img.at(y, x, c);
    return out;
}

BinaryMask pad_mask(const BinaryMask& m, int target, int oy, int ox) {
    BinaryMask out = BinaryMask::zeros(target, target);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) out.at(oy + y, ox + x) = m.at(y, x);
    return out;
}

void scale_clamp(RgbImage& img, float factor) {
    for (auto& v : img.pixels) v = std::clamp(v * factor, 0.f, 1.f);
}

}  // namespace

SamplePair augment(const SamplePair& sample, Rng& rng, const AugmentConfig& cfg) {
    cfg.validate();
    const int h = sample.image_before.height, w = sample.image_before.width;
    if (h > cfg.pad_to || w > cfg.pad_to)
        throw std::invalid_argument("augment: sample larger than pad_to");

    // (1) zero-pad, centered
    const int oy = (cfg.pad_to - h) / 2, ox = (cfg.pad_to - w) / 2;
    RgbImage a = pad_rgb(sample.image_before, cfg.pad_to, oy, ox);
    RgbImage b = pad_rgb(sample.image_after, cfg.pad_to, oy, ox);
    BinaryMask lbl = pad_mask(sample.label, cfg.pad_to, oy, ox);

    // (2) shared square crop; draw order is fixed: side, y0, x0, angle,
    // brightness A, brightness B
    const int side = std::clamp(
        static_cast<int>(std::lround(rng.uniform(cfg.crop_min * cfg.output_size,
                                                 cfg.crop_max * cfg.output_size))),
        1, cfg.pad_to);
    const int y0 = rng.uniform_int(0, cfg.pad_to - side);
    const int x0 = rng.uniform_int(0, cfg.pad_to - side);
    a = crop_rgb(a, y0, x0, side, side);
    b = crop_rgb(b, y0, x0, side, side);
    lbl = crop_mask(lbl, y0, x0, side, side);

    // (3) normalize to output_size
    a = resize_rgb(a, cfg.output_size, cfg.output_size);
    b = resize_rgb(b, cfg.output_size, cfg.output_size);
    lbl = resize_mask_nearest(lbl, cfg.output_size, cfg.output_size);

    // (4) shared rotation, then per-image illumination
    const float angle = static_cast<float>(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg));
    a = rotate_rgb(a, angle);
    b = rotate_rgb(b, angle);
    lbl = rotate_mask_nearest(lbl, angle);

    scale_clamp(a, static_cast<float>(rng.uniform(cfg.illum_min, cfg.illum_max)));
    scale_clamp(b, static_cast<float>(rng.uniform(cfg.illum_min, cfg.illum_max)));

    SamplePair out;
    out.image_before = std::move(a);
    out.image_after = std::move(b);
    out.label = std::move(lbl);
    out.tile_x = sample.tile_x;
    out.tile_y = sample.tile_y;
    out.synth_seed = sample.synth_seed;
    return out;
}

// ---- synthetic corpus ----------------------------------------------------------

namespace {

// low-resolution grid blown up smoothly: cheap correlated noise
GrayImage smooth_noise(Rng& rng, int size, int grid, float lo, float hi) {
    GrayImage g{grid, grid, std::vector<float>(static_cast<std::size_t>(grid) * grid)};
    for (auto& v : g.pixels) v = static_cast<float>(rng.uniform(lo, hi));
    const auto ty = resize_taps(grid, size);
    const auto tx = resize_taps(grid, size);
    GrayImage out{size, size, std::vector<float>(static_cast<std::size_t>(size) * size)};
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const auto& A = ty[static_cast<std::size_t>(y)];
            const auto& B = tx[static_cast<std::size_t>(x)];
            const float top = g.at(A.i0, B.i0) * (1.f - B.w1) + g.at(A.i0, B.i1) * B.w1;
            const float bot = g.at(A.i1, B.i0) * (1.f - B.w1) + g.at(A.i1, B.i1) * B.w1;
            out.at(y, x) = top * (1.f - A.w1) + bot * A.w1;
        }
    return out;
}

}  // namespace

std::vector<SamplePair> synth_dataset(std::uint64_t seed, int count, int size) {
    if (count < 0 || size < 8) throw std::invalid_argument("synth_dataset: bad count/size");
    std::vector<SamplePair> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int si = 0; si < count; ++si) {
        Rng rng = Rng::with_salt(seed, static_cast<std::uint64_t>(si));

        const GrayImage bg = smooth_noise(rng, size, 8, 0.4f, 0.6f);
        const float tint_r = static_cast<float>(rng.uniform(-0.04, 0.04));
        const float tint_g = static_cast<float>(rng.uniform(-0.04, 0.04));
        const float tint_b = static_cast<float>(rng.uniform(-0.04, 0.04));

        SamplePair s;
        s.synth_seed = seed ^ static_cast<std::uint64_t>(si);
        s.image_before = RgbImage::filled(size, size, 0.f, 0.f, 0.f);
        s.image_after = RgbImage::filled(size, size, 0.f, 0.f, 0.f);
        s.label = BinaryMask::zeros(size, size);

        // style shift between acquisition dates
        const float style = static_cast<float>(rng.uniform(0.92, 1.08));
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const float base = bg.at(y, x);
                const float rgb[3] = {base + tint_r, base + tint_g, base + tint_b};
                for (int c = 0; c < 3; ++c) {
                    const float na = static_cast<float>(rng.uniform(-0.01, 0.01));
                    const float nb = static_cast<float>(rng.uniform(-0.01, 0.01));
                    s.image_before.at(y, x, c) = std::clamp(rgb[c] + na, 0.f, 1.f);
                    s.image_after.at(y, x, c) = std::clamp(rgb[c] * style + nb, 0.f, 1.f);
                }
            }

        // 1-4 "buildings", each present in exactly one image
        int n_rects = rng.bernoulli(0.05) ? 0 : rng.uniform_int(1, 4);
        for (int r = 0; r < n_rects; ++r) {
            const int rw = rng.uniform_int(size / 8, 3 * size / 8);
            const int rh = rng.uniform_int(size / 8, 3 * size / 8);
            const int rx = rng.uniform_int(0, size - rw);
            const int ry = rng.uniform_int(0, size - rh);
            const bool in_after = rng.bernoulli(0.5);

            const float bgc = bg.at(ry + rh / 2, rx + rw / 2);
            float delta = static_cast<float>(rng.uniform(0.25, 0.5));
            if (rng.bernoulli(0.5)) delta = -delta;
            float fill = bgc + delta;
            if (fill < 0.05f || fill > 0.95f) fill = bgc - delta;
            const float fr = std::clamp(fill + static_cast<float>(rng.uniform(-0.05, 0.05)), 0.f, 1.f);
            const float fg = std::clamp(fill + static_cast<float>(rng.uniform(-0.05, 0.05)), 0.f, 1.f);
            const float fb = std::clamp(fill + static_cast<float>(rng.uniform(-0.05, 0.05)), 0.f, 1.f);

            RgbImage& target = in_after ? s.image_after : s.image_before;
            for (int y = ry; y < ry + rh; ++y)
                for (int x = rx; x < rx + rw; ++x) {
                    target.at(y, x, 0) = fr;
                    target.at(y, x, 1) = fg;
                    target.at(y, x, 2) = fb;
                    s.label.at(y, x) = 1;
                }
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---- dataset directory ---------------------------------------------------------

RgbImage overlay_mask(const RgbImage& base, const BinaryMask& mask) {
    if (base.height != mask.height || base.width != mask.width)
        throw std::invalid_argument("overlay_mask: size mismatch");
    RgbImage out = base;
    for (int y = 0; y < base.height; ++y)
        for (int x = 0; x < base.width; ++x)
            if (mask.at(y, x)) {
                out.at(y, x, 0) = 0.5f * out.at(y, x, 0) + 0.5f;
                out.at(y, x, 1) *= 0.5f;
                out.at(y, x, 2) *= 0.5f;
            }
    return out;
}

void write_dataset(const std::string& root, const std::vector<SamplePair>& samples,
                   const std::vector<std::string>& splits) {
    if (samples.size() != splits.size())
        throw std::invalid_argument("write_dataset: samples/splits size mismatch");
    fs::create_directories(fs::path(root) / "A");
    fs::create_directories(fs::path(root) / "B");
    fs::create_directories(fs::path(root) / "label");
    std::ofstream index(fs::path(root) / "index.txt");
    if (!index) throw IoError("write_dataset: cannot write index under " + root);
    char id[16];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(id, sizeof(id), "%06zu", i);
        save_png((fs::path(root) / "A" / (std::string(id) + ".png")).string(),
                 samples[i].image_before);
        save_png((fs::path(root) / "B" / (std::string(id) + ".png")).string(),
                 samples[i].image_after);
        save_png((fs::path(root) / "label" / (std::string(id) + ".png")).string(),
                 samples[i].label);
        index << id << ' ' << splits[i] << '\n';
    }
}

std::vector<IndexEntry> read_index(const std::string& root) {
    std::ifstream in(fs::path(root) / "index.txt");
    if (!in) throw IoError("read_index: missing index.txt under " + root);
    std::vector<IndexEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        IndexEntry e;
        if (!(ls >> e.id >> e.split))
            throw IoError("read_index: malformed line '" + line + "' in " + root);
        entries.push_back(std::move(e));
    }
    return entries;
}

SamplePair load_sample(const std::string& root, const std::string& id) {
    SamplePair s;
    s.image_before = load_png((fs::path(root) / "A" / (id + ".png")).string());
    s.image_after = load_png((fs::path(root) / "B" / (id + ".png")).string());
    s.label = load_png_mask((fs::path(root) / "label" / (id + ".png")).string());
    if (s.image_before.height != s.image_after.height ||
        s.image_before.height != s.label.height ||
        s.image_before.width != s.image_after.width || s.image_before.width != s.label.width)
        throw IoError("load_sample: rasters of '" + id + "' disagree on dimensions");
    return s;
}

}  // namespace idan::data
