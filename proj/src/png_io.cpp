#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "idan/data.hpp"
#include "idan/errors.hpp"

namespace idan::data {

namespace {

inline std::uint8_t to_byte(float v) {
    const float s = v * 255.0f;
    return static_cast<std::uint8_t>(std::lround(s < 0.f ? 0.f : (s > 255.f ? 255.f : s)));
}

[[noreturn]] void fail(const char* op, const std::string& path, const png_image& image) {
    throw IoError(std::string(op) + " " + path + ": " + image.message);
}

}  // namespace

RgbImage load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) fail("load_png", path, image);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
        fail("load_png", path, image);

    RgbImage out{static_cast<int>(image.height), static_cast<int>(image.width), {}};
    out.pixels.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        out.pixels[i] = static_cast<float>(buf[i]) / 255.0f;
    return out;
}

BinaryMask load_png_mask(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) fail("load_png_mask", path, image);
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
        fail("load_png_mask", path, image);

    BinaryMask out = BinaryMask::zeros(static_cast<int>(image.height),
                                       static_cast<int>(image.width));
    for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i] >= 128 ? 1 : 0;
    return out;
}

void save_png(const std::string& path, const RgbImage& img) {
    std::vector<std::uint8_t> buf(img.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.pixels[i]);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        fail("save_png", path, image);
}

void save_png(const std::string& path, const GrayImage& img) {
    std::vector<std::uint8_t> buf(img.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.pixels[i]);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        fail("save_png", path, image);
}

void save_png(const std::string& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> buf(mask.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.pixels[i] ? 255 : 0;
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(mask.width);
    image.height = static_cast<png_uint_32>(mask.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        fail("save_png", path, image);
}

}  // namespace idan::data
