#include "layernr/imagefeat.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace lnr {

namespace {
struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

Tensor load_image_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&img, f.get()))
        throw std::runtime_error("not a PNG: " + path);
    img.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw std::runtime_error("failed to decode " + path);
    }
    int h = img.height, w = img.width;
    Array out(3L * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out[(long)c * h * w + (long)y * w + x] =
                    buf[((long)y * w + x) * 3 + c] / 255.0;
    return Tensor::from_array({3, h, w}, std::move(out));
}

void save_image_png(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("save_image_png: expected [3,H,W]");
    int h = image.dim(1), w = image.dim(2);
    std::vector<unsigned char> buf(3L * h * w);
    const Array& v = image.values();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double val = v[(long)c * h * w + (long)y * w + x];
                val = std::min(1.0, std::max(0.0, val));
                buf[((long)y * w + x) * 3 + c] =
                    (unsigned char)std::lround(val * 255.0);
            }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = w;
    img.height = h;
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("failed to write " + path);
}

}  // namespace lnr
