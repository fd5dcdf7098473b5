#include "focalforge/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace focalforge {

namespace {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open PNG for reading: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<png_byte> buf(static_cast<size_t>(h) * png_get_rowbytes(png, info));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = buf.data() + static_cast<size_t>(y) * png_get_rowbytes(png, info);
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(h), static_cast<int>(w), 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = rows[static_cast<size_t>(y)][x * 3 + c] / 255.0;
    return img;
}

void write_png(const std::string& path, const Image& img) {
    if (img.h <= 0 || img.w <= 0) throw std::invalid_argument("write_png: empty image");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.c == 3 ? img.at(y, x, c) : img.at(y, x, 0), 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& f, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(f, u);
}

float get_f32(std::ifstream& f) {
    const std::uint32_t u = get_u32(f);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

Grid read_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open grid file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "FFD1", 4) != 0)
        throw std::runtime_error("bad grid magic in " + path);
    const int h = static_cast<int>(get_u32(f));
    const int w = static_cast<int>(get_u32(f));
    Grid g(h, w);
    for (auto& v : g.v) v = static_cast<double>(get_f32(f));
    if (!f) throw std::runtime_error("truncated grid file: " + path);
    return g;
}

void write_grid(const std::string& path, const Grid& g) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open grid file for writing: " + path);
    f.write("FFD1", 4);
    put_u32(f, static_cast<std::uint32_t>(g.h));
    put_u32(f, static_cast<std::uint32_t>(g.w));
    for (double v : g.v) put_f32(f, static_cast<float>(v));
}

Tensor read_planes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open planes file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "FFM1", 4) != 0)
        throw std::runtime_error("bad planes magic in " + path);
    const int l = static_cast<int>(get_u32(f));
    const int h = static_cast<int>(get_u32(f));
    const int w = static_cast<int>(get_u32(f));
    Tensor t({l, h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(get_f32(f));
    if (!f) throw std::runtime_error("truncated planes file: " + path);
    return t;
}

void write_planes(const std::string& path, const Tensor& t) {
    if (t.rank() != 3) throw std::invalid_argument("write_planes: expects [L,H,W]");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open planes file for writing: " + path);
    f.write("FFM1", 4);
    put_u32(f, static_cast<std::uint32_t>(t.dim(0)));
    put_u32(f, static_cast<std::uint32_t>(t.dim(1)));
    put_u32(f, static_cast<std::uint32_t>(t.dim(2)));
    for (std::int64_t i = 0; i < t.size(); ++i) put_f32(f, static_cast<float>(t[i]));
}

}  // namespace focalforge
