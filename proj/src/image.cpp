#include "focalforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace focalforge {

void validate_depth(const DepthMap& d) {
    for (double x : d.v) {
        if (!std::isfinite(x)) throw std::invalid_argument("depth map contains non-finite values");
        if (x < 0.0 || x > 1.0) throw std::invalid_argument("depth map values must lie in [0,1]");
    }
}

Grid luminance(const Image& img) {
    Grid g(img.h, img.w);
    if (img.c == 1) {
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) g.at(y, x) = img.at(y, x, 0);
        return g;
    }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            g.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    return g;
}

namespace {

// Mirror without repeating the edge sample (reflect-101), folded until valid.
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

std::vector<double> gaussian_kernel(double sigma, int* radius_out) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    *radius_out = radius;
    return k;
}

// Separable pass over one channel plane.
void blur_plane(const double* src, int h, int w, std::int64_t stride_y, std::int64_t stride_x,
                const std::vector<double>& k, int radius, double* dst) {
    std::vector<double> tmp(static_cast<size_t>(h) * w);
    // horizontal
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = reflect_index(x + i, w);
                acc += k[static_cast<size_t>(i + radius)] * src[y * stride_y + xi * stride_x];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    // vertical
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = reflect_index(y + i, h);
                acc += k[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(yi) * w + x];
            }
            dst[y * stride_y + x * stride_x] = acc;
        }
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) return img;
    int radius = 0;
    const auto k = gaussian_kernel(sigma, &radius);
    Image out(img.h, img.w, img.c);
    for (int ch = 0; ch < img.c; ++ch)
        blur_plane(img.px.data() + ch, img.h, img.w, static_cast<std::int64_t>(img.w) * img.c,
                   img.c, k, radius, out.px.data() + ch);
    return out;
}

Grid gaussian_blur(const Grid& g, double sigma) {
    if (sigma <= 0.0) return g;
    int radius = 0;
    const auto k = gaussian_kernel(sigma, &radius);
    Grid out(g.h, g.w);
    blur_plane(g.v.data(), g.h, g.w, g.w, 1, k, radius, out.v.data());
    return out;
}

Grid laplacian(const Grid& g) {
    Grid out(g.h, g.w);
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            const double up = g.at(std::max(y - 1, 0), x);
            const double dn = g.at(std::min(y + 1, g.h - 1), x);
            const double lf = g.at(y, std::max(x - 1, 0));
            const double rt = g.at(y, std::min(x + 1, g.w - 1));
            out.at(y, x) = up + dn + lf + rt - 4.0 * g.at(y, x);
        }
    return out;
}

void clamp01(Image& img) {
    for (auto& v : img.px) v = std::clamp(v, 0.0, 1.0);
}

Tensor image_to_chw(const Image& img) {
    Tensor t({img.c, img.h, img.w});
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(ch, y, x) = img.at(y, x, ch);
    return t;
}

Image chw_to_image(const Tensor& t) {
    if (t.rank() != 3) throw std::invalid_argument("chw_to_image: expects CHW");
    Image img(t.dim(1), t.dim(2), t.dim(0));
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) img.at(y, x, ch) = t.at(ch, y, x);
    return img;
}

}  // namespace focalforge
