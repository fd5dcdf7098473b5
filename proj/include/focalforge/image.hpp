#pragma once

#include <cstdint>
#include <vector>

#include "focalforge/tensor.hpp"

namespace focalforge {

/// Interleaved H×W×C image, values in [0,1].
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

    double& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }

    std::int64_t size() const { return static_cast<std::int64_t>(px.size()); }
    bool same_dims(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

/// H×W scalar grid; carries depth maps and other per-pixel fields.
struct Grid {
    int h = 0, w = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0.0) {}

    double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

using DepthMap = Grid;

/// Throws std::invalid_argument unless all values are finite and in [0,1].
void validate_depth(const DepthMap& d);

/// ITU-R 601 luminance; single-channel images pass through.
Grid luminance(const Image& img);

/// Gaussian blur with kernel radius ceil(3*sigma) and mirrored (reflect-101)
/// borders. sigma == 0 returns the input unchanged.
Image gaussian_blur(const Image& img, double sigma);
Grid gaussian_blur(const Grid& g, double sigma);

/// 3x3 Laplacian response (4-neighbour stencil), replicated borders.
Grid laplacian(const Grid& g);

/// Clamp all pixels to [0,1].
void clamp01(Image& img);

// Tensor bridges (image HWC <-> net CHW).
Tensor image_to_chw(const Image& img);
Image chw_to_image(const Tensor& t);

}  // namespace focalforge
