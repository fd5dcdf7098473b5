#pragma once

#include <string>

#include "focalforge/image.hpp"
#include "focalforge/tensor.hpp"

namespace focalforge {

// 8-bit PNG. Reads gray/palette/RGBA as RGB; writes RGB.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// Binary grid file: magic "FFD1", u32 H, u32 W, f32 data row-major,
// all little-endian. Carries depth maps and other scalar fields.
Grid read_grid(const std::string& path);
void write_grid(const std::string& path, const Grid& g);

// Binary stacked-plane file: magic "FFM1", u32 L, u32 H, u32 W, f32 data in
// layer-major order, little-endian. Carries focus maps.
Tensor read_planes(const std::string& path);
void write_planes(const std::string& path, const Tensor& t);  // [L,H,W]

}  // namespace focalforge
