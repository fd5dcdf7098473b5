#pragma once

#include <vector>

#include "focalforge/image.hpp"
#include "focalforge/stack_synth.hpp"

namespace focalforge {

struct BaselineResult {
    Image fused;
    LayerIndexMap decision;  // winning layer index per pixel
};

/// Per pixel, selects the layer with the largest windowed sum of squared
/// Laplacian response (ties to the lowest index); fuses by hard selection.
BaselineResult laplacian_argmax_fuse(const FocalStack& stack, int window = 9);

/// Per-pixel mean over layers.
Image average_fuse(const FocalStack& stack);

}  // namespace focalforge
