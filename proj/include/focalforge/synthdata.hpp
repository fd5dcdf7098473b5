#pragma once

#include <utility>
#include <vector>

#include "focalforge/image.hpp"
#include "focalforge/rng.hpp"

namespace focalforge {

struct SceneParams {
    int h = 64;
    int w = 64;
    int min_shapes = 3;
    int max_shapes = 8;
};

/// Procedural toy scene: a textured background on a depth ramp plus a handful
/// of patterned shapes at distinct depths. Depth values span [0,1] so every
/// stratification bin receives mass.
std::pair<Image, DepthMap> make_scene(Rng& rng, const SceneParams& params = {});

std::vector<std::pair<Image, DepthMap>> make_scene_dataset(int count, Rng& rng,
                                                           const SceneParams& params = {});

}  // namespace focalforge
