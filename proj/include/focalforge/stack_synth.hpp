#pragma once

#include <optional>
#include <string>
#include <vector>

#include "focalforge/image.hpp"
#include "focalforge/rng.hpp"

namespace focalforge {

/// Closed depth-of-field interval in normalized depth units.
struct DoFInterval {
    double near = 0.0;
    double far = 0.0;
};

/// Per-pixel layer assignment produced by depth stratification; also the
/// classification target during fusion training.
struct LayerIndexMap {
    int layers = 0;
    int h = 0, w = 0;
    std::vector<int> idx;

    int& at(int y, int x) { return idx[static_cast<size_t>(y) * w + x]; }
    int at(int y, int x) const { return idx[static_cast<size_t>(y) * w + x]; }
};

/// Ordered multi-focus stack. layer_meta[l] is the focus-bin index of layer l,
/// or empty when the provenance of a layer is unknown.
struct FocalStack {
    std::vector<Image> layers;
    std::vector<std::optional<int>> layer_meta;

    int layer_count() const { return static_cast<int>(layers.size()); }
    int h() const { return layers.empty() ? 0 : layers[0].h; }
    int w() const { return layers.empty() ? 0 : layers[0].w; }
    int channels() const { return layers.empty() ? 0 : layers[0].c; }
};

/// index(p) = min(floor(depth(p) * layers), layers - 1).
LayerIndexMap stratify_depth(const DepthMap& depth, int layers);

/// Renders one layer per focus bin: layer l blurs each pixel with
/// sigma = blur_gain * |bin(p) - l| (per-bin whole-image blurs composited by
/// the bin mask); a pixel on its own bin's layer is untouched.
FocalStack synthesize_stack(const Image& image, const DepthMap& depth, int layers,
                            double blur_gain);

/// True iff the union of the closed intervals covers target.
bool check_completeness(const std::vector<DoFInterval>& intervals, const DoFInterval& target);

/// True iff no two interval interiors intersect (shared endpoints allowed).
bool check_efficiency(const std::vector<DoFInterval>& intervals);

/// Removes floor(drop_fraction * L) distinct layers chosen uniformly; at least
/// one layer survives and relative order is preserved. Returns the surviving
/// stack; dropped_out, when non-null, receives the dropped indices (sorted).
FocalStack drop_layers(const FocalStack& stack, double drop_fraction, Rng& rng,
                       std::vector<int>* dropped_out = nullptr);

/// On-disk layout: layer_000.png ... layer_{L-1}.png, depth.ffd, manifest.json.
struct StackManifest {
    int layers = 0;
    double blur_gain = 0.0;
    std::vector<int> dropped;
    std::uint64_t seed = 0;
    std::vector<std::optional<int>> layer_meta;
};

void save_stack(const std::string& dir, const FocalStack& stack, const DepthMap* depth,
                const StackManifest& manifest);
FocalStack load_stack(const std::string& dir, StackManifest* manifest_out = nullptr);

}  // namespace focalforge
