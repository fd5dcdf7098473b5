#include "focalforge/stack_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "focalforge/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace focalforge {

LayerIndexMap stratify_depth(const DepthMap& depth, int layers) {
    if (layers < 1) throw std::invalid_argument("stratify_depth: layer count must be >= 1");
    validate_depth(depth);
    LayerIndexMap m;
    m.layers = layers;
    m.h = depth.h;
    m.w = depth.w;
    m.idx.resize(depth.v.size());
    for (size_t i = 0; i < depth.v.size(); ++i) {
        int b = static_cast<int>(std::floor(depth.v[i] * layers));
        m.idx[i] = std::min(b, layers - 1);
    }
    return m;
}

FocalStack synthesize_stack(const Image& image, const DepthMap& depth, int layers,
                            double blur_gain) {
    if (image.h != depth.h || image.w != depth.w)
        throw std::invalid_argument("synthesize_stack: image/depth dimension mismatch");
    if (blur_gain < 0.0) throw std::invalid_argument("synthesize_stack: blur_gain must be >= 0");
    const LayerIndexMap bins = stratify_depth(depth, layers);

    // One blur per bin distance, shared across layers.
    std::vector<Image> by_distance(static_cast<size_t>(layers));
    by_distance[0] = image;
    for (int d = 1; d < layers; ++d)
        by_distance[static_cast<size_t>(d)] = gaussian_blur(image, blur_gain * d);

    FocalStack stack;
    stack.layers.reserve(static_cast<size_t>(layers));
    for (int l = 0; l < layers; ++l) {
        Image layer(image.h, image.w, image.c);
        for (int y = 0; y < image.h; ++y)
            for (int x = 0; x < image.w; ++x) {
                const int d = std::abs(bins.at(y, x) - l);
                const Image& src = by_distance[static_cast<size_t>(d)];
                for (int c = 0; c < image.c; ++c) layer.at(y, x, c) = src.at(y, x, c);
            }
        clamp01(layer);
        stack.layers.push_back(std::move(layer));
        stack.layer_meta.push_back(l);
    }
    return stack;
}

bool check_completeness(const std::vector<DoFInterval>& intervals, const DoFInterval& target) {
    if (intervals.empty()) throw std::invalid_argument("check_completeness: empty interval list");
    std::vector<DoFInterval> sorted = intervals;
    std::sort(sorted.begin(), sorted.end(),
              [](const DoFInterval& a, const DoFInterval& b) { return a.near < b.near; });
    // Merge closed intervals and test whether one merged run spans the target.
    double cover_to = target.near;
    for (const auto& iv : sorted) {
        if (iv.near > cover_to) break;  // gap before reaching target.far
        cover_to = std::max(cover_to, iv.far);
        if (cover_to >= target.far) return true;
    }
    return cover_to >= target.far;
}

bool check_efficiency(const std::vector<DoFInterval>& intervals) {
    if (intervals.empty()) throw std::invalid_argument("check_efficiency: empty interval list");
    std::vector<DoFInterval> sorted = intervals;
    std::sort(sorted.begin(), sorted.end(),
              [](const DoFInterval& a, const DoFInterval& b) { return a.near < b.near; });
    for (size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].near < sorted[i - 1].far) return false;
    return true;
}

FocalStack drop_layers(const FocalStack& stack, double drop_fraction, Rng& rng,
                       std::vector<int>* dropped_out) {
    if (drop_fraction < 0.0 || drop_fraction > 0.5)
        throw std::invalid_argument("drop_layers: drop_fraction must be in [0, 0.5]");
    const int layers = stack.layer_count();
    if (layers < 1) throw std::invalid_argument("drop_layers: empty stack");
    const int k = static_cast<int>(std::floor(drop_fraction * layers));

    // Partial Fisher-Yates: first k entries are a uniform k-subset.
    std::vector<int> order(static_cast<size_t>(layers));
    for (int i = 0; i < layers; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i)
        std::swap(order[static_cast<size_t>(i)],
                  order[static_cast<size_t>(rng.uniform_int(i, layers - 1))]);
    std::vector<int> dropped(order.begin(), order.begin() + k);
    std::sort(dropped.begin(), dropped.end());
    if (dropped_out) *dropped_out = dropped;

    FocalStack out;
    size_t di = 0;
    for (int l = 0; l < layers; ++l) {
        if (di < dropped.size() && dropped[di] == l) {
            ++di;
            continue;
        }
        out.layers.push_back(stack.layers[static_cast<size_t>(l)]);
        out.layer_meta.push_back(stack.layer_meta[static_cast<size_t>(l)]);
    }
    return out;
}

void save_stack(const std::string& dir, const FocalStack& stack, const DepthMap* depth,
                const StackManifest& manifest) {
    fs::create_directories(dir);
    char name[32];
    for (int l = 0; l < stack.layer_count(); ++l) {
        std::snprintf(name, sizeof(name), "layer_%03d.png", l);
        write_png((fs::path(dir) / name).string(), stack.layers[static_cast<size_t>(l)]);
    }
    if (depth) write_grid((fs::path(dir) / "depth.ffd").string(), *depth);

    json j;
    j["layers"] = manifest.layers;
    j["blur_gain"] = manifest.blur_gain;
    j["dropped"] = manifest.dropped;
    j["seed"] = manifest.seed;
    json meta = json::array();
    for (const auto& m : manifest.layer_meta) {
        if (m)
            meta.push_back(*m);
        else
            meta.push_back(nullptr);
    }
    j["layer_meta"] = meta;
    std::ofstream f(fs::path(dir) / "manifest.json");
    f << j.dump(2) << "\n";
}

FocalStack load_stack(const std::string& dir, StackManifest* manifest_out) {
    if (!fs::is_directory(dir)) throw std::runtime_error("stack directory not found: " + dir);
    std::vector<std::string> layer_files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string fn = e.path().filename().string();
        if (fn.rfind("layer_", 0) == 0 && e.path().extension() == ".png")
            layer_files.push_back(e.path().string());
    }
    if (layer_files.empty()) throw std::runtime_error("no layer_*.png files in " + dir);
    std::sort(layer_files.begin(), layer_files.end());

    FocalStack stack;
    for (const auto& p : layer_files) stack.layers.push_back(read_png(p));
    stack.layer_meta.assign(stack.layers.size(), std::nullopt);

    StackManifest manifest;
    const fs::path mpath = fs::path(dir) / "manifest.json";
    if (fs::exists(mpath)) {
        std::ifstream f(mpath);
        json j;
        f >> j;
        manifest.layers = j.value("layers", static_cast<int>(stack.layers.size()));
        manifest.blur_gain = j.value("blur_gain", 0.0);
        manifest.dropped = j.value("dropped", std::vector<int>{});
        manifest.seed = j.value("seed", 0ULL);
        if (j.contains("layer_meta")) {
            size_t i = 0;
            for (const auto& m : j["layer_meta"]) {
                if (i >= stack.layer_meta.size()) break;
                if (!m.is_null()) stack.layer_meta[i] = m.get<int>();
                ++i;
            }
        }
        manifest.layer_meta = stack.layer_meta;
    } else {
        // No manifest: treat positions as bins.
        for (size_t i = 0; i < stack.layer_meta.size(); ++i)
            stack.layer_meta[i] = static_cast<int>(i);
        manifest.layers = static_cast<int>(stack.layers.size());
        manifest.layer_meta = stack.layer_meta;
    }
    if (manifest_out) *manifest_out = manifest;
    return stack;
}

}  // namespace focalforge
