#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "focalforge/autograd.hpp"
#include "focalforge/image.hpp"
#include "focalforge/nn.hpp"
#include "focalforge/stack_synth.hpp"

namespace focalforge {

enum class FuseMode { kSoft, kHard };

FuseMode fuse_mode_from_string(const std::string& s);
std::string to_string(FuseMode m);

/// Per-pixel probability distribution over stack layers.
struct FocusMap {
    Tensor probs;  // [L,H,W]

    int layers() const { return probs.rank() == 3 ? probs.dim(0) : 0; }
    int h() const { return probs.rank() == 3 ? probs.dim(1) : 0; }
    int w() const { return probs.rank() == 3 ? probs.dim(2) : 0; }
};

struct FusionConfig {
    std::vector<int> encoder_widths{16, 24, 40, 64};
    int feature_dim = 32;
    double pool_ratio = 0.25;  // 1 disables pooling (per-pixel cross-layer attention)
    int heads = 2;
    int loops = 1;
    FuseMode fuse_mode = FuseMode::kSoft;
    std::uint64_t init_seed = 0x5eedULL;

    nlohmann::json to_json() const;
    static FusionConfig from_json(const nlohmann::json& j);
};

/// Pooled token-grid extent for a spatial extent and pooling ratio
/// (after padding to a multiple of the pooling kernel).
int pooled_extent(int extent, double pool_ratio);

/// Soft: per-pixel convex combination of layers under the map; hard: per-pixel
/// selection of the argmax layer, ties to the lowest index.
Image fuse(const FocalStack& stack, const FocusMap& map, FuseMode mode);

/// Deterministic stack-fusion network: weight-shared per-layer focus
/// estimation, spatial-aggregation cross-layer attention, an iterative
/// refinement loop, and softmax focus-map generation. All cross-layer
/// reductions accumulate order-invariantly, so the forward pass is bit-exact
/// under layer permutation.
class FusionModel {
public:
    explicit FusionModel(FusionConfig cfg);

    const FusionConfig& config() const { return cfg_; }
    nn::ParamMap& params() { return pm_; }
    const nn::ParamMap& params() const { return pm_; }

    // Graph builders, shared between training and inference.
    ag::Var encode_layers(const ag::Var& stack_lchw) const;      // [L,3,H,W] -> [L,D,h,w]
    ag::Var saca_graph(const ag::Var& volume) const;             // stage-2 attention
    ag::Var refine_graph(const ag::Var& volume, int n_loops) const;
    ag::Var logit_rows(const ag::Var& volume, int out_h, int out_w) const;  // [H*W, L]

    // Stage-level operations on plain tensors.
    Tensor intra_layer_focus(const FocalStack& stack) const;
    Tensor saca(const Tensor& volume) const;
    Tensor refine_loop(const Tensor& volume, int n_loops) const;
    FocusMap focus_map(const Tensor& volume, int out_h, int out_w) const;

    std::pair<Image, FocusMap> forward(const FocalStack& stack) const;
    std::pair<Image, FocusMap> forward(const FocalStack& stack, FuseMode mode) const;

    void save(const std::string& path, long step = 0, const std::string& rng_state = "") const;
    static FusionModel load(const std::string& path);

private:
    struct Attn {
        nn::LayerNorm ln1, ln2;
        nn::Linear q, k, v, o, ff1, ff2;
    };

    ag::Var attention_block(const ag::Var& tokens, const Attn& a) const;  // [B,L,D]
    ag::Var saca_with(const ag::Var& volume, const Attn& a) const;

    FusionConfig cfg_;
    nn::ParamMap pm_;

    nn::Conv2d enc_[4];
    nn::Conv2d lat_[3];    // laterals for stages 2..4
    nn::Conv2d merge_[2];  // top-down merge convs
    Attn attn_main_, attn_loop_;
    nn::Conv2d refine1_, refine2_;
    nn::Conv2d proj_;
};

/// Tensor bridge: FocalStack -> [L,C,H,W].
Tensor stack_to_tensor(const FocalStack& stack);

}  // namespace focalforge
