#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "focalforge/baselines.hpp"
#include "focalforge/controlnet.hpp"
#include "focalforge/fusion_net.hpp"
#include "focalforge/synthdata.hpp"
#include "focalforge/train_fusion.hpp"

namespace focalforge {

/// True where the pixel is at Chebyshev distance >= min_dist from any bin
/// boundary of the stratification map.
std::vector<bool> boundary_margin_mask(const LayerIndexMap& bins, int min_dist);

/// Fraction of masked pixels where the two decision maps agree.
double agreement_fraction(const LayerIndexMap& a, const LayerIndexMap& b,
                          const std::vector<bool>& mask);

/// Hard decision map from a focus map (argmax, ties to the lowest index).
LayerIndexMap hard_decisions(const FocusMap& map);

/// Degraded-fused / ground-truth pairs for control training: scene ->
/// synthesize -> random layer drop in [drop_min, drop_max] -> deterministic
/// fusion (the same pipeline inference uses).
std::vector<std::pair<Image, Image>> make_control_pairs(int count, const SceneParams& scene,
                                                        int layers, double blur_gain,
                                                        double drop_min, double drop_max,
                                                        const FusionModel& fusion, Rng& rng);

struct BenchOptions {
    std::uint64_t seed = 7;
    int cases = 12;
    int size = 64;
    int layers = 5;
    double blur_gain = 1.5;
    std::string fusion_ckpt;      // empty: model row omitted
    std::string vae_ckpt;         // all three present: restored row added
    std::string diffusion_ckpt;
    std::string control_ckpt;
    int restore_steps = 0;        // 0 = schedule length
    std::string out_dir;
};

struct BenchRow {
    std::string method;
    double mean_ssim = 0.0;
    double mean_psnr = 0.0;
    double mean_sharpness = 0.0;
};

/// synth -> fuse (each method) -> optional restore -> eval. Emits bench.csv
/// and bench.md into out_dir when set; byte-identical for equal seeds.
std::vector<BenchRow> run_bench(const BenchOptions& opts);

struct AblateOptions {
    std::uint64_t seed = 7;
    int train_scenes = 120;
    int size = 64;
    int epochs = 6;
    std::string out_dir;
    std::vector<int> loop_counts{0, 1, 2};
    std::vector<double> pool_ratios{0.5, 0.25, 0.125, 0.0625};
};

struct AblateRow {
    std::string setting;
    double val_ssim = 0.0;
    double val_psnr = 0.0;
};

/// Trains one small model per loop count on identical seed/data.
std::vector<AblateRow> run_loop_ablation(const AblateOptions& opts);
/// Trains one small model per SACA pooling ratio on identical seed/data.
std::vector<AblateRow> run_pool_ablation(const AblateOptions& opts);

void write_ablation_files(const std::string& out_dir, const std::string& name,
                          const std::vector<AblateRow>& rows);

}  // namespace focalforge
