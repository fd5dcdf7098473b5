#pragma once

#include <string>
#include <utility>
#include <vector>

#include "focalforge/fusion_net.hpp"
#include "focalforge/image.hpp"
#include "focalforge/rng.hpp"
#include "focalforge/stack_synth.hpp"

namespace focalforge {

struct TrainFusionConfig {
    int batch = 8;
    double lr = 1e-3;
    double decay = 0.9;  // per-epoch multiplier
    int epochs = 12;
    int patience = 4;
    int image_size = 64;
    int layers_min = 3;
    int layers_max = 7;
    double blur_gain_min = 1.0;
    double blur_gain_max = 2.0;
    double drop_max = 0.5;
    std::uint64_t seed = 7;
    double lambda = 1.0;  // image-term weight
    int val_count = 24;
    FusionConfig model;

    void validate() const;
};

/// Supervision for one synthesized stack: the (possibly layer-dropped) stack,
/// the per-pixel target index into the surviving layers, and the sharp source.
struct TrainingPair {
    FocalStack stack;
    std::vector<int> target_map;  // h*w entries, surviving-layer indices
    int h = 0, w = 0;
    Image target_image;
};

/// synthesize -> drop -> remap targets to the surviving layer whose focus bin
/// is nearest the pixel's bin (ties to the lower bin).
TrainingPair make_training_pair(const Image& image, const DepthMap& depth,
                                const TrainFusionConfig& cfg, Rng& rng);

/// Mean per-pixel cross-entropy of the map plus lambda * mean absolute error
/// of the fused image.
double fusion_loss(const FocusMap& pred_map, const Image& pred_image, const TrainingPair& target,
                   double lambda);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double val_ssim = 0.0;
    double val_psnr = 0.0;
};

struct TrainFusionResult {
    std::vector<EpochStats> epochs;
    double best_val_ssim = 0.0;
    int best_epoch = -1;
};

/// Deterministic given cfg.seed. Writes the best checkpoint to ckpt_path and
/// a CSV metrics log (epoch, loss, val SSIM, val PSNR) to log_path when the
/// paths are non-empty.
TrainFusionResult train_fusion(FusionModel& model,
                               const std::vector<std::pair<Image, DepthMap>>& dataset,
                               const TrainFusionConfig& cfg, const std::string& ckpt_path = "",
                               const std::string& log_path = "");

}  // namespace focalforge
