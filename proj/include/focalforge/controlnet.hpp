#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "focalforge/diffusion.hpp"

namespace focalforge {

struct ControlConfig {
    int latent_channels = 4;
    int base_width = 16;  // half the denoiser width
    int temb_dim = 64;
    std::uint64_t init_seed = 0xc0de5eedULL;

    nlohmann::json to_json() const;
    static ControlConfig from_json(const nlohmann::json& j);
};

/// Zero-initialized conditioning branch: an encoder-path copy at half width
/// consuming the channel-concatenation of z_t and c_IF with the denoiser's
/// time-embedding layout; the final projection is zero-initialized so a fresh
/// branch emits exactly zero for every input.
class ControlBranch {
public:
    explicit ControlBranch(ControlConfig cfg);

    const ControlConfig& config() const { return cfg_; }
    nn::ParamMap& params() { return pm_; }
    const nn::ParamMap& params() const { return pm_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    /// Residual for a single latent pair [c,h,w].
    Tensor residual(const Tensor& z_t, const Tensor& c_if, int t) const;

    /// Batched graph: z,c [N,c,h,w], one timestep per sample.
    ag::Var residual_graph(const ag::Var& z_t, const ag::Var& c_if,
                           const std::vector<int>& ts) const;

    void save(const std::string& path, long step = 0, const std::string& rng_state = "") const;
    static ControlBranch load(const std::string& path);

private:
    ag::Var time_embedding(const std::vector<int>& ts) const;

    struct ResBlock {
        nn::GroupNorm gn1, gn2;
        nn::Conv2d conv1, conv2;
        nn::Linear temb;
    };
    ResBlock make_res(const std::string& name, int ch, Rng& rng);
    ag::Var run_res(const ResBlock& rb, const ag::Var& x, const ag::Var& temb) const;

    ControlConfig cfg_;
    nn::ParamMap pm_;
    bool trained_ = false;

    nn::Linear temb1_, temb2_;
    nn::Conv2d stem_;
    ResBlock res_hi_;
    nn::Conv2d down_;
    ResBlock res_lo_;
    nn::Conv2d up_;
    nn::Conv2d proj_;  // zero-initialized
};

/// c_IF = encode(I_IF); the same deterministic encoder as the backbone's.
Tensor encode_condition(const Image& fused, const Autoencoder& ae);

/// z~_t = z_t + f_phi(z_t, c_IF, t), then one ancestral step with
/// eps_theta(z~_t, t). The residual modifies the denoiser input only.
Tensor conditioned_denoise_step(const Tensor& z_t, int t, const ControlBranch& branch,
                                const UNetDenoiser& denoiser, const Tensor& c_if,
                                const NoiseSchedule& schedule, const Tensor* noise = nullptr);

struct RestorationModels {
    const Autoencoder* vae = nullptr;
    const UNetDenoiser* denoiser = nullptr;
    const ControlBranch* control = nullptr;
};

struct RestorationConfig {
    int steps = 0;  // 0 = full schedule length
    SigmaMode sigma_mode = SigmaMode::kBeta;
    std::uint64_t seed = 0;
};

/// encode_condition -> z_T ~ N(0,I) -> conditioned steps T..1 -> decode.
/// Deterministic given the seed.
Image restore(const Image& fused, const RestorationModels& models, const NoiseSchedule& schedule,
              const RestorationConfig& cfg);

// ---------------------------------------------------------------------------

struct TrainControlConfig {
    int steps = 3000;
    int phase1_steps = 2000;
    double lr1 = 1e-3;
    double lr2 = 1e-4;
    int batch = 16;
    std::uint64_t seed = 17;
    int log_every = 50;
    bool unfreeze_backbone = false;  // contract violation when set
};

/// Optimizes the noise-prediction objective where the denoiser consumes
/// z~_t = z_t + f_phi(z_t, c_IF, t). The autoencoder and denoiser stay
/// frozen; their parameter hashes are verified unchanged.
TrainCurve train_control(ControlBranch& branch,
                         const std::vector<std::pair<Image, Image>>& pairs,  // (degraded fused, gt)
                         const Autoencoder& ae, const UNetDenoiser& denoiser,
                         const NoiseSchedule& schedule, const TrainControlConfig& cfg,
                         const std::string& ckpt_path = "", const std::string& log_path = "");

}  // namespace focalforge
