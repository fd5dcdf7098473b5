#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "focalforge/autograd.hpp"
#include "focalforge/image.hpp"
#include "focalforge/nn.hpp"
#include "focalforge/rng.hpp"

namespace focalforge {

/// Raised when a model is used before training marked it ready.
class NotReadyError : public std::runtime_error {
public:
    explicit NotReadyError(const std::string& what) : std::runtime_error(what) {}
};

enum class SigmaMode { kBeta, kPosterior };

SigmaMode sigma_mode_from_string(const std::string& s);
std::string to_string(SigmaMode m);

/// Forward-process tables. Index t runs 1..T; vectors are 0-based (entry 0
/// belongs to t = 1).
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar, sigma;

    double beta_at(int t) const { return beta[static_cast<size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<size_t>(t - 1)]; }
    double sigma_at(int t) const { return sigma[static_cast<size_t>(t - 1)]; }
};

/// Linear beta ramp; alpha_t = 1 - beta_t, alpha_bar_t = prod alpha_s.
/// sigma_t^2 = beta_t, or beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
/// in posterior mode.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                            SigmaMode mode = SigmaMode::kBeta);

/// sqrt(alpha_bar_t) * z + sqrt(1 - alpha_bar_t) * eps.
Tensor q_sample(const Tensor& z, int t, const Tensor& eps, const NoiseSchedule& s);

/// One ancestral step:
/// (z_t - (1-alpha_t)/sqrt(1-alpha_bar_t) * eps_pred) / sqrt(alpha_t) + sigma_t * noise.
/// noise may be null; it is forced to zero at t = 1.
Tensor p_sample_step(const Tensor& z_t, int t, const Tensor& eps_pred, const NoiseSchedule& s,
                     const Tensor* noise = nullptr);

/// Noise predictor evaluated at (z_t, t); conditioning is fixed to the
/// model's learned null token.
using DenoiseFn = std::function<Tensor(const Tensor&, int)>;

/// Per-element mean of || eps - denoiser(q_sample(z, t, eps), t) ||^2.
double ldm_loss(const DenoiseFn& denoiser, const Tensor& z, int t, const Tensor& eps,
                const NoiseSchedule& s);

// ---------------------------------------------------------------------------

struct AutoencoderConfig {
    int down_factor = 4;  // power of two
    int latent_channels = 4;
    int base_width = 16;
    std::uint64_t init_seed = 0xae5eedULL;

    nlohmann::json to_json() const;
    static AutoencoderConfig from_json(const nlohmann::json& j);
};

/// Reconstruction autoencoder with a small KL regularizer defining the latent
/// space the diffusion operates in.
class Autoencoder {
public:
    explicit Autoencoder(AutoencoderConfig cfg);

    const AutoencoderConfig& config() const { return cfg_; }
    nn::ParamMap& params() { return pm_; }
    const nn::ParamMap& params() const { return pm_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    /// Deterministic encode (posterior mean). Throws NotReadyError untrained.
    Tensor encode(const Image& img) const;
    /// Decode with output clamped to [0,1]. Throws NotReadyError untrained.
    Image decode(const Tensor& latent) const;

    // Graph builders (no readiness gate; used by training).
    ag::Var encode_graph(const ag::Var& x, ag::Var* logvar_out = nullptr) const;  // [N,3,H,W]
    ag::Var decode_graph(const ag::Var& z) const;

    void save(const std::string& path, long step = 0, const std::string& rng_state = "") const;
    static Autoencoder load(const std::string& path);

private:
    AutoencoderConfig cfg_;
    nn::ParamMap pm_;
    bool trained_ = false;

    std::vector<nn::Conv2d> enc_down_;
    std::vector<nn::Conv2d> enc_refine_;
    nn::Conv2d enc_mid_a_, enc_mid_b_, enc_out_;
    nn::Conv2d dec_in_, dec_mid_a_, dec_mid_b_;
    std::vector<nn::Conv2d> dec_up_;
    std::vector<nn::Conv2d> dec_refine_;
    nn::Conv2d dec_out_;
};

// ---------------------------------------------------------------------------

struct DenoiserConfig {
    int latent_channels = 4;
    int base_width = 32;
    int temb_dim = 64;
    std::uint64_t init_seed = 0xd1f05eedULL;
    // Echo of the schedule the denoiser was trained against.
    int schedule_T = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
};

/// Small time-conditioned U-Net over latents predicting the added noise.
/// The prompt conditioning of the objective is a single learned constant
/// token folded into the time embedding.
class UNetDenoiser {
public:
    explicit UNetDenoiser(DenoiserConfig cfg);

    const DenoiserConfig& config() const { return cfg_; }
    nn::ParamMap& params() { return pm_; }
    const nn::ParamMap& params() const { return pm_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }
    void set_schedule_info(int T, double beta_start, double beta_end) {
        cfg_.schedule_T = T;
        cfg_.beta_start = beta_start;
        cfg_.beta_end = beta_end;
    }
    /// Rebuilds the schedule echoed in the config.
    NoiseSchedule schedule(SigmaMode mode = SigmaMode::kBeta) const {
        return make_schedule(cfg_.schedule_T, cfg_.beta_start, cfg_.beta_end, mode);
    }

    /// eps_theta(z_t, t) for a single latent [c,h,w].
    Tensor predict(const Tensor& z_t, int t) const;
    DenoiseFn as_fn() const;

    /// Batched graph: z [N,c,h,w], one timestep per sample.
    ag::Var predict_graph(const ag::Var& z, const std::vector<int>& ts) const;

    void save(const std::string& path, long step = 0, const std::string& rng_state = "") const;
    static UNetDenoiser load(const std::string& path);

private:
    ag::Var time_embedding(const std::vector<int>& ts) const;  // [N,temb_dim]

    struct ResBlock {
        nn::GroupNorm gn1, gn2;
        nn::Conv2d conv1, conv2, skip;
        nn::Linear temb;
        bool has_skip = false;
    };
    ResBlock make_res(const std::string& name, int in_ch, int out_ch, Rng& rng);
    ag::Var run_res(const ResBlock& rb, const ag::Var& x, const ag::Var& temb) const;

    DenoiserConfig cfg_;
    nn::ParamMap pm_;
    bool trained_ = false;

    nn::Linear temb1_, temb2_;
    ag::Var null_token_;
    nn::Conv2d stem_;
    ResBlock res_down_;
    nn::Conv2d down_;
    ResBlock res_mid_;
    nn::Conv2d up_;
    ResBlock res_up_;
    nn::GroupNorm out_gn_;
    nn::Conv2d out_;

    friend class ControlBranch;
};

// ---------------------------------------------------------------------------
// training

struct TrainAeConfig {
    int steps = 1200;
    int batch = 8;
    double lr = 2e-3;
    double kl_weight = 1e-6;
    std::uint64_t seed = 11;
    int log_every = 50;
};

struct TrainDiffusionConfig {
    int steps = 2000;
    int batch = 16;
    double lr = 2e-3;
    std::uint64_t seed = 13;
    int log_every = 50;
};

struct TrainCurve {
    std::vector<std::pair<long, double>> points;  // (step, loss)
    double final_loss = 0.0;
};

/// L1 reconstruction + kl_weight * KL. Marks the model trained and writes the
/// checkpoint/CSV when paths are given.
TrainCurve train_autoencoder(Autoencoder& ae, const std::vector<Image>& images,
                             const TrainAeConfig& cfg, const std::string& ckpt_path = "",
                             const std::string& log_path = "");

/// Noise-prediction objective over latents of the frozen autoencoder with
/// uniformly sampled timesteps.
TrainCurve train_denoiser(UNetDenoiser& unet, const Autoencoder& ae,
                          const std::vector<Image>& images, const NoiseSchedule& schedule,
                          const TrainDiffusionConfig& cfg, const std::string& ckpt_path = "",
                          const std::string& log_path = "");

/// Uniform timestep draw in [1, T].
int sample_timestep(Rng& rng, int T);

/// Ancestral sampling from pure noise (no conditioning). Draws z_T then one
/// noise tensor per step t in T..2.
Tensor unconditional_sample(const UNetDenoiser& unet, const NoiseSchedule& schedule,
                            const std::vector<int>& latent_shape, Rng& rng);

}  // namespace focalforge
