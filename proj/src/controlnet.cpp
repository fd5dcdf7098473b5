#include "focalforge/controlnet.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "focalforge/checkpoint.hpp"

using nlohmann::json;

namespace focalforge {

json ControlConfig::to_json() const {
    return json{{"latent_channels", latent_channels},
                {"base_width", base_width},
                {"temb_dim", temb_dim},
                {"init_seed", init_seed}};
}

ControlConfig ControlConfig::from_json(const json& j) {
    ControlConfig c;
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.base_width = j.value("base_width", c.base_width);
    c.temb_dim = j.value("temb_dim", c.temb_dim);
    c.init_seed = j.value("init_seed", c.init_seed);
    return c;
}

ControlBranch::ResBlock ControlBranch::make_res(const std::string& name, int ch, Rng& rng) {
    ResBlock rb;
    rb.gn1 = nn::GroupNorm(pm_, name + ".gn1", ch, std::min(8, ch));
    rb.conv1 = nn::Conv2d(pm_, name + ".conv1", ch, ch, 3, 1, 1, rng);
    rb.temb = nn::Linear(pm_, name + ".temb", cfg_.temb_dim, ch, rng);
    rb.gn2 = nn::GroupNorm(pm_, name + ".gn2", ch, std::min(8, ch));
    rb.conv2 = nn::Conv2d(pm_, name + ".conv2", ch, ch, 3, 1, 1, rng);
    return rb;
}

ag::Var ControlBranch::run_res(const ResBlock& rb, const ag::Var& x, const ag::Var& temb) const {
    using namespace ag;
    Var h = rb.conv1(silu(rb.gn1(x)));
    h = add_rowbias_nchw(h, rb.temb(temb));
    h = rb.conv2(silu(rb.gn2(h)));
    return add(x, h);
}

ControlBranch::ControlBranch(ControlConfig cfg) : cfg_(std::move(cfg)) {
    Rng rng(cfg_.init_seed);
    const int w = cfg_.base_width;
    temb1_ = nn::Linear(pm_, "temb1", cfg_.temb_dim, cfg_.temb_dim, rng);
    temb2_ = nn::Linear(pm_, "temb2", cfg_.temb_dim, cfg_.temb_dim, rng);
    stem_ = nn::Conv2d(pm_, "stem", 2 * cfg_.latent_channels, w, 3, 1, 1, rng);
    res_hi_ = make_res("res_hi", w, rng);
    down_ = nn::Conv2d(pm_, "down", w, 2 * w, 3, 2, 1, rng);
    res_lo_ = make_res("res_lo", 2 * w, rng);
    up_ = nn::Conv2d(pm_, "up", 2 * w, w, 3, 1, 1, rng);
    proj_ = nn::Conv2d(pm_, "proj", 2 * w, cfg_.latent_channels, 1, 1, 0, rng, /*zero_init=*/true);
}

ag::Var ControlBranch::time_embedding(const std::vector<int>& ts) const {
    using namespace ag;
    const int N = static_cast<int>(ts.size());
    const int E = cfg_.temb_dim;
    const int half = E / 2;
    Tensor sinus({N, E});
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            sinus.at(n, i) = std::sin(ts[static_cast<size_t>(n)] * freq);
            sinus.at(n, half + i) = std::cos(ts[static_cast<size_t>(n)] * freq);
        }
    return temb2_(silu(temb1_(constant(std::move(sinus)))));
}

ag::Var ControlBranch::residual_graph(const ag::Var& z_t, const ag::Var& c_if,
                                      const std::vector<int>& ts) const {
    using namespace ag;
    if (!z_t->value.same_shape(c_if->value))
        throw std::invalid_argument("control residual: z_t and c_IF shapes disagree");
    if (z_t->value.rank() != 4 || z_t->value.dim(0) != static_cast<int>(ts.size()))
        throw std::invalid_argument("control residual: batch/timestep mismatch");
    Var temb = time_embedding(ts);
    Var h = stem_(concat_channels(z_t, c_if));
    Var hi = run_res(res_hi_, h, temb);
    Var lo = run_res(res_lo_, down_(hi), temb);
    Var u = up_(bilinear_upsample(lo, hi->value.dim(2), hi->value.dim(3)));
    return proj_(concat_channels(u, hi));
}

Tensor ControlBranch::residual(const Tensor& z_t, const Tensor& c_if, int t) const {
    if (z_t.rank() != 3 || c_if.rank() != 3)
        throw std::invalid_argument("control residual: expects [c,h,w] latents");
    const auto& s = z_t.shape();
    ag::Var z = ag::constant(z_t.reshaped({1, s[0], s[1], s[2]}));
    ag::Var c = ag::constant(c_if.reshaped({1, c_if.dim(0), c_if.dim(1), c_if.dim(2)}));
    Tensor out = residual_graph(z, c, {t})->value;
    return out.reshaped({s[0], s[1], s[2]});
}

void ControlBranch::save(const std::string& path, long step, const std::string& rng_state) const {
    json cfg = cfg_.to_json();
    cfg["trained"] = trained_;
    save_checkpoint(path, "control", cfg, step, rng_state, pm_);
}

ControlBranch ControlBranch::load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "control") throw std::runtime_error("not a control checkpoint: " + path);
    ControlBranch cb(ControlConfig::from_json(ckpt.config));
    apply_checkpoint(ckpt, cb.pm_);
    cb.trained_ = ckpt.config.value("trained", false);
    return cb;
}

// ---------------------------------------------------------------------------

Tensor encode_condition(const Image& fused, const Autoencoder& ae) { return ae.encode(fused); }

Tensor conditioned_denoise_step(const Tensor& z_t, int t, const ControlBranch& branch,
                                const UNetDenoiser& denoiser, const Tensor& c_if,
                                const NoiseSchedule& schedule, const Tensor* noise) {
    const Tensor delta = branch.residual(z_t, c_if, t);
    Tensor z_mod(z_t.shape());
    for (std::int64_t i = 0; i < z_t.size(); ++i) z_mod[i] = z_t[i] + delta[i];
    const Tensor eps = denoiser.predict(z_mod, t);
    return p_sample_step(z_mod, t, eps, schedule, noise);
}

Image restore(const Image& fused, const RestorationModels& models, const NoiseSchedule& schedule,
              const RestorationConfig& cfg) {
    if (!models.vae || !models.denoiser || !models.control)
        throw std::invalid_argument("restore: missing models");
    if (!models.vae->trained()) throw NotReadyError("restore: autoencoder is not trained");
    if (!models.denoiser->trained()) throw NotReadyError("restore: denoiser is not trained");

    const Tensor c_if = encode_condition(fused, *models.vae);
    const std::vector<int> shape = c_if.shape();

    const int start = cfg.steps > 0 ? std::min(cfg.steps, schedule.T) : schedule.T;
    Rng rng(cfg.seed);
    Tensor z = rng.normal_tensor(shape);
    for (int t = start; t >= 1; --t) {
        Tensor noise;
        if (t > 1) noise = rng.normal_tensor(shape);
        z = conditioned_denoise_step(z, t, *models.control, *models.denoiser, c_if, schedule,
                                     t > 1 ? &noise : nullptr);
    }
    return models.vae->decode(z);
}

TrainCurve train_control(ControlBranch& branch, const std::vector<std::pair<Image, Image>>& pairs,
                         const Autoencoder& ae, const UNetDenoiser& denoiser,
                         const NoiseSchedule& schedule, const TrainControlConfig& cfg,
                         const std::string& ckpt_path, const std::string& log_path) {
    if (pairs.empty()) throw std::invalid_argument("train_control: empty pair set");
    if (cfg.unfreeze_backbone)
        throw std::logic_error("train_control: backbone must remain frozen");
    if (!ae.trained() || !denoiser.trained())
        throw NotReadyError("train_control: backbone is not trained");

    const std::uint64_t ae_hash_before = nn::param_hash(ae.params());
    const std::uint64_t dn_hash_before = nn::param_hash(denoiser.params());

    Rng rng(cfg.seed);
    std::vector<Tensor> cond, target;
    cond.reserve(pairs.size());
    target.reserve(pairs.size());
    for (const auto& [degraded, gt] : pairs) {
        cond.push_back(ae.encode(degraded));
        target.push_back(ae.encode(gt));
    }
    const int n = static_cast<int>(pairs.size());
    const int C = cond[0].dim(0), H = cond[0].dim(1), W = cond[0].dim(2);

    nn::AdamW opt(branch.params(), cfg.lr1);
    TrainCurve curve;
    double running = 0.0;
    int running_n = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        opt.set_lr(step < cfg.phase1_steps ? cfg.lr1 : cfg.lr2);

        Tensor z_t({cfg.batch, C, H, W});
        Tensor c_if({cfg.batch, C, H, W});
        Tensor eps({cfg.batch, C, H, W});
        std::vector<int> ts(static_cast<size_t>(cfg.batch));
        for (int k = 0; k < cfg.batch; ++k) {
            const int idx = rng.uniform_int(0, n - 1);
            const Tensor& z0 = target[static_cast<size_t>(idx)];
            const Tensor& cf = cond[static_cast<size_t>(idx)];
            const int t = sample_timestep(rng, schedule.T);
            ts[static_cast<size_t>(k)] = t;
            const double a = std::sqrt(schedule.alpha_bar_at(t));
            const double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
            for (std::int64_t i = 0; i < z0.size(); ++i) {
                const double e = rng.normal();
                const std::int64_t off = static_cast<std::int64_t>(k) * z0.size() + i;
                eps[off] = e;
                z_t[off] = a * z0[i] + b * e;
                c_if[off] = cf[i];
            }
        }

        using namespace ag;
        Var zt = constant(std::move(z_t));
        Var cf = constant(std::move(c_if));
        Var delta = branch.residual_graph(zt, cf, ts);
        Var z_mod = add(zt, delta);
        Var pred = denoiser.predict_graph(z_mod, ts);
        Var loss = mse_loss(pred, constant(std::move(eps)));

        opt.zero_grad();
        backward(loss);
        opt.step();

        running += scalar(loss);
        ++running_n;
        if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
            curve.points.emplace_back(step + 1, running / running_n);
            running = 0.0;
            running_n = 0;
        }
    }
    curve.final_loss = curve.points.empty() ? 0.0 : curve.points.back().second;

    if (nn::param_hash(ae.params()) != ae_hash_before ||
        nn::param_hash(denoiser.params()) != dn_hash_before)
        throw std::logic_error("train_control: backbone parameters changed during training");

    branch.mark_trained();
    if (!ckpt_path.empty()) branch.save(ckpt_path, cfg.steps, rng.state());
    if (!log_path.empty()) {
        std::ofstream f(log_path);
        if (!f) throw std::runtime_error("cannot write metrics log: " + log_path);
        f << "step,loss\n";
        char buf[64];
        for (const auto& [s, l] : curve.points) {
            std::snprintf(buf, sizeof(buf), "%d,%.6f\n", static_cast<int>(s), l);
            f << buf;
        }
    }
    return curve;
}

}  // namespace focalforge
