#include "focalforge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "focalforge/checkpoint.hpp"

using nlohmann::json;

namespace focalforge {

SigmaMode sigma_mode_from_string(const std::string& s) {
    if (s == "beta") return SigmaMode::kBeta;
    if (s == "posterior") return SigmaMode::kPosterior;
    throw std::invalid_argument("unknown sigma mode: " + s);
}

std::string to_string(SigmaMode m) { return m == SigmaMode::kBeta ? "beta" : "posterior"; }

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, SigmaMode mode) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("make_schedule: require 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    s.sigma.resize(static_cast<size_t>(T));
    double bar = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        const double alpha = 1.0 - beta;
        const double prev_bar = bar;
        bar *= alpha;
        s.beta[static_cast<size_t>(t - 1)] = beta;
        s.alpha[static_cast<size_t>(t - 1)] = alpha;
        s.alpha_bar[static_cast<size_t>(t - 1)] = bar;
        s.sigma[static_cast<size_t>(t - 1)] =
            mode == SigmaMode::kBeta
                ? std::sqrt(beta)
                : std::sqrt(beta * (1.0 - prev_bar) / (1.0 - bar));
    }
    return s;
}

namespace {
void check_t(int t, const NoiseSchedule& s, const char* op) {
    if (t < 1 || t > s.T)
        throw std::invalid_argument(std::string(op) + ": timestep out of range [1," +
                                    std::to_string(s.T) + "]");
}
}  // namespace

Tensor q_sample(const Tensor& z, int t, const Tensor& eps, const NoiseSchedule& s) {
    check_t(t, s, "q_sample");
    if (!z.same_shape(eps)) throw std::invalid_argument("q_sample: shape mismatch");
    const double a = std::sqrt(s.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
    Tensor out(z.shape());
    for (std::int64_t i = 0; i < z.size(); ++i) out[i] = a * z[i] + b * eps[i];
    return out;
}

Tensor p_sample_step(const Tensor& z_t, int t, const Tensor& eps_pred, const NoiseSchedule& s,
                     const Tensor* noise) {
    check_t(t, s, "p_sample_step");
    if (!z_t.same_shape(eps_pred)) throw std::invalid_argument("p_sample_step: shape mismatch");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
    const double coef = (1.0 - s.alpha_at(t)) / std::sqrt(1.0 - s.alpha_bar_at(t));
    Tensor out(z_t.shape());
    for (std::int64_t i = 0; i < z_t.size(); ++i)
        out[i] = inv_sqrt_alpha * (z_t[i] - coef * eps_pred[i]);
    if (noise && t > 1) {
        if (!z_t.same_shape(*noise)) throw std::invalid_argument("p_sample_step: noise shape");
        const double sg = s.sigma_at(t);
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] += sg * (*noise)[i];
    }
    return out;
}

double ldm_loss(const DenoiseFn& denoiser, const Tensor& z, int t, const Tensor& eps,
                const NoiseSchedule& s) {
    const Tensor z_t = q_sample(z, t, eps, s);
    const Tensor pred = denoiser(z_t, t);
    if (!pred.same_shape(eps)) throw std::invalid_argument("ldm_loss: predictor shape mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < eps.size(); ++i) {
        const double d = eps[i] - pred[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps.size());
}

int sample_timestep(Rng& rng, int T) { return rng.uniform_int(1, T); }

// ---------------------------------------------------------------------------
// Autoencoder

json AutoencoderConfig::to_json() const {
    return json{{"down_factor", down_factor},
                {"latent_channels", latent_channels},
                {"base_width", base_width},
                {"init_seed", init_seed}};
}

AutoencoderConfig AutoencoderConfig::from_json(const json& j) {
    AutoencoderConfig c;
    c.down_factor = j.value("down_factor", c.down_factor);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.base_width = j.value("base_width", c.base_width);
    c.init_seed = j.value("init_seed", c.init_seed);
    return c;
}

Autoencoder::Autoencoder(AutoencoderConfig cfg) : cfg_(std::move(cfg)) {
    int stages = 0;
    for (int f = cfg_.down_factor; f > 1; f /= 2) {
        if (f % 2 != 0) throw std::invalid_argument("Autoencoder: down_factor must be a power of 2");
        ++stages;
    }
    if (stages < 1) throw std::invalid_argument("Autoencoder: down_factor must be >= 2");

    Rng rng(cfg_.init_seed);
    const int w = cfg_.base_width;
    int ch = 3;
    for (int s = 0; s < stages; ++s) {
        const int out = w << std::min(s, 2);
        enc_down_.emplace_back(pm_, "enc.down" + std::to_string(s), ch, out, 3, 2, 1, rng);
        if (s + 1 < stages)
            enc_refine_.emplace_back(pm_, "enc.refine" + std::to_string(s), out, out, 3, 1, 1,
                                     rng);
        ch = out;
    }
    enc_mid_a_ = nn::Conv2d(pm_, "enc.mid_a", ch, ch, 3, 1, 1, rng);
    enc_mid_b_ = nn::Conv2d(pm_, "enc.mid_b", ch, ch, 3, 1, 1, rng);
    enc_out_ = nn::Conv2d(pm_, "enc.out", ch, 2 * cfg_.latent_channels, 1, 1, 0, rng);
    // Start the posterior near-deterministic: bias the logvar channels low so
    // early training is not swamped by sampling noise.
    for (int c = cfg_.latent_channels; c < 2 * cfg_.latent_channels; ++c)
        enc_out_.b->value[c] = -6.0;

    dec_in_ = nn::Conv2d(pm_, "dec.in", cfg_.latent_channels, ch, 1, 1, 0, rng);
    dec_mid_a_ = nn::Conv2d(pm_, "dec.mid_a", ch, ch, 3, 1, 1, rng);
    dec_mid_b_ = nn::Conv2d(pm_, "dec.mid_b", ch, ch, 3, 1, 1, rng);
    for (int s = stages - 1; s >= 0; --s) {
        const int out = s == 0 ? w : (w << std::min(s - 1, 2));
        dec_up_.emplace_back(pm_, "dec.up" + std::to_string(s), ch, out, 3, 1, 1, rng);
        // Refinement conv per intermediate resolution; the full-resolution
        // stage stays single-conv to bound the cost.
        if (s > 0)
            dec_refine_.emplace_back(pm_, "dec.refine" + std::to_string(s), out, out, 3, 1, 1,
                                     rng);
        ch = out;
    }
    dec_out_ = nn::Conv2d(pm_, "dec.out", ch, 3, 3, 1, 1, rng);
}

ag::Var Autoencoder::encode_graph(const ag::Var& x, ag::Var* logvar_out) const {
    using namespace ag;
    Var h = x;
    size_t refine = 0;
    for (size_t i = 0; i < enc_down_.size(); ++i) {
        h = silu(enc_down_[i](h));
        if (i + 1 < enc_down_.size() && refine < enc_refine_.size())
            h = silu(enc_refine_[refine++](h));
    }
    h = add(h, enc_mid_b_(silu(enc_mid_a_(h))));
    Var both = enc_out_(h);
    Var mu = slice_channels(both, 0, cfg_.latent_channels);
    if (logvar_out) *logvar_out = slice_channels(both, cfg_.latent_channels, 2 * cfg_.latent_channels);
    return mu;
}

ag::Var Autoencoder::decode_graph(const ag::Var& z) const {
    using namespace ag;
    Var h = silu(dec_in_(z));
    h = add(h, dec_mid_b_(silu(dec_mid_a_(h))));
    size_t refine = 0;
    for (size_t i = 0; i < dec_up_.size(); ++i) {
        h = bilinear_upsample(h, h->value.dim(2) * 2, h->value.dim(3) * 2);
        h = silu(dec_up_[i](h));
        if (i + 1 < dec_up_.size() && refine < dec_refine_.size())
            h = silu(dec_refine_[refine++](h));
    }
    return dec_out_(h);
}

Tensor Autoencoder::encode(const Image& img) const {
    if (!trained_) throw NotReadyError("autoencoder has not been trained");
    Tensor chw = image_to_chw(img);
    const auto& s = chw.shape();
    ag::Var x = ag::constant(chw.reshaped({1, s[0], s[1], s[2]}));
    Tensor mu = encode_graph(x)->value;
    const auto& ms = mu.shape();
    return mu.reshaped({ms[1], ms[2], ms[3]});
}

Image Autoencoder::decode(const Tensor& latent) const {
    if (!trained_) throw NotReadyError("autoencoder has not been trained");
    if (latent.rank() != 3) throw std::invalid_argument("decode: expects [c,h,w] latent");
    const auto& s = latent.shape();
    ag::Var z = ag::constant(latent.reshaped({1, s[0], s[1], s[2]}));
    Tensor out = decode_graph(z)->value;
    const auto& os = out.shape();
    Image img = chw_to_image(out.reshaped({os[1], os[2], os[3]}));
    clamp01(img);
    return img;
}

void Autoencoder::save(const std::string& path, long step, const std::string& rng_state) const {
    json cfg = cfg_.to_json();
    cfg["trained"] = trained_;
    save_checkpoint(path, "vae", cfg, step, rng_state, pm_);
}

Autoencoder Autoencoder::load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "vae") throw std::runtime_error("not an autoencoder checkpoint: " + path);
    Autoencoder ae(AutoencoderConfig::from_json(ckpt.config));
    apply_checkpoint(ckpt, ae.pm_);
    ae.trained_ = ckpt.config.value("trained", false);
    return ae;
}

// ---------------------------------------------------------------------------
// UNetDenoiser

json DenoiserConfig::to_json() const {
    return json{{"latent_channels", latent_channels}, {"base_width", base_width},
                {"temb_dim", temb_dim},               {"init_seed", init_seed},
                {"schedule_T", schedule_T},           {"beta_start", beta_start},
                {"beta_end", beta_end}};
}

DenoiserConfig DenoiserConfig::from_json(const json& j) {
    DenoiserConfig c;
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.base_width = j.value("base_width", c.base_width);
    c.temb_dim = j.value("temb_dim", c.temb_dim);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.schedule_T = j.value("schedule_T", c.schedule_T);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    return c;
}

UNetDenoiser::ResBlock UNetDenoiser::make_res(const std::string& name, int in_ch, int out_ch,
                                              Rng& rng) {
    ResBlock rb;
    rb.gn1 = nn::GroupNorm(pm_, name + ".gn1", in_ch, std::min(8, in_ch));
    rb.conv1 = nn::Conv2d(pm_, name + ".conv1", in_ch, out_ch, 3, 1, 1, rng);
    rb.temb = nn::Linear(pm_, name + ".temb", cfg_.temb_dim, out_ch, rng);
    rb.gn2 = nn::GroupNorm(pm_, name + ".gn2", out_ch, std::min(8, out_ch));
    rb.conv2 = nn::Conv2d(pm_, name + ".conv2", out_ch, out_ch, 3, 1, 1, rng);
    if (in_ch != out_ch) {
        rb.skip = nn::Conv2d(pm_, name + ".skip", in_ch, out_ch, 1, 1, 0, rng);
        rb.has_skip = true;
    }
    return rb;
}

ag::Var UNetDenoiser::run_res(const ResBlock& rb, const ag::Var& x, const ag::Var& temb) const {
    using namespace ag;
    Var h = rb.conv1(silu(rb.gn1(x)));
    h = add_rowbias_nchw(h, rb.temb(temb));
    h = rb.conv2(silu(rb.gn2(h)));
    return add(rb.has_skip ? rb.skip(x) : x, h);
}

UNetDenoiser::UNetDenoiser(DenoiserConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.temb_dim % 2 != 0) throw std::invalid_argument("UNetDenoiser: temb_dim must be even");
    Rng rng(cfg_.init_seed);
    const int w = cfg_.base_width;
    temb1_ = nn::Linear(pm_, "temb1", cfg_.temb_dim, cfg_.temb_dim, rng);
    temb2_ = nn::Linear(pm_, "temb2", cfg_.temb_dim, cfg_.temb_dim, rng);
    null_token_ = pm_.add("null_token", rng.normal_tensor({cfg_.temb_dim}, 0.02), false);
    stem_ = nn::Conv2d(pm_, "stem", cfg_.latent_channels, w, 3, 1, 1, rng);
    res_down_ = make_res("res_down", w, w, rng);
    down_ = nn::Conv2d(pm_, "down", w, 2 * w, 3, 2, 1, rng);
    res_mid_ = make_res("res_mid", 2 * w, 2 * w, rng);
    up_ = nn::Conv2d(pm_, "up", 2 * w, w, 3, 1, 1, rng);
    res_up_ = make_res("res_up", 2 * w, w, rng);
    out_gn_ = nn::GroupNorm(pm_, "out_gn", w, std::min(8, w));
    out_ = nn::Conv2d(pm_, "out", w, cfg_.latent_channels, 3, 1, 1, rng, /*zero_init=*/true);
}

ag::Var UNetDenoiser::time_embedding(const std::vector<int>& ts) const {
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
    Var emb = temb2_(silu(temb1_(constant(std::move(sinus)))));
    // Fold the learned null prompt token into the embedding.
    Var tok = reshape(add_bias_nchw(reshape(emb, {N, E, 1, 1}), null_token_), {N, E});
    return tok;
}

ag::Var UNetDenoiser::predict_graph(const ag::Var& z, const std::vector<int>& ts) const {
    using namespace ag;
    if (z->value.rank() != 4 || z->value.dim(0) != static_cast<int>(ts.size()))
        throw std::invalid_argument("predict_graph: batch/timestep mismatch");
    Var temb = time_embedding(ts);
    Var x0 = stem_(z);
    Var d1 = run_res(res_down_, x0, temb);
    Var m = run_res(res_mid_, down_(d1), temb);
    Var u = up_(bilinear_upsample(m, d1->value.dim(2), d1->value.dim(3)));
    Var r = run_res(res_up_, concat_channels(u, d1), temb);
    return out_(silu(out_gn_(r)));
}

Tensor UNetDenoiser::predict(const Tensor& z_t, int t) const {
    if (z_t.rank() != 3) throw std::invalid_argument("predict: expects [c,h,w] latent");
    const auto& s = z_t.shape();
    ag::Var z = ag::constant(z_t.reshaped({1, s[0], s[1], s[2]}));
    Tensor out = predict_graph(z, {t})->value;
    return out.reshaped({s[0], s[1], s[2]});
}

DenoiseFn UNetDenoiser::as_fn() const {
    return [this](const Tensor& z, int t) { return predict(z, t); };
}

void UNetDenoiser::save(const std::string& path, long step, const std::string& rng_state) const {
    json cfg = cfg_.to_json();
    cfg["trained"] = trained_;
    save_checkpoint(path, "diffusion", cfg, step, rng_state, pm_);
}

UNetDenoiser UNetDenoiser::load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "diffusion") throw std::runtime_error("not a diffusion checkpoint: " + path);
    UNetDenoiser unet(DenoiserConfig::from_json(ckpt.config));
    apply_checkpoint(ckpt, unet.pm_);
    unet.trained_ = ckpt.config.value("trained", false);
    return unet;
}

// ---------------------------------------------------------------------------
// training

namespace {

void write_curve_csv(const std::string& path, const TrainCurve& curve) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write metrics log: " + path);
    f << "step,loss\n";
    char buf[64];
    for (const auto& [step, loss] : curve.points) {
        std::snprintf(buf, sizeof(buf), "%ld,%.6f\n", step, loss);
        f << buf;
    }
}

}  // namespace

TrainCurve train_autoencoder(Autoencoder& ae, const std::vector<Image>& images,
                             const TrainAeConfig& cfg, const std::string& ckpt_path,
                             const std::string& log_path) {
    if (images.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");
    Rng rng(cfg.seed);
    const int n = static_cast<int>(images.size());
    std::vector<Tensor> chw;
    chw.reserve(images.size());
    for (const auto& img : images) chw.push_back(image_to_chw(img));
    const int C = chw[0].dim(0), H = chw[0].dim(1), W = chw[0].dim(2);

    nn::AdamW opt(ae.params(), cfg.lr);
    TrainCurve curve;
    double running = 0.0;
    int running_n = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        Tensor batch({cfg.batch, C, H, W});
        for (int k = 0; k < cfg.batch; ++k) {
            const Tensor& src = chw[static_cast<size_t>(rng.uniform_int(0, n - 1))];
            std::copy(src.data(), src.data() + src.size(),
                      batch.data() + static_cast<std::int64_t>(k) * src.size());
        }
        using namespace ag;
        Var x = constant(std::move(batch));
        Var logvar;
        Var mu = ae.encode_graph(x, &logvar);
        Tensor noise = rng.normal_tensor(mu->value.shape());
        Var z = add(mu, mul(exp_(scale(logvar, 0.5)), constant(std::move(noise))));
        Var recon = ae.decode_graph(z);
        Var rec_loss = l1_loss(recon, x);
        // KL(q || N(0,I)) per element.
        Var kl = scale(mean_all(sub(add_scalar(exp_(logvar), -1.0),
                                    sub(logvar, mul(mu, mu)))),
                       0.5);
        Var loss = add(rec_loss, scale(kl, cfg.kl_weight));

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
    ae.mark_trained();
    if (!ckpt_path.empty()) ae.save(ckpt_path, cfg.steps, rng.state());
    write_curve_csv(log_path, curve);
    return curve;
}

TrainCurve train_denoiser(UNetDenoiser& unet, const Autoencoder& ae,
                          const std::vector<Image>& images, const NoiseSchedule& schedule,
                          const TrainDiffusionConfig& cfg, const std::string& ckpt_path,
                          const std::string& log_path) {
    if (images.empty()) throw std::invalid_argument("train_denoiser: empty dataset");
    if (!ae.trained()) throw NotReadyError("train_denoiser: autoencoder is not trained");
    Rng rng(cfg.seed);

    std::vector<Tensor> latents;
    latents.reserve(images.size());
    for (const auto& img : images) latents.push_back(ae.encode(img));
    const int n = static_cast<int>(latents.size());
    const int C = latents[0].dim(0), H = latents[0].dim(1), W = latents[0].dim(2);

    nn::AdamW opt(unet.params(), cfg.lr);
    TrainCurve curve;
    double running = 0.0;
    int running_n = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        Tensor z_t({cfg.batch, C, H, W});
        Tensor eps({cfg.batch, C, H, W});
        std::vector<int> ts(static_cast<size_t>(cfg.batch));
        for (int k = 0; k < cfg.batch; ++k) {
            const Tensor& z0 = latents[static_cast<size_t>(rng.uniform_int(0, n - 1))];
            const int t = sample_timestep(rng, schedule.T);
            ts[static_cast<size_t>(k)] = t;
            const double a = std::sqrt(schedule.alpha_bar_at(t));
            const double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
            for (std::int64_t i = 0; i < z0.size(); ++i) {
                const double e = rng.normal();
                eps[static_cast<std::int64_t>(k) * z0.size() + i] = e;
                z_t[static_cast<std::int64_t>(k) * z0.size() + i] = a * z0[i] + b * e;
            }
        }
        using namespace ag;
        Var pred = unet.predict_graph(constant(std::move(z_t)), ts);
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
    unet.mark_trained();
    unet.set_schedule_info(schedule.T, schedule.beta[0], schedule.beta.back());
    if (!ckpt_path.empty()) unet.save(ckpt_path, cfg.steps, rng.state());
    write_curve_csv(log_path, curve);
    return curve;
}

Tensor unconditional_sample(const UNetDenoiser& unet, const NoiseSchedule& schedule,
                            const std::vector<int>& latent_shape, Rng& rng) {
    Tensor z = rng.normal_tensor(latent_shape);
    for (int t = schedule.T; t >= 1; --t) {
        Tensor noise;
        if (t > 1) noise = rng.normal_tensor(latent_shape);
        const Tensor eps = unet.predict(z, t);
        z = p_sample_step(z, t, eps, schedule, t > 1 ? &noise : nullptr);
    }
    return z;
}

}  // namespace focalforge
