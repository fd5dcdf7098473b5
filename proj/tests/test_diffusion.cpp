#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "focalforge/diffusion.hpp"
#include "focalforge/synthdata.hpp"

using namespace focalforge;

TEST_CASE("schedule endpoints, recursion, and monotonicity") {
    const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    CHECK(s.alpha_bar_at(1) == s.alpha_at(1));
    CHECK(s.alpha_at(1) == 1.0 - 1e-4);
    double prev = 1.0;
    for (int t = 1; t <= s.T; ++t) {
        CHECK(s.alpha_bar_at(t) < prev);
        CHECK(s.alpha_bar_at(t) == (t == 1 ? s.alpha_at(1) : s.alpha_bar_at(t - 1) * s.alpha_at(t)));
        CHECK(s.beta_at(t) > 0.0);
        CHECK(s.beta_at(t) < 1.0);
        prev = s.alpha_bar_at(t);
    }
    CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 0.03, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("T=1000 linear schedule final alpha_bar matches the direct product") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    // Independent route: reverse-order long-double product.
    long double prod = 1.0L;
    for (int t = 1000; t >= 1; --t) {
        const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
        prod *= (1.0L - beta);
    }
    const double direct = static_cast<double>(prod);
    CHECK(std::abs(s.alpha_bar_at(1000) - direct) / direct < 0.05);
    CHECK(s.alpha_bar_at(1000) == doctest::Approx(4.0e-5).epsilon(0.05));
}

TEST_CASE("sigma modes") {
    const NoiseSchedule sb = make_schedule(20, 1e-3, 0.05, SigmaMode::kBeta);
    const NoiseSchedule sp = make_schedule(20, 1e-3, 0.05, SigmaMode::kPosterior);
    for (int t = 1; t <= 20; ++t) {
        CHECK(sb.sigma_at(t) == doctest::Approx(std::sqrt(sb.beta_at(t))).epsilon(1e-12));
        const double prev_bar = t == 1 ? 1.0 : sp.alpha_bar_at(t - 1);
        const double expected =
            std::sqrt(sp.beta_at(t) * (1.0 - prev_bar) / (1.0 - sp.alpha_bar_at(t)));
        CHECK(sp.sigma_at(t) == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(sp.sigma_at(1) == 0.0);  // alpha_bar_0 = 1
}

TEST_CASE("q_sample limits") {
    Rng rng(81);
    const Tensor z = rng.normal_tensor({2, 3, 3});
    const Tensor zero_eps({2, 3, 3});

    // Hypothetical alpha_bar = 1 entry leaves z unchanged.
    NoiseSchedule unit;
    unit.T = 1;
    unit.beta = {0.1};
    unit.alpha = {0.9};
    unit.alpha_bar = {1.0};
    unit.sigma = {0.0};
    const Tensor same = q_sample(z, 1, rng.normal_tensor({2, 3, 3}), unit);
    for (std::int64_t i = 0; i < z.size(); ++i) CHECK(same[i] == z[i]);

    const NoiseSchedule s = make_schedule(30, 1e-3, 0.05);
    const Tensor scaled = q_sample(z, 17, zero_eps, s);
    const double a = std::sqrt(s.alpha_bar_at(17));
    for (std::int64_t i = 0; i < z.size(); ++i)
        CHECK(scaled[i] == doctest::Approx(a * z[i]).epsilon(1e-15));

    CHECK_THROWS_AS(q_sample(z, 0, zero_eps, s), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(z, 31, zero_eps, s), std::invalid_argument);
}

TEST_CASE("q_sample Monte-Carlo marginals at t = T") {
    Rng rng(82);
    const NoiseSchedule s = make_schedule(100, 1e-3, 0.05);
    const int dim = 8, draws = 10000;
    Tensor z({dim});
    for (int i = 0; i < dim; ++i) z[i] = 0.3 * (i - 3.5);

    std::vector<double> mean(dim, 0.0), m2(dim, 0.0);
    for (int k = 0; k < draws; ++k) {
        const Tensor eps = rng.normal_tensor({dim});
        const Tensor zt = q_sample(z, s.T, eps, s);
        for (int i = 0; i < dim; ++i) {
            const double d = zt[i];
            mean[static_cast<size_t>(i)] += d;
            m2[static_cast<size_t>(i)] += d * d;
        }
    }
    const double a = std::sqrt(s.alpha_bar_at(s.T));
    const double var_expected = 1.0 - s.alpha_bar_at(s.T);
    for (int i = 0; i < dim; ++i) {
        const double m = mean[static_cast<size_t>(i)] / draws;
        const double v = m2[static_cast<size_t>(i)] / draws - m * m;
        const double se_mean = std::sqrt(var_expected / draws);
        const double se_var = var_expected * std::sqrt(2.0 / (draws - 1));
        CHECK(std::abs(m - a * z[i]) < 3 * se_mean);
        CHECK(std::abs(v - var_expected) < 3 * se_var);
    }
}

TEST_CASE("ldm_loss against stub denoisers") {
    Rng rng(83);
    const NoiseSchedule s = make_schedule(50, 1e-3, 0.05);
    const Tensor z = rng.normal_tensor({4, 4});

    // A perfect predictor recovers the exact noise argument.
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor eps = rng.normal_tensor({4, 4});
        const int t = sample_timestep(rng, s.T);
        const double a = std::sqrt(s.alpha_bar_at(t));
        const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
        DenoiseFn oracle = [&](const Tensor& zt, int tt) {
            Tensor out(zt.shape());
            const double aa = std::sqrt(s.alpha_bar_at(tt));
            const double bb = std::sqrt(1.0 - s.alpha_bar_at(tt));
            for (std::int64_t i = 0; i < zt.size(); ++i) out[i] = (zt[i] - aa * z[i]) / bb;
            return out;
        };
        (void)a;
        (void)b;
        CHECK(ldm_loss(oracle, z, t, eps, s) < 1e-20);
    }

    // Zero predictor: expected per-element loss is E[eps^2] = 1.
    DenoiseFn zero = [](const Tensor& zt, int) { return Tensor(zt.shape()); };
    const int draws = 2000, dim = 16;
    double acc = 0;
    for (int k = 0; k < draws; ++k) {
        const Tensor eps = rng.normal_tensor({dim});
        acc += ldm_loss(zero, rng.normal_tensor({dim}), sample_timestep(rng, s.T), eps, s);
    }
    const double mean = acc / draws;
    const double se = std::sqrt(2.0 / (static_cast<double>(draws) * dim));
    CHECK(std::abs(mean - 1.0) < 3 * se);

    // Nonnegative for an arbitrary predictor.
    DenoiseFn noisy = [&](const Tensor& zt, int) {
        Tensor out(zt.shape());
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 0.3;
        return out;
    };
    CHECK(ldm_loss(noisy, z, 10, rng.normal_tensor({4, 4}), s) >= 0.0);
}

TEST_CASE("p_sample_step inverts q_sample at t=1 and rescales trivially") {
    Rng rng(84);
    const NoiseSchedule s = make_schedule(40, 1e-3, 0.04);
    const Tensor z0 = rng.normal_tensor({3, 5});
    const Tensor eps = rng.normal_tensor({3, 5});
    const Tensor z1 = q_sample(z0, 1, eps, s);
    const Tensor back = p_sample_step(z1, 1, eps, s);
    for (std::int64_t i = 0; i < z0.size(); ++i) CHECK(std::abs(back[i] - z0[i]) < 1e-10);

    const Tensor zero_pred({3, 5});
    const Tensor rescaled = p_sample_step(z1, 5, zero_pred, s);
    for (std::int64_t i = 0; i < z1.size(); ++i)
        CHECK(rescaled[i] == doctest::Approx(z1[i] / std::sqrt(s.alpha_at(5))).epsilon(1e-15));

    CHECK_THROWS_AS(p_sample_step(z1, 0, eps, s), std::invalid_argument);
    CHECK_THROWS_AS(p_sample_step(z1, 41, eps, s), std::invalid_argument);
}

TEST_CASE("noise-free closed loop with an oracle predictor reproduces z0") {
    Rng rng(85);
    const NoiseSchedule s = make_schedule(60, 1e-3, 0.05);
    Tensor z0({1});
    z0[0] = 0.7321;
    const Tensor eps0 = rng.normal_tensor({1});
    Tensor z = q_sample(z0, s.T, eps0, s);
    for (int t = s.T; t >= 1; --t) {
        Tensor pred({1});
        const double a = std::sqrt(s.alpha_bar_at(t));
        const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
        pred[0] = (z[0] - a * z0[0]) / b;
        z = p_sample_step(z, t, pred, s);
    }
    CHECK(std::abs(z[0] - z0[0]) < 1e-8);
}

TEST_CASE("noisy closed loop stays within accumulated sampler variance") {
    Rng rng(86);
    const NoiseSchedule s = make_schedule(60, 1e-3, 0.05, SigmaMode::kPosterior);
    Tensor z0({1});
    z0[0] = -0.4;
    Tensor z = q_sample(z0, s.T, rng.normal_tensor({1}), s);
    double var = 0.0;
    for (int t = s.T; t >= 1; --t) {
        Tensor pred({1});
        const double a = std::sqrt(s.alpha_bar_at(t));
        const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
        pred[0] = (z[0] - a * z0[0]) / b;
        Tensor noise = rng.normal_tensor({1});
        z = p_sample_step(z, t, pred, s, t > 1 ? &noise : nullptr);
        // Affine contraction of the deviation plus fresh sigma_t noise.
        const double contraction =
            std::sqrt(s.alpha_at(t)) * (1.0 - (t == 1 ? 1.0 : s.alpha_bar_at(t - 1))) /
            (1.0 - s.alpha_bar_at(t));
        var = var * contraction * contraction + (t > 1 ? s.sigma_at(t) * s.sigma_at(t) : 0.0);
    }
    CHECK(std::abs(z[0] - z0[0]) <= 5.0 * std::sqrt(var) + 1e-9);
}

TEST_CASE("autoencoder shape contract and readiness gate") {
    AutoencoderConfig cfg;
    cfg.base_width = 8;
    Autoencoder ae(cfg);
    Rng rng(87);
    auto [img, depth] = make_scene(rng, {32, 32});

    CHECK_THROWS_AS(ae.encode(img), NotReadyError);
    CHECK_THROWS_AS(ae.decode(Tensor({4, 8, 8})), NotReadyError);

    // Graph path: 32x32x3 -> 8x8x4 -> 32x32x3 with f = 4.
    ag::Var x = ag::constant(image_to_chw(img).reshaped({1, 3, 32, 32}));
    ag::Var mu = ae.encode_graph(x);
    CHECK(mu->value.shape() == std::vector<int>{1, 4, 8, 8});
    ag::Var rec = ae.decode_graph(mu);
    CHECK(rec->value.shape() == std::vector<int>{1, 3, 32, 32});
}

TEST_CASE("autoencoder training smoke: checkpoint round trip and clamped decode") {
    Rng rng(88);
    std::vector<Image> images;
    for (int i = 0; i < 8; ++i) images.push_back(make_scene(rng, {32, 32}).first);
    AutoencoderConfig cfg;
    cfg.base_width = 8;
    Autoencoder ae(cfg);
    TrainAeConfig tcfg;
    tcfg.steps = 30;
    tcfg.batch = 4;
    tcfg.log_every = 10;
    const TrainCurve curve = train_autoencoder(ae, images, tcfg, "ae_smoke.ffck");
    CHECK(ae.trained());
    CHECK(curve.points.size() == 3);

    const Autoencoder loaded = Autoencoder::load("ae_smoke.ffck");
    CHECK(loaded.trained());
    const Tensor z1 = ae.encode(images[0]);
    const Tensor z2 = loaded.encode(images[0]);
    for (std::int64_t i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);

    const Image dec = ae.decode(z1);
    for (double v : dec.px) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("denoiser training smoke and timestep uniformity") {
    Rng rng(89);
    std::vector<Image> images;
    for (int i = 0; i < 8; ++i) images.push_back(make_scene(rng, {32, 32}).first);
    AutoencoderConfig acfg;
    acfg.base_width = 8;
    Autoencoder ae(acfg);
    TrainAeConfig tcfg;
    tcfg.steps = 20;
    tcfg.batch = 4;
    train_autoencoder(ae, images, tcfg);

    const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    DenoiserConfig dcfg;
    dcfg.base_width = 8;
    UNetDenoiser unet(dcfg);
    CHECK_FALSE(unet.trained());
    TrainDiffusionConfig dtc;
    dtc.steps = 25;
    dtc.batch = 4;
    dtc.log_every = 5;
    const TrainCurve curve = train_denoiser(unet, ae, images, s, dtc, "dn_smoke.ffck");
    CHECK(unet.trained());
    CHECK(curve.points.size() == 5);

    const UNetDenoiser loaded = UNetDenoiser::load("dn_smoke.ffck");
    CHECK(loaded.trained());
    CHECK(loaded.config().schedule_T == 50);
    const Tensor z = Rng(1).normal_tensor({4, 8, 8});
    const Tensor p1 = unet.predict(z, 7);
    const Tensor p2 = loaded.predict(z, 7);
    for (std::int64_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);

    // Chi-square uniformity of the timestep sampler over [1, T].
    Rng tr(90);
    const int T = 50, draws = 10000;
    std::vector<int> counts(static_cast<size_t>(T), 0);
    for (int i = 0; i < draws; ++i) ++counts[static_cast<size_t>(sample_timestep(tr, T) - 1)];
    const double expect = static_cast<double>(draws) / T;
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // df = 49: mean 49, sd sqrt(98); 3-sigma upper bound.
    CHECK(chi2 < 49 + 3 * std::sqrt(98.0));

    // An untrained autoencoder is rejected.
    Autoencoder fresh(acfg);
    CHECK_THROWS_AS(train_denoiser(unet, fresh, images, s, dtc), NotReadyError);
}
