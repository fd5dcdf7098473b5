#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "focalforge/controlnet.hpp"
#include "focalforge/fusion_net.hpp"
#include "focalforge/pipelines.hpp"
#include "focalforge/synthdata.hpp"

using namespace focalforge;

namespace {

ControlConfig small_control() {
    ControlConfig cfg;
    cfg.base_width = 8;
    return cfg;
}

DenoiserConfig small_denoiser() {
    DenoiserConfig cfg;
    cfg.base_width = 8;
    cfg.schedule_T = 20;
    return cfg;
}

}  // namespace

TEST_CASE("freshly initialized branch emits exactly zero") {
    ControlBranch branch(small_control());
    Rng rng(91);
    for (int trial = 0; trial < 3; ++trial) {
        const Tensor z = rng.normal_tensor({4, 8, 8}, 2.0);
        const Tensor c = rng.normal_tensor({4, 8, 8}, 2.0);
        const Tensor d = branch.residual(z, c, 1 + trial * 5);
        CHECK(d.shape() == z.shape());
        for (std::int64_t i = 0; i < d.size(); ++i) CHECK(d[i] == 0.0);
    }
    const Tensor bad = rng.normal_tensor({4, 4, 4});
    CHECK_THROWS_AS(branch.residual(rng.normal_tensor({4, 8, 8}), bad, 1), std::invalid_argument);
}

TEST_CASE("zero-init branch makes the conditioned step identical to the plain step") {
    ControlBranch branch(small_control());
    UNetDenoiser unet(small_denoiser());
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);
    Rng rng(92);
    const Tensor z_t = rng.normal_tensor({4, 8, 8});
    const Tensor c_if = rng.normal_tensor({4, 8, 8});
    const Tensor noise = rng.normal_tensor({4, 8, 8});

    const Tensor cond = conditioned_denoise_step(z_t, 9, branch, unet, c_if, s, &noise);
    const Tensor plain = p_sample_step(z_t, 9, unet.predict(z_t, 9), s, &noise);
    REQUIRE(cond.size() == plain.size());
    for (std::int64_t i = 0; i < cond.size(); ++i) CHECK(cond[i] == plain[i]);

    // Residual locality: with delta = 0 the step ignores c_IF entirely.
    const Tensor other_c = rng.normal_tensor({4, 8, 8});
    const Tensor cond2 = conditioned_denoise_step(z_t, 9, branch, unet, other_c, s, &noise);
    for (std::int64_t i = 0; i < cond.size(); ++i) CHECK(cond2[i] == cond[i]);
}

TEST_CASE("constant residual shifts the denoiser input additively") {
    ControlBranch branch(small_control());
    // Zero weights + constant bias on the final projection give delta == c.
    const double c = 0.37;
    branch.params().find("proj.b")->value.fill(c);

    UNetDenoiser unet(small_denoiser());
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);
    Rng rng(93);
    const Tensor z_t = rng.normal_tensor({4, 8, 8});
    const Tensor c_if = rng.normal_tensor({4, 8, 8});

    const Tensor delta = branch.residual(z_t, c_if, 4);
    for (std::int64_t i = 0; i < delta.size(); ++i) CHECK(delta[i] == c);

    Tensor shifted(z_t.shape());
    for (std::int64_t i = 0; i < z_t.size(); ++i) shifted[i] = z_t[i] + c;
    const Tensor cond = conditioned_denoise_step(z_t, 4, branch, unet, c_if, s);
    const Tensor manual = p_sample_step(shifted, 4, unet.predict(shifted, 4), s);
    for (std::int64_t i = 0; i < cond.size(); ++i) CHECK(cond[i] == manual[i]);
}

TEST_CASE("encode_condition is the backbone encoder") {
    Rng rng(94);
    std::vector<Image> images;
    for (int i = 0; i < 6; ++i) images.push_back(make_scene(rng, {32, 32}).first);
    AutoencoderConfig acfg;
    acfg.base_width = 8;
    Autoencoder ae(acfg);
    TrainAeConfig tcfg;
    tcfg.steps = 15;
    tcfg.batch = 3;
    train_autoencoder(ae, images, tcfg);

    const Tensor a = encode_condition(images[0], ae);
    const Tensor b = ae.encode(images[0]);
    REQUIRE(a.size() == b.size());
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(a.shape() == std::vector<int>{4, 8, 8});

    const Tensor again = encode_condition(images[0], ae);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(again[i] == a[i]);
}

TEST_CASE("restore with a zero-init branch equals unconditional sampling, bit-exact") {
    Rng rng(95);
    std::vector<Image> images;
    for (int i = 0; i < 6; ++i) images.push_back(make_scene(rng, {32, 32}).first);
    AutoencoderConfig acfg;
    acfg.base_width = 8;
    Autoencoder ae(acfg);
    TrainAeConfig tcfg;
    tcfg.steps = 15;
    tcfg.batch = 3;
    train_autoencoder(ae, images, tcfg);

    UNetDenoiser unet(small_denoiser());
    unet.mark_trained();  // plumbing test: weights are irrelevant to the identity
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);
    ControlBranch branch(small_control());

    RestorationModels models{&ae, &unet, &branch};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RestorationConfig rc;
        rc.seed = seed;
        const Image restored = restore(images[0], models, s, rc);

        Rng sampler(seed);
        const Tensor z0 = unconditional_sample(unet, s, {4, 8, 8}, sampler);
        const Image plain = ae.decode(z0);
        CHECK(restored.px == plain.px);
    }

    // Same seed twice: identical output.
    RestorationConfig rc;
    rc.seed = 41;
    const Image r1 = restore(images[0], models, s, rc);
    const Image r2 = restore(images[0], models, s, rc);
    CHECK(r1.px == r2.px);

    // Readiness gate.
    Autoencoder fresh(acfg);
    RestorationModels bad{&fresh, &unet, &branch};
    CHECK_THROWS_AS(restore(images[0], bad, s, rc), NotReadyError);
}

TEST_CASE("train_control freezes the backbone and starts at the unconditional loss") {
    Rng rng(96);
    std::vector<Image> images;
    for (int i = 0; i < 8; ++i) images.push_back(make_scene(rng, {32, 32}).first);
    AutoencoderConfig acfg;
    acfg.base_width = 8;
    Autoencoder ae(acfg);
    TrainAeConfig tcfg;
    tcfg.steps = 15;
    tcfg.batch = 4;
    train_autoencoder(ae, images, tcfg);

    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);
    DenoiserConfig dcfg = small_denoiser();
    UNetDenoiser unet(dcfg);
    TrainDiffusionConfig dtc;
    dtc.steps = 15;
    dtc.batch = 4;
    train_denoiser(unet, ae, images, s, dtc);

    std::vector<std::pair<Image, Image>> pairs;
    for (int i = 0; i < 4; ++i) pairs.emplace_back(gaussian_blur(images[static_cast<size_t>(i)], 1.5),
                                                   images[static_cast<size_t>(i)]);

    const std::uint64_t ae_hash = nn::param_hash(ae.params());
    const std::uint64_t dn_hash = nn::param_hash(unet.params());

    ControlBranch branch(small_control());
    TrainControlConfig ccfg;
    ccfg.steps = 10;
    ccfg.phase1_steps = 5;
    ccfg.batch = 4;
    ccfg.log_every = 1;
    const TrainCurve curve = train_control(branch, pairs, ae, unet, s, ccfg, "ctrl_smoke.ffck");

    CHECK(nn::param_hash(ae.params()) == ae_hash);
    CHECK(nn::param_hash(unet.params()) == dn_hash);
    CHECK(branch.trained());
    const ControlBranch loaded = ControlBranch::load("ctrl_smoke.ffck");
    CHECK(loaded.trained());

    // Step-0 equivalence: a zero-init branch leaves the objective unchanged.
    ControlBranch zero(small_control());
    Rng check(97);
    Tensor z_t({2, 4, 8, 8});
    Tensor eps({2, 4, 8, 8});
    Tensor c_if({2, 4, 8, 8});
    std::vector<int> ts{3, 11};
    for (std::int64_t i = 0; i < z_t.size(); ++i) {
        z_t[i] = check.normal();
        eps[i] = check.normal();
        c_if[i] = check.normal();
    }
    using namespace ag;
    Var zv = constant(z_t);
    Var cond_loss = mse_loss(
        unet.predict_graph(add(zv, zero.residual_graph(zv, constant(c_if), ts)), ts),
        constant(eps));
    Var plain_loss = mse_loss(unet.predict_graph(zv, ts), constant(eps));
    CHECK(scalar(cond_loss) == scalar(plain_loss));

    // Contract violations.
    TrainControlConfig unfreeze = ccfg;
    unfreeze.unfreeze_backbone = true;
    ControlBranch b2(small_control());
    CHECK_THROWS_AS(train_control(b2, pairs, ae, unet, s, unfreeze), std::logic_error);

    Autoencoder fresh(acfg);
    CHECK_THROWS_AS(train_control(b2, pairs, fresh, unet, s, ccfg), NotReadyError);
}
