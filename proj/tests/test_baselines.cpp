#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "focalforge/baselines.hpp"
#include "focalforge/synthdata.hpp"

using namespace focalforge;

namespace {

FocalStack noise_stack(Rng& rng, int layers, int h, int w) {
    FocalStack stack;
    for (int l = 0; l < layers; ++l) {
        Image img(h, w, 3);
        for (auto& v : img.px) v = rng.uniform();
        stack.layers.push_back(std::move(img));
        stack.layer_meta.push_back(l);
    }
    return stack;
}

}  // namespace

TEST_CASE("single-layer stack returns that layer") {
    Rng rng(41);
    FocalStack stack = noise_stack(rng, 1, 16, 16);
    const BaselineResult r = laplacian_argmax_fuse(stack);
    CHECK(r.fused.px == stack.layers[0].px);
    for (int i : r.decision.idx) CHECK(i == 0);
    CHECK(average_fuse(stack).px == stack.layers[0].px);
}

TEST_CASE("identical layers tie to index zero") {
    Rng rng(42);
    auto [img, depth] = make_scene(rng, {24, 24});
    FocalStack stack;
    for (int l = 0; l < 4; ++l) {
        stack.layers.push_back(img);
        stack.layer_meta.push_back(l);
    }
    const BaselineResult r = laplacian_argmax_fuse(stack);
    for (int i : r.decision.idx) CHECK(i == 0);
}

TEST_CASE("disjoint sharp halves recover the bin mask away from the seam") {
    Rng rng(43);
    auto [img, depth_unused] = make_scene(rng, {48, 48});
    // Left half at bin 0, right half at bin 1 of a 2-layer stack.
    DepthMap depth(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) depth.at(y, x) = x < img.w / 2 ? 0.0 : 0.9;
    const FocalStack stack = synthesize_stack(img, depth, 2, 2.0);
    const int window = 9, radius = window / 2;
    const BaselineResult r = laplacian_argmax_fuse(stack, window);

    int total = 0, good = 0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (std::abs(x - img.w / 2) <= radius) continue;  // seam margin
            ++total;
            const int expected = x < img.w / 2 ? 0 : 1;
            if (r.decision.at(y, x) == expected) ++good;
        }
    CHECK(static_cast<double>(good) / total >= 0.98);
}

TEST_CASE("layer permutation permutes decisions and preserves the fused image") {
    Rng rng(44);
    FocalStack stack = noise_stack(rng, 5, 20, 20);
    const BaselineResult base = laplacian_argmax_fuse(stack);

    const int perm[5] = {3, 0, 4, 2, 1};
    FocalStack permuted;
    for (int l = 0; l < 5; ++l) {
        permuted.layers.push_back(stack.layers[static_cast<size_t>(perm[l])]);
        permuted.layer_meta.push_back(perm[l]);
    }
    const BaselineResult shuffled = laplacian_argmax_fuse(permuted);
    CHECK(shuffled.fused.px == base.fused.px);
    for (size_t i = 0; i < base.decision.idx.size(); ++i)
        CHECK(perm[shuffled.decision.idx[i]] == base.decision.idx[i]);
}

TEST_CASE("average_fuse basics") {
    Rng rng(45);
    FocalStack stack = noise_stack(rng, 2, 12, 12);
    const Image avg = average_fuse(stack);
    for (size_t i = 0; i < avg.px.size(); ++i) {
        const double a = stack.layers[0].px[i];
        const double b = stack.layers[1].px[i];
        CHECK(avg.px[i] == doctest::Approx((a + b) / 2).epsilon(1e-12));
        CHECK(avg.px[i] >= std::min(a, b) - 1e-12);
        CHECK(avg.px[i] <= std::max(a, b) + 1e-12);
    }
    FocalStack empty;
    CHECK_THROWS_AS(average_fuse(empty), std::invalid_argument);
    CHECK_THROWS_AS(laplacian_argmax_fuse(empty), std::invalid_argument);
}
