#include "focalforge/fusion_net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "focalforge/checkpoint.hpp"

using nlohmann::json;

namespace focalforge {

FuseMode fuse_mode_from_string(const std::string& s) {
    if (s == "soft") return FuseMode::kSoft;
    if (s == "hard") return FuseMode::kHard;
    throw std::invalid_argument("unknown fuse mode: " + s);
}

std::string to_string(FuseMode m) { return m == FuseMode::kSoft ? "soft" : "hard"; }

json FusionConfig::to_json() const {
    json j;
    j["encoder_widths"] = encoder_widths;
    j["feature_dim"] = feature_dim;
    j["pool_ratio"] = pool_ratio;
    j["heads"] = heads;
    j["loops"] = loops;
    j["fuse_mode"] = to_string(fuse_mode);
    j["init_seed"] = init_seed;
    return j;
}

FusionConfig FusionConfig::from_json(const json& j) {
    FusionConfig c;
    c.encoder_widths = j.value("encoder_widths", c.encoder_widths);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.pool_ratio = j.value("pool_ratio", c.pool_ratio);
    c.heads = j.value("heads", c.heads);
    c.loops = j.value("loops", c.loops);
    c.fuse_mode = fuse_mode_from_string(j.value("fuse_mode", std::string("soft")));
    c.init_seed = j.value("init_seed", c.init_seed);
    return c;
}

int pooled_extent(int extent, double pool_ratio) {
    const int k = static_cast<int>(std::lround(1.0 / pool_ratio));
    return (extent + k - 1) / k;
}

Tensor stack_to_tensor(const FocalStack& stack) {
    const int L = stack.layer_count();
    if (L < 1) throw std::invalid_argument("stack_to_tensor: empty stack");
    Tensor t({L, stack.channels(), stack.h(), stack.w()});
    for (int l = 0; l < L; ++l) {
        const Image& img = stack.layers[static_cast<size_t>(l)];
        for (int c = 0; c < img.c; ++c)
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) t.at(l, c, y, x) = img.at(y, x, c);
    }
    return t;
}

Image fuse(const FocalStack& stack, const FocusMap& map, FuseMode mode) {
    const int L = stack.layer_count();
    if (L < 1) throw std::invalid_argument("fuse: empty stack");
    if (map.layers() != L || map.h() != stack.h() || map.w() != stack.w())
        throw std::invalid_argument("fuse: focus map and stack dimensions disagree");
    const int h = stack.h(), w = stack.w(), c = stack.channels();
    Image out(h, w, c);
    std::vector<double> buf(static_cast<size_t>(L));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mode == FuseMode::kHard) {
                int best = 0;
                double best_p = map.probs.at(0, y, x);
                for (int l = 1; l < L; ++l)
                    if (map.probs.at(l, y, x) > best_p) {
                        best_p = map.probs.at(l, y, x);
                        best = l;
                    }
                for (int ch = 0; ch < c; ++ch)
                    out.at(y, x, ch) = stack.layers[static_cast<size_t>(best)].at(y, x, ch);
            } else {
                for (int ch = 0; ch < c; ++ch) {
                    for (int l = 0; l < L; ++l)
                        buf[static_cast<size_t>(l)] =
                            map.probs.at(l, y, x) * stack.layers[static_cast<size_t>(l)].at(y, x, ch);
                    out.at(y, x, ch) = ag::sorted_sum(buf.data(), L);
                }
            }
        }
    clamp01(out);
    return out;
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kValidRatios[] = {1.0, 0.5, 0.25, 0.125, 0.0625};
}

FusionModel::FusionModel(FusionConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.encoder_widths.size() != 4)
        throw std::invalid_argument("FusionModel: expects 4 encoder widths");
    if (cfg_.loops < 0) throw std::invalid_argument("FusionModel: loop count must be >= 0");
    bool ratio_ok = false;
    for (double r : kValidRatios) ratio_ok = ratio_ok || std::abs(cfg_.pool_ratio - r) < 1e-12;
    if (!ratio_ok) throw std::invalid_argument("FusionModel: unsupported pool ratio");
    if (cfg_.feature_dim % cfg_.heads != 0)
        throw std::invalid_argument("FusionModel: feature_dim must divide by heads");

    Rng rng(cfg_.init_seed);
    const auto& w = cfg_.encoder_widths;
    const int D = cfg_.feature_dim;

    enc_[0] = nn::Conv2d(pm_, "enc0", 3, w[0], 3, 2, 1, rng);
    enc_[1] = nn::Conv2d(pm_, "enc1", w[0], w[1], 3, 2, 1, rng);
    enc_[2] = nn::Conv2d(pm_, "enc2", w[1], w[2], 3, 2, 1, rng);
    enc_[3] = nn::Conv2d(pm_, "enc3", w[2], w[3], 3, 2, 1, rng);
    lat_[0] = nn::Conv2d(pm_, "lat2", w[1], D, 1, 1, 0, rng);
    lat_[1] = nn::Conv2d(pm_, "lat3", w[2], D, 1, 1, 0, rng);
    lat_[2] = nn::Conv2d(pm_, "lat4", w[3], D, 1, 1, 0, rng);
    merge_[0] = nn::Conv2d(pm_, "merge3", D, D, 3, 1, 1, rng);
    merge_[1] = nn::Conv2d(pm_, "merge2", D, D, 3, 1, 1, rng);

    auto make_attn = [&](const std::string& base) {
        Attn a;
        a.ln1 = nn::LayerNorm(pm_, base + ".ln1", D);
        a.ln2 = nn::LayerNorm(pm_, base + ".ln2", D);
        a.q = nn::Linear(pm_, base + ".q", D, D, rng);
        a.k = nn::Linear(pm_, base + ".k", D, D, rng);
        a.v = nn::Linear(pm_, base + ".v", D, D, rng);
        a.o = nn::Linear(pm_, base + ".o", D, D, rng);
        a.ff1 = nn::Linear(pm_, base + ".ff1", D, 2 * D, rng);
        a.ff2 = nn::Linear(pm_, base + ".ff2", 2 * D, D, rng);
        return a;
    };
    attn_main_ = make_attn("saca");
    attn_loop_ = make_attn("loop.saca");
    refine1_ = nn::Conv2d(pm_, "loop.refine1", D, D, 3, 1, 1, rng);
    refine2_ = nn::Conv2d(pm_, "loop.refine2", D, D, 3, 1, 1, rng);
    proj_ = nn::Conv2d(pm_, "proj", D, 1, 1, 1, 0, rng);
}

ag::Var FusionModel::encode_layers(const ag::Var& x) const {
    using namespace ag;
    Var e1 = silu(enc_[0](x));
    Var e2 = silu(enc_[1](e1));
    Var e3 = silu(enc_[2](e2));
    Var e4 = silu(enc_[3](e3));

    Var p4 = lat_[2](e4);
    Var p3 = add(lat_[1](e3), bilinear_upsample(p4, e3->value.dim(2), e3->value.dim(3)));
    p3 = silu(merge_[0](p3));
    Var p2 = add(lat_[0](e2), bilinear_upsample(p3, e2->value.dim(2), e2->value.dim(3)));
    return merge_[1](p2);
}

ag::Var FusionModel::attention_block(const ag::Var& tokens, const Attn& a) const {
    using namespace ag;
    const int B = tokens->value.dim(0);
    const int L = tokens->value.dim(1);
    const int D = tokens->value.dim(2);
    const int nh = cfg_.heads;
    const int dh = D / nh;

    auto heads_split = [&](const Var& t) {
        // [B*L, D] -> [B*nh, L, dh]
        Var r = reshape(t, {B, L, nh, dh});
        r = permute(r, {0, 2, 1, 3});
        return reshape(r, {B * nh, L, dh});
    };

    Var normed = a.ln1(tokens);
    Var flat = reshape(normed, {B * L, D});
    Var q = heads_split(a.q(flat));
    Var k = heads_split(a.k(flat));
    Var v = heads_split(a.v(flat));

    Var scores = scale(bmm(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = softmax_lastdim(scores);
    Var ctx = bmm(attn, v, /*sorted_inner=*/true);

    ctx = reshape(ctx, {B, nh, L, dh});
    ctx = permute(ctx, {0, 2, 1, 3});
    Var out = a.o(reshape(ctx, {B * L, D}));
    Var t2 = add(tokens, reshape(out, {B, L, D}));

    Var f = reshape(a.ln2(t2), {B * L, D});
    Var ff = a.ff2(silu(a.ff1(f)));
    return add(t2, reshape(ff, {B, L, D}));
}

ag::Var FusionModel::saca_with(const ag::Var& volume, const Attn& a) const {
    using namespace ag;
    const int L = volume->value.dim(0);
    const int D = volume->value.dim(1);
    const int h = volume->value.dim(2);
    const int w = volume->value.dim(3);
    const int k = static_cast<int>(std::lround(1.0 / cfg_.pool_ratio));

    Var pooled = volume;
    int ph = h, pw = w;
    if (k > 1) {
        ph = ((h + k - 1) / k) * k;
        pw = ((w + k - 1) / k) * k;
        if (ph != h || pw != w) pooled = pad_hw(pooled, ph - h, pw - w);
        pooled = avg_pool2d(pooled, k);
    }
    const int gh = pooled->value.dim(2);
    const int gw = pooled->value.dim(3);

    // [L,D,gh,gw] -> [gh*gw, L, D]
    Var tokens = reshape(permute(pooled, {2, 3, 0, 1}), {gh * gw, L, D});
    Var delta = sub(attention_block(tokens, a), tokens);
    delta = permute(reshape(delta, {gh, gw, L, D}), {2, 3, 0, 1});
    if (k > 1) {
        delta = bilinear_upsample(delta, ph, pw);
        if (ph != h || pw != w) delta = crop_hw(delta, h, w);
    }
    return add(volume, delta);
}

ag::Var FusionModel::saca_graph(const ag::Var& volume) const {
    return saca_with(volume, attn_main_);
}

ag::Var FusionModel::refine_graph(const ag::Var& volume, int n_loops) const {
    using namespace ag;
    if (n_loops < 0) throw std::invalid_argument("refine: n_loops must be >= 0");
    Var v = volume;
    for (int i = 0; i < n_loops; ++i) {
        Var r = refine2_(silu(refine1_(v)));
        v = saca_with(add(v, r), attn_loop_);
    }
    return v;
}

ag::Var FusionModel::logit_rows(const ag::Var& volume, int out_h, int out_w) const {
    using namespace ag;
    Var logits = proj_(volume);                            // [L,1,h,w]
    logits = bilinear_upsample(logits, out_h, out_w);      // [L,1,H,W]
    const int L = logits->value.dim(0);
    Var rows = reshape(logits, {L, out_h * out_w});
    return permute(rows, {1, 0});                          // [P,L]
}

Tensor FusionModel::intra_layer_focus(const FocalStack& stack) const {
    if (stack.layer_count() < 1) throw std::invalid_argument("intra_layer_focus: empty stack");
    return encode_layers(ag::constant(stack_to_tensor(stack)))->value;
}

Tensor FusionModel::saca(const Tensor& volume) const {
    return saca_graph(ag::constant(volume))->value;
}

Tensor FusionModel::refine_loop(const Tensor& volume, int n_loops) const {
    return refine_graph(ag::constant(volume), n_loops)->value;
}

FocusMap FusionModel::focus_map(const Tensor& volume, int out_h, int out_w) const {
    using namespace ag;
    Var rows = softmax_lastdim(logit_rows(constant(volume), out_h, out_w));
    const int L = rows->value.dim(1);
    FocusMap map;
    map.probs = Tensor({L, out_h, out_w});
    for (int p = 0; p < out_h * out_w; ++p)
        for (int l = 0; l < L; ++l)
            map.probs[static_cast<std::int64_t>(l) * out_h * out_w + p] = rows->value.at(p, l);
    return map;
}

std::pair<Image, FocusMap> FusionModel::forward(const FocalStack& stack) const {
    return forward(stack, cfg_.fuse_mode);
}

std::pair<Image, FocusMap> FusionModel::forward(const FocalStack& stack, FuseMode mode) const {
    using namespace ag;
    const int H = stack.h(), W = stack.w();
    Var volume = encode_layers(constant(stack_to_tensor(stack)));
    volume = saca_graph(volume);
    volume = refine_graph(volume, cfg_.loops);
    Var rows = softmax_lastdim(logit_rows(volume, H, W));

    const int L = rows->value.dim(1);
    FocusMap map;
    map.probs = Tensor({L, H, W});
    for (int p = 0; p < H * W; ++p)
        for (int l = 0; l < L; ++l)
            map.probs[static_cast<std::int64_t>(l) * H * W + p] = rows->value.at(p, l);

    return {fuse(stack, map, mode), std::move(map)};
}

void FusionModel::save(const std::string& path, long step, const std::string& rng_state) const {
    save_checkpoint(path, "fusion", cfg_.to_json(), step, rng_state, pm_);
}

FusionModel FusionModel::load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "fusion") throw std::runtime_error("not a fusion checkpoint: " + path);
    FusionModel model(FusionConfig::from_json(ckpt.config));
    apply_checkpoint(ckpt, model.pm_);
    return model;
}

}  // namespace focalforge
