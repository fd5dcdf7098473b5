#include "focalforge/train_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "focalforge/metrics.hpp"

namespace focalforge {

void TrainFusionConfig::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("train: learning rate must be > 0");
    if (decay <= 0.0 || decay > 1.0) throw std::invalid_argument("train: decay must be in (0,1]");
    if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (layers_min < 1 || layers_max < layers_min)
        throw std::invalid_argument("train: bad layer range");
    if (drop_max < 0.0 || drop_max > 0.5)
        throw std::invalid_argument("train: drop_max must be in [0, 0.5]");
}

TrainingPair make_training_pair(const Image& image, const DepthMap& depth,
                                const TrainFusionConfig& cfg, Rng& rng) {
    const int layers = rng.uniform_int(cfg.layers_min, cfg.layers_max);
    const double gain = rng.uniform(cfg.blur_gain_min, cfg.blur_gain_max);
    const double frac = rng.uniform(0.0, cfg.drop_max);

    const LayerIndexMap bins = stratify_depth(depth, layers);
    FocalStack full = synthesize_stack(image, depth, layers, gain);
    FocalStack kept = drop_layers(full, frac, rng);

    // bin -> surviving layer with the nearest focus bin, lower bin on ties.
    std::vector<int> remap(static_cast<size_t>(layers));
    for (int b = 0; b < layers; ++b) {
        int best = 0;
        int best_d = std::abs(*kept.layer_meta[0] - b);
        for (int l = 1; l < kept.layer_count(); ++l) {
            const int d = std::abs(*kept.layer_meta[static_cast<size_t>(l)] - b);
            if (d < best_d) {
                best_d = d;
                best = l;
            }
        }
        remap[static_cast<size_t>(b)] = best;
    }

    TrainingPair pair;
    pair.stack = std::move(kept);
    pair.h = image.h;
    pair.w = image.w;
    pair.target_map.resize(bins.idx.size());
    for (size_t i = 0; i < bins.idx.size(); ++i)
        pair.target_map[i] = remap[static_cast<size_t>(bins.idx[i])];
    pair.target_image = image;
    return pair;
}

double fusion_loss(const FocusMap& pred_map, const Image& pred_image, const TrainingPair& target,
                   double lambda) {
    const int L = pred_map.layers();
    const int h = pred_map.h(), w = pred_map.w();
    if (h != target.h || w != target.w || L != target.stack.layer_count())
        throw std::invalid_argument("fusion_loss: shape mismatch");
    if (!pred_image.same_dims(target.target_image))
        throw std::invalid_argument("fusion_loss: image shape mismatch");

    double ce = 0.0;
    for (int p = 0; p < h * w; ++p) {
        const int t = target.target_map[static_cast<size_t>(p)];
        const double prob = pred_map.probs[static_cast<std::int64_t>(t) * h * w + p];
        ce -= std::log(std::max(prob, 1e-300));
    }
    ce /= static_cast<double>(h) * w;

    double mae = 0.0;
    for (size_t i = 0; i < pred_image.px.size(); ++i)
        mae += std::abs(pred_image.px[i] - target.target_image.px[i]);
    mae /= static_cast<double>(pred_image.px.size());

    return ce + lambda * mae;
}

namespace {

// Training graph for one pair: cross-entropy on upsampled logits plus the
// weighted-fusion L1 image term.
ag::Var pair_loss_graph(const FusionModel& model, const TrainingPair& pair, double lambda) {
    using namespace ag;
    Var stack = constant(stack_to_tensor(pair.stack));
    Var volume = model.encode_layers(stack);
    volume = model.saca_graph(volume);
    volume = model.refine_graph(volume, model.config().loops);
    Var rows = model.logit_rows(volume, pair.h, pair.w);

    Var ce = cross_entropy_rows(rows, pair.target_map);
    Var probs = softmax_lastdim(rows);
    Var fused = weighted_layer_sum(probs, stack);
    Var target = constant(image_to_chw(pair.target_image));
    return add(ce, scale(l1_loss(fused, target), lambda));
}

}  // namespace

TrainFusionResult train_fusion(FusionModel& model,
                               const std::vector<std::pair<Image, DepthMap>>& dataset,
                               const TrainFusionConfig& cfg, const std::string& ckpt_path,
                               const std::string& log_path) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train_fusion: empty dataset");

    const int val_n = std::min<int>(cfg.val_count, static_cast<int>(dataset.size()) / 5);
    const int train_n = static_cast<int>(dataset.size()) - val_n;
    if (train_n < 1) throw std::invalid_argument("train_fusion: dataset too small");

    Rng root(cfg.seed);
    Rng shuffle_rng = root.fork(1);
    Rng pair_seed_rng = root.fork(2);
    Rng val_rng = root.fork(3);

    // Fixed validation pairs so per-epoch scores are comparable.
    std::vector<TrainingPair> val_pairs;
    val_pairs.reserve(static_cast<size_t>(val_n));
    for (int i = 0; i < val_n; ++i) {
        Rng r = val_rng.fork(static_cast<std::uint64_t>(i));
        const auto& [img, dep] = dataset[static_cast<size_t>(train_n + i)];
        val_pairs.push_back(make_training_pair(img, dep, cfg, r));
    }

    nn::AdamW opt(model.params(), cfg.lr);
    opt.zero_grad();

    TrainFusionResult result;
    std::vector<Tensor> best_params;
    int stale = 0;
    std::string log;
    log += "epoch,lr,loss,val_ssim,val_psnr\n";

    std::vector<int> order(static_cast<size_t>(train_n));
    for (int i = 0; i < train_n; ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr * std::pow(cfg.decay, epoch);
        opt.set_lr(lr);

        for (int i = train_n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

        double epoch_loss = 0.0;
        int seen = 0;
        for (int start = 0; start < train_n; start += cfg.batch) {
            const int bsz = std::min(cfg.batch, train_n - start);
            opt.zero_grad();
            for (int k = 0; k < bsz; ++k) {
                const int idx = order[static_cast<size_t>(start + k)];
                Rng pr = pair_seed_rng.fork(
                    static_cast<std::uint64_t>(epoch) * 1000003ULL + static_cast<std::uint64_t>(idx));
                const auto& [img, dep] = dataset[static_cast<size_t>(idx)];
                TrainingPair pair = make_training_pair(img, dep, cfg, pr);
                ag::Var loss = pair_loss_graph(model, pair, cfg.lambda);
                epoch_loss += ag::scalar(loss);
                ++seen;
                ag::backward(ag::scale(loss, 1.0 / bsz));
            }
            opt.step();
        }
        epoch_loss /= std::max(seen, 1);

        double val_ssim = 0.0, val_psnr = 0.0;
        for (const auto& pair : val_pairs) {
            auto [fused, map] = model.forward(pair.stack, FuseMode::kSoft);
            val_ssim += ssim(fused, pair.target_image);
            val_psnr += psnr(fused, pair.target_image);
        }
        if (!val_pairs.empty()) {
            val_ssim /= val_pairs.size();
            val_psnr /= val_pairs.size();
        }

        EpochStats st{epoch, lr, epoch_loss, val_ssim, val_psnr};
        result.epochs.push_back(st);
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%d,%.8f,%.6f,%.6f,%.4f\n", epoch, lr, epoch_loss, val_ssim,
                      val_psnr);
        log += buf;

        if (result.best_epoch < 0 || val_ssim > result.best_val_ssim) {
            result.best_val_ssim = val_ssim;
            result.best_epoch = epoch;
            best_params.clear();
            for (const auto& v : model.params().vars()) best_params.push_back(v->value);
            stale = 0;
        } else if (++stale > cfg.patience) {
            break;
        }
    }

    if (!best_params.empty()) {
        const auto& vars = model.params().vars();
        for (size_t i = 0; i < vars.size(); ++i) vars[i]->value = best_params[i];
    }

    if (!ckpt_path.empty())
        model.save(ckpt_path, static_cast<long>(result.epochs.size()), shuffle_rng.state());
    if (!log_path.empty()) {
        std::ofstream f(log_path);
        if (!f) throw std::runtime_error("cannot write metrics log: " + log_path);
        f << log;
    }
    return result;
}

}  // namespace focalforge
