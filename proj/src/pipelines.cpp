#include "focalforge/pipelines.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "focalforge/metrics.hpp"

namespace fs = std::filesystem;

namespace focalforge {

std::vector<bool> boundary_margin_mask(const LayerIndexMap& bins, int min_dist) {
    const int h = bins.h, w = bins.w;
    std::vector<bool> boundary(static_cast<size_t>(h) * w, false);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int v = bins.at(y, x);
            if ((x + 1 < w && bins.at(y, x + 1) != v) || (y + 1 < h && bins.at(y + 1, x) != v))
                boundary[static_cast<size_t>(y) * w + x] = true;
        }
    // Chebyshev dilation of the boundary set, min_dist iterations.
    std::vector<bool> cur = boundary;
    for (int it = 1; it < min_dist; ++it) {
        std::vector<bool> next = cur;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (cur[static_cast<size_t>(y) * w + x]) continue;
                bool near = false;
                for (int dy = -1; dy <= 1 && !near; ++dy)
                    for (int dx = -1; dx <= 1 && !near; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny >= 0 && ny < h && nx >= 0 && nx < w &&
                            cur[static_cast<size_t>(ny) * w + nx])
                            near = true;
                    }
                if (near) next[static_cast<size_t>(y) * w + x] = true;
            }
        cur.swap(next);
    }
    std::vector<bool> mask(cur.size());
    for (size_t i = 0; i < cur.size(); ++i) mask[i] = !cur[i];
    return mask;
}

double agreement_fraction(const LayerIndexMap& a, const LayerIndexMap& b,
                          const std::vector<bool>& mask) {
    if (a.h != b.h || a.w != b.w || mask.size() != a.idx.size())
        throw std::invalid_argument("agreement_fraction: shape mismatch");
    std::int64_t total = 0, agree = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++total;
        if (a.idx[i] == b.idx[i]) ++agree;
    }
    return total == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(total);
}

LayerIndexMap hard_decisions(const FocusMap& map) {
    LayerIndexMap out;
    out.layers = map.layers();
    out.h = map.h();
    out.w = map.w();
    out.idx.resize(static_cast<size_t>(out.h) * out.w);
    const std::int64_t hw = static_cast<std::int64_t>(out.h) * out.w;
    for (std::int64_t p = 0; p < hw; ++p) {
        int best = 0;
        double best_v = map.probs[p];
        for (int l = 1; l < out.layers; ++l) {
            const double v = map.probs[static_cast<std::int64_t>(l) * hw + p];
            if (v > best_v) {
                best_v = v;
                best = l;
            }
        }
        out.idx[static_cast<size_t>(p)] = best;
    }
    return out;
}

std::vector<std::pair<Image, Image>> make_control_pairs(int count, const SceneParams& scene,
                                                        int layers, double blur_gain,
                                                        double drop_min, double drop_max,
                                                        const FusionModel& fusion, Rng& rng) {
    std::vector<std::pair<Image, Image>> pairs;
    pairs.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        auto [img, depth] = make_scene(rng, scene);
        FocalStack stack = synthesize_stack(img, depth, layers, blur_gain);
        const double frac = rng.uniform(drop_min, drop_max);
        FocalStack kept = drop_layers(stack, frac, rng);
        auto [fused, map] = fusion.forward(kept, FuseMode::kSoft);
        pairs.emplace_back(std::move(fused), std::move(img));
    }
    return pairs;
}

// ---------------------------------------------------------------------------

namespace {

struct Accum {
    double ssim_sum = 0, psnr_sum = 0, sharp_sum = 0;
    int n = 0;

    void add(const Image& pred, const Image& gt) {
        ssim_sum += ssim(pred, gt);
        psnr_sum += psnr(pred, gt);
        sharp_sum += sharpness(pred);
        ++n;
    }

    BenchRow row(const std::string& method) const {
        BenchRow r;
        r.method = method;
        if (n > 0) {
            r.mean_ssim = ssim_sum / n;
            r.mean_psnr = psnr_sum / n;
            r.mean_sharpness = sharp_sum / n;
        }
        return r;
    }
};

void write_bench_files(const std::string& out_dir, const std::vector<BenchRow>& rows,
                       const BenchOptions& opts) {
    fs::create_directories(out_dir);
    char buf[192];
    {
        std::ofstream f(fs::path(out_dir) / "bench.csv");
        f << "method,ssim,psnr,sharpness\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.4f,%.8f\n", r.method.c_str(), r.mean_ssim,
                          r.mean_psnr, r.mean_sharpness);
            f << buf;
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "bench.md");
        std::snprintf(buf, sizeof(buf),
                      "# Fusion benchmark (seed %llu, %d cases, %dx%d, L=%d)\n\n",
                      static_cast<unsigned long long>(opts.seed), opts.cases, opts.size, opts.size,
                      opts.layers);
        f << buf;
        f << "| Method | SSIM | PSNR | Sharpness |\n|---|---|---|---|\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.2f | %.6f |\n", r.method.c_str(),
                          r.mean_ssim, r.mean_psnr, r.mean_sharpness);
            f << buf;
        }
    }
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchOptions& opts) {
    Rng rng(opts.seed);
    SceneParams scene;
    scene.h = opts.size;
    scene.w = opts.size;

    std::optional<FusionModel> model;
    if (!opts.fusion_ckpt.empty()) model.emplace(FusionModel::load(opts.fusion_ckpt));

    std::optional<Autoencoder> vae;
    std::optional<UNetDenoiser> denoiser;
    std::optional<ControlBranch> control;
    NoiseSchedule schedule;
    const bool with_restore =
        !opts.vae_ckpt.empty() && !opts.diffusion_ckpt.empty() && !opts.control_ckpt.empty();
    if (with_restore) {
        vae.emplace(Autoencoder::load(opts.vae_ckpt));
        denoiser.emplace(UNetDenoiser::load(opts.diffusion_ckpt));
        control.emplace(ControlBranch::load(opts.control_ckpt));
        schedule = denoiser->schedule();
    }

    Accum avg, lap, net, restored;
    for (int i = 0; i < opts.cases; ++i) {
        auto [img, depth] = make_scene(rng, scene);
        FocalStack stack = synthesize_stack(img, depth, opts.layers, opts.blur_gain);

        avg.add(average_fuse(stack), img);
        lap.add(laplacian_argmax_fuse(stack).fused, img);
        if (model) {
            auto [fused, map] = model->forward(stack, FuseMode::kSoft);
            net.add(fused, img);
            if (with_restore) {
                RestorationModels rm{&*vae, &*denoiser, &*control};
                RestorationConfig rc;
                rc.steps = opts.restore_steps;
                rc.seed = opts.seed * 1000003ULL + static_cast<std::uint64_t>(i);
                restored.add(restore(fused, rm, schedule, rc), img);
            }
        }
    }

    std::vector<BenchRow> rows;
    rows.push_back(avg.row("average"));
    rows.push_back(lap.row("laplacian_argmax"));
    if (model) rows.push_back(net.row("fusion_net"));
    if (model && with_restore) rows.push_back(restored.row("fusion_net+restore"));

    if (!opts.out_dir.empty()) write_bench_files(opts.out_dir, rows, opts);
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

TrainFusionConfig small_train_config(const AblateOptions& opts) {
    TrainFusionConfig cfg;
    cfg.seed = opts.seed;
    cfg.epochs = opts.epochs;
    cfg.image_size = opts.size;
    cfg.batch = 8;
    cfg.val_count = 16;
    cfg.patience = opts.epochs;  // no early stop inside sweeps
    cfg.drop_max = 0.3;
    return cfg;
}

AblateRow train_variant(const std::string& label, const FusionConfig& mcfg,
                        const AblateOptions& opts) {
    TrainFusionConfig cfg = small_train_config(opts);
    cfg.model = mcfg;
    Rng data_rng(opts.seed);
    SceneParams scene;
    scene.h = opts.size;
    scene.w = opts.size;
    auto dataset = make_scene_dataset(opts.train_scenes, data_rng, scene);
    FusionModel model(mcfg);
    TrainFusionResult r = train_fusion(model, dataset, cfg);
    AblateRow row;
    row.setting = label;
    row.val_ssim = r.best_val_ssim;
    for (const auto& e : r.epochs)
        if (e.epoch == r.best_epoch) row.val_psnr = e.val_psnr;
    return row;
}

}  // namespace

std::vector<AblateRow> run_loop_ablation(const AblateOptions& opts) {
    std::vector<AblateRow> rows;
    for (int loops : opts.loop_counts) {
        FusionConfig mcfg;
        mcfg.loops = loops;
        rows.push_back(train_variant("loops=" + std::to_string(loops), mcfg, opts));
    }
    if (!opts.out_dir.empty()) write_ablation_files(opts.out_dir, "ablate_loops", rows);
    return rows;
}

std::vector<AblateRow> run_pool_ablation(const AblateOptions& opts) {
    std::vector<AblateRow> rows;
    for (double r : opts.pool_ratios) {
        FusionConfig mcfg;
        mcfg.pool_ratio = r;
        char label[32];
        std::snprintf(label, sizeof(label), "ratio=1/%d", static_cast<int>(std::lround(1.0 / r)));
        rows.push_back(train_variant(label, mcfg, opts));
    }
    if (!opts.out_dir.empty()) write_ablation_files(opts.out_dir, "ablate_pooling", rows);
    return rows;
}

void write_ablation_files(const std::string& out_dir, const std::string& name,
                          const std::vector<AblateRow>& rows) {
    fs::create_directories(out_dir);
    char buf[128];
    {
        std::ofstream f(fs::path(out_dir) / (name + ".csv"));
        f << "setting,val_ssim,val_psnr\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.4f\n", r.setting.c_str(), r.val_ssim,
                          r.val_psnr);
            f << buf;
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / (name + ".md"));
        f << "| Setting | Val SSIM | Val PSNR |\n|---|---|---|\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.2f |\n", r.setting.c_str(), r.val_ssim,
                          r.val_psnr);
            f << buf;
        }
    }
}

}  // namespace focalforge
