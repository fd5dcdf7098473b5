// focalforge: synthetic focal-stack generation, deterministic stack fusion,
// diffusion-based restoration, and evaluation, behind one reproducible CLI.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "focalforge/config.hpp"
#include "focalforge/controlnet.hpp"
#include "focalforge/io.hpp"
#include "focalforge/metrics.hpp"
#include "focalforge/pipelines.hpp"
#include "focalforge/train_fusion.hpp"

namespace fs = std::filesystem;
using namespace focalforge;

namespace {

void log_run_config(const std::string& out_dir, const std::string& subcommand,
                    const std::map<std::string, std::string>& kv) {
    if (out_dir.empty()) return;
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / ("run_config_" + subcommand + ".txt"));
    f << "subcommand = " << subcommand << "\n";
    for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
}

std::string out_dir_of(const std::string& path) {
    const fs::path p = fs::path(path).parent_path();
    return p.empty() ? "." : p.string();
}

std::vector<std::pair<Image, DepthMap>> load_pair_dir(const std::string& dir) {
    std::vector<std::pair<Image, DepthMap>> data;
    std::vector<fs::path> pngs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") pngs.push_back(e.path());
    std::sort(pngs.begin(), pngs.end());
    for (const auto& p : pngs) {
        fs::path depth = p;
        depth.replace_extension(".ffd");
        if (!fs::exists(depth)) continue;
        data.emplace_back(read_png(p.string()), read_grid(depth.string()));
    }
    if (data.empty()) throw std::runtime_error("no (png, ffd) pairs found in " + dir);
    return data;
}

TrainFusionConfig fusion_cfg_from_kv(const KvConfig& kv) {
    TrainFusionConfig cfg;
    cfg.batch = kv.get_int("batch", cfg.batch);
    cfg.lr = kv.get_double("lr", cfg.lr);
    cfg.decay = kv.get_double("decay", cfg.decay);
    cfg.epochs = kv.get_int("epochs", cfg.epochs);
    cfg.patience = kv.get_int("patience", cfg.patience);
    cfg.image_size = kv.get_int("image_size", cfg.image_size);
    cfg.layers_min = kv.get_int("layers_min", cfg.layers_min);
    cfg.layers_max = kv.get_int("layers_max", cfg.layers_max);
    cfg.blur_gain_min = kv.get_double("blur_gain_min", cfg.blur_gain_min);
    cfg.blur_gain_max = kv.get_double("blur_gain_max", cfg.blur_gain_max);
    cfg.drop_max = kv.get_double("drop_max", cfg.drop_max);
    cfg.lambda = kv.get_double("lambda", cfg.lambda);
    cfg.val_count = kv.get_int("val_count", cfg.val_count);
    cfg.model.feature_dim = kv.get_int("feature_dim", cfg.model.feature_dim);
    cfg.model.pool_ratio = kv.get_double("pool_ratio", cfg.model.pool_ratio);
    cfg.model.heads = kv.get_int("heads", cfg.model.heads);
    cfg.model.loops = kv.get_int("loops", cfg.model.loops);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"focalforge: focal-stack synthesis, fusion, restoration, evaluation"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    bool seed_given = false;
    app.add_flag_callback("--version", [] {
        std::cout << "focalforge 1.0.0\n";
        std::exit(0);
    });

    // ---- gen-data ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Write procedural (image, depth) pairs");
    std::string gen_out;
    int gen_count = 32, gen_size = 64;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Number of scenes");
    gen->add_option("--size", gen_size, "Image side length");
    gen->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });

    // ---- synth --------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Synthesize focal stacks from (image, depth) pairs");
    std::string sy_images, sy_depths, sy_out;
    int sy_layers = 5;
    double sy_gain = 1.5, sy_drop = 0.0;
    synth->add_option("--images", sy_images, "Directory of PNG images")->required();
    synth->add_option("--depths", sy_depths, "Directory of FFD1 depth grids")->required();
    synth->add_option("--layers", sy_layers, "Layer count L");
    synth->add_option("--blur-gain", sy_gain, "Blur sigma units per bin");
    synth->add_option("--drop", sy_drop, "Max layer-drop fraction in [0,0.5]");
    synth->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });
    synth->add_option("--out", sy_out, "Output directory")->required();

    // ---- train-fusion --------------------------------------------------------
    auto* tf = app.add_subcommand("train-fusion", "Train the fusion network");
    std::string tf_data, tf_config, tf_out;
    tf->add_option("--data", tf_data, "Directory of (png, ffd) pairs")->required();
    tf->add_option("--config", tf_config, "Key-value config file");
    tf->add_option("--out", tf_out, "Checkpoint path")->required();
    tf->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });

    // ---- fuse ------------------------------------------------------------------
    auto* fu = app.add_subcommand("fuse", "Fuse a focal stack");
    std::string fu_stack, fu_ckpt, fu_method, fu_mode = "soft", fu_out, fu_map;
    fu->add_option("--stack", fu_stack, "Stack directory (layer_*.png)")->required();
    fu->add_option("--ckpt", fu_ckpt, "Fusion checkpoint");
    fu->add_option("--method", fu_method, "laplacian|average (instead of --ckpt)");
    fu->add_option("--mode", fu_mode, "soft|hard");
    fu->add_option("--out", fu_out, "Output PNG")->required();
    fu->add_option("--save-map", fu_map, "Write the focus map (FFM1)");

    // ---- train-vae ---------------------------------------------------------------
    auto* tv = app.add_subcommand("train-vae", "Train the latent autoencoder");
    std::string tv_config, tv_out, tv_data;
    tv->add_option("--config", tv_config, "Key-value config file");
    tv->add_option("--out", tv_out, "Checkpoint path")->required();
    tv->add_option("--data", tv_data, "Optional directory of PNG images");
    tv->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });

    // ---- train-diffusion ------------------------------------------------------------
    auto* td = app.add_subcommand("train-diffusion", "Train the latent denoiser");
    std::string td_config, td_out, td_vae, td_data;
    td->add_option("--config", td_config, "Key-value config file");
    td->add_option("--vae", td_vae, "Autoencoder checkpoint");
    td->add_option("--data", td_data, "Optional directory of PNG images");
    td->add_option("--out", td_out, "Checkpoint path")->required();
    td->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });

    // ---- train-control -----------------------------------------------------------------
    auto* tc = app.add_subcommand("train-control", "Train the conditioning branch");
    std::string tc_pairs, tc_config, tc_out, tc_vae, tc_diff;
    tc->add_option("--pairs", tc_pairs, "Directory with degraded/ and gt/ PNG subdirs");
    tc->add_option("--config", tc_config, "Key-value config file");
    tc->add_option("--vae", tc_vae, "Autoencoder checkpoint");
    tc->add_option("--diffusion", tc_diff, "Denoiser checkpoint");
    tc->add_option("--out", tc_out, "Checkpoint path")->required();
    tc->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });

    // ---- restore -------------------------------------------------------------------------
    auto* re = app.add_subcommand("restore", "Generative restoration of a fused image");
    std::string re_in, re_vae, re_diff, re_ctrl, re_out, re_sigma = "beta";
    int re_steps = 0;
    re->add_option("--input", re_in, "Fused PNG")->required();
    re->add_option("--vae", re_vae, "Autoencoder checkpoint")->required();
    re->add_option("--diffusion", re_diff, "Denoiser checkpoint")->required();
    re->add_option("--control", re_ctrl, "Control checkpoint")->required();
    re->add_option("--steps", re_steps, "Sampling steps (0 = schedule length)");
    re->add_option("--sigma-mode", re_sigma, "beta|posterior");
    re->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });
    re->add_option("--out", re_out, "Output PNG")->required();

    // ---- eval ---------------------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "Reference metrics over paired PNG directories");
    std::string ev_pred, ev_gt, ev_out;
    ev->add_option("--pred", ev_pred, "Prediction directory")->required();
    ev->add_option("--gt", ev_gt, "Ground-truth directory")->required();
    ev->add_option("--out", ev_out, "Report CSV path")->required();

    // ---- bench -----------------------------------------------------------------------------------
    auto* be = app.add_subcommand("bench", "End-to-end synth->fuse->(restore)->eval benchmark");
    BenchOptions bopts;
    be->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });
    be->add_option("--cases", bopts.cases, "Number of scenes");
    be->add_option("--size", bopts.size, "Image side length");
    be->add_option("--layers", bopts.layers, "Layer count");
    be->add_option("--blur-gain", bopts.blur_gain, "Blur sigma units per bin");
    be->add_option("--ckpt", bopts.fusion_ckpt, "Fusion checkpoint");
    be->add_option("--vae", bopts.vae_ckpt, "Autoencoder checkpoint");
    be->add_option("--diffusion", bopts.diffusion_ckpt, "Denoiser checkpoint");
    be->add_option("--control", bopts.control_ckpt, "Control checkpoint");
    be->add_option("--restore-steps", bopts.restore_steps, "Restore sampling steps");
    be->add_option("--out", bopts.out_dir, "Output directory")->required();

    // ---- ablate --------------------------------------------------------------------------------------
    auto* ab = app.add_subcommand("ablate", "Refinement-loop / pooling-ratio sweeps");
    AblateOptions aopts;
    std::string ab_which = "all";
    ab->add_option("--which", ab_which, "loops|pooling|all");
    ab->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });
    ab->add_option("--scenes", aopts.train_scenes, "Training scenes per variant");
    ab->add_option("--epochs", aopts.epochs, "Epochs per variant");
    ab->add_option("--out", aopts.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage problems exit 1; --help/--version pass through as success.
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const std::uint64_t run_seed = resolve_seed(seed_given, seed, 7);

        if (*gen) {
            Rng rng(run_seed);
            SceneParams sp;
            sp.h = gen_size;
            sp.w = gen_size;
            fs::create_directories(gen_out);
            char name[64];
            for (int i = 0; i < gen_count; ++i) {
                auto [img, depth] = make_scene(rng, sp);
                std::snprintf(name, sizeof(name), "scene_%04d.png", i);
                write_png((fs::path(gen_out) / name).string(), img);
                std::snprintf(name, sizeof(name), "scene_%04d.ffd", i);
                write_grid((fs::path(gen_out) / name).string(), depth);
            }
            log_run_config(gen_out, "gen-data",
                           {{"count", std::to_string(gen_count)},
                            {"size", std::to_string(gen_size)},
                            {"seed", std::to_string(run_seed)}});
            std::cout << "wrote " << gen_count << " scenes to " << gen_out << "\n";
        } else if (*synth) {
            if (sy_drop < 0.0 || sy_drop > 0.5)
                throw std::invalid_argument("--drop must be in [0, 0.5]");
            Rng rng(run_seed);
            std::vector<fs::path> pngs;
            for (const auto& e : fs::directory_iterator(sy_images))
                if (e.path().extension() == ".png") pngs.push_back(e.path());
            std::sort(pngs.begin(), pngs.end());
            if (pngs.empty()) throw std::runtime_error("no PNG images in " + sy_images);
            int written = 0;
            for (const auto& p : pngs) {
                const fs::path depth_path = fs::path(sy_depths) / p.stem().concat(".ffd");
                if (!fs::exists(depth_path)) continue;
                const Image img = read_png(p.string());
                const DepthMap depth = read_grid(depth_path.string());
                FocalStack stack = synthesize_stack(img, depth, sy_layers, sy_gain);
                StackManifest manifest;
                manifest.layers = sy_layers;
                manifest.blur_gain = sy_gain;
                manifest.seed = run_seed;
                if (sy_drop > 0.0) {
                    const double frac = rng.uniform(0.0, sy_drop);
                    stack = drop_layers(stack, frac, rng, &manifest.dropped);
                }
                manifest.layer_meta = stack.layer_meta;
                save_stack((fs::path(sy_out) / p.stem()).string(), stack, &depth, manifest);
                ++written;
            }
            if (written == 0) throw std::runtime_error("no (image, depth) pairs matched");
            log_run_config(sy_out, "synth",
                           {{"images", sy_images},
                            {"depths", sy_depths},
                            {"layers", std::to_string(sy_layers)},
                            {"blur_gain", std::to_string(sy_gain)},
                            {"drop", std::to_string(sy_drop)},
                            {"seed", std::to_string(run_seed)}});
            std::cout << "wrote " << written << " stacks to " << sy_out << "\n";
        } else if (*tf) {
            KvConfig kv = tf_config.empty() ? KvConfig{} : KvConfig::parse_file(tf_config);
            TrainFusionConfig cfg = fusion_cfg_from_kv(kv);
            cfg.seed = seed_given ? run_seed : kv.get_u64("seed", run_seed);
            auto dataset = load_pair_dir(tf_data);
            FusionModel model(cfg.model);
            TrainFusionResult r =
                train_fusion(model, dataset, cfg, tf_out, tf_out + ".metrics.csv");
            log_run_config(out_dir_of(tf_out), "train-fusion",
                           {{"data", tf_data},
                            {"seed", std::to_string(cfg.seed)},
                            {"config", kv.dump()}});
            std::printf("best val SSIM %.4f at epoch %d (%zu epochs run)\n", r.best_val_ssim,
                        r.best_epoch, r.epochs.size());
        } else if (*fu) {
            FocalStack stack = load_stack(fu_stack);
            Image fused;
            std::optional<FocusMap> map;
            if (!fu_method.empty()) {
                if (fu_method == "laplacian") {
                    BaselineResult r = laplacian_argmax_fuse(stack);
                    fused = std::move(r.fused);
                    FocusMap m;
                    m.probs = Tensor({r.decision.layers, r.decision.h, r.decision.w});
                    for (int y = 0; y < r.decision.h; ++y)
                        for (int x = 0; x < r.decision.w; ++x)
                            m.probs.at(r.decision.at(y, x), y, x) = 1.0;
                    map = std::move(m);
                } else if (fu_method == "average") {
                    fused = average_fuse(stack);
                } else {
                    throw std::invalid_argument("unknown --method: " + fu_method);
                }
            } else if (!fu_ckpt.empty()) {
                FusionModel model = FusionModel::load(fu_ckpt);
                auto [f, m] = model.forward(stack, fuse_mode_from_string(fu_mode));
                fused = std::move(f);
                map = std::move(m);
            } else {
                throw std::invalid_argument("fuse: provide --ckpt or --method");
            }
            write_png(fu_out, fused);
            if (!fu_map.empty()) {
                if (!map) throw std::invalid_argument("--save-map requires --ckpt or laplacian");
                write_planes(fu_map, map->probs);
            }
            std::cout << "wrote " << fu_out << "\n";
        } else if (*tv) {
            KvConfig kv = tv_config.empty() ? KvConfig{} : KvConfig::parse_file(tv_config);
            TrainAeConfig cfg;
            cfg.steps = kv.get_int("steps", cfg.steps);
            cfg.batch = kv.get_int("batch", cfg.batch);
            cfg.lr = kv.get_double("lr", cfg.lr);
            cfg.kl_weight = kv.get_double("kl_weight", cfg.kl_weight);
            cfg.seed = seed_given ? run_seed : kv.get_u64("seed", run_seed);
            std::vector<Image> images;
            if (!tv_data.empty()) {
                std::vector<fs::path> pngs;
                for (const auto& e : fs::directory_iterator(tv_data))
                    if (e.path().extension() == ".png") pngs.push_back(e.path());
                std::sort(pngs.begin(), pngs.end());
                for (const auto& p : pngs) images.push_back(read_png(p.string()));
            } else {
                Rng rng(cfg.seed + 1);
                SceneParams sp;
                sp.h = kv.get_int("size", 64);
                sp.w = sp.h;
                const int n = kv.get_int("scenes", 400);
                for (int i = 0; i < n; ++i) images.push_back(make_scene(rng, sp).first);
            }
            AutoencoderConfig acfg;
            acfg.base_width = kv.get_int("base_width", acfg.base_width);
            Autoencoder ae(acfg);
            TrainCurve curve =
                train_autoencoder(ae, images, cfg, tv_out, tv_out + ".metrics.csv");
            log_run_config(out_dir_of(tv_out), "train-vae",
                           {{"seed", std::to_string(cfg.seed)}, {"config", kv.dump()}});
            std::printf("autoencoder final loss %.5f over %d steps\n", curve.final_loss, cfg.steps);
        } else if (*td) {
            KvConfig kv = td_config.empty() ? KvConfig{} : KvConfig::parse_file(td_config);
            const std::string vae_path = !td_vae.empty() ? td_vae : kv.get_str("vae", "");
            if (vae_path.empty()) throw std::invalid_argument("train-diffusion: missing --vae");
            Autoencoder ae = Autoencoder::load(vae_path);
            TrainDiffusionConfig cfg;
            cfg.steps = kv.get_int("steps", cfg.steps);
            cfg.batch = kv.get_int("batch", cfg.batch);
            cfg.lr = kv.get_double("lr", cfg.lr);
            cfg.seed = seed_given ? run_seed : kv.get_u64("seed", run_seed);
            NoiseSchedule schedule =
                make_schedule(kv.get_int("T", 200), kv.get_double("beta_start", 1e-4),
                              kv.get_double("beta_end", 0.02));
            std::vector<Image> images;
            if (!td_data.empty()) {
                std::vector<fs::path> pngs;
                for (const auto& e : fs::directory_iterator(td_data))
                    if (e.path().extension() == ".png") pngs.push_back(e.path());
                std::sort(pngs.begin(), pngs.end());
                for (const auto& p : pngs) images.push_back(read_png(p.string()));
            } else {
                Rng rng(cfg.seed + 1);
                SceneParams sp;
                sp.h = kv.get_int("size", 64);
                sp.w = sp.h;
                const int n = kv.get_int("scenes", 400);
                for (int i = 0; i < n; ++i) images.push_back(make_scene(rng, sp).first);
            }
            DenoiserConfig dcfg;
            dcfg.base_width = kv.get_int("base_width", dcfg.base_width);
            dcfg.latent_channels = ae.config().latent_channels;
            UNetDenoiser unet(dcfg);
            TrainCurve curve = train_denoiser(unet, ae, images, schedule, cfg, td_out,
                                              td_out + ".metrics.csv");
            log_run_config(out_dir_of(td_out), "train-diffusion",
                           {{"vae", vae_path},
                            {"seed", std::to_string(cfg.seed)},
                            {"config", kv.dump()}});
            std::printf("denoiser final loss %.5f over %d steps\n", curve.final_loss, cfg.steps);
        } else if (*tc) {
            KvConfig kv = tc_config.empty() ? KvConfig{} : KvConfig::parse_file(tc_config);
            const std::string vae_path = !tc_vae.empty() ? tc_vae : kv.get_str("vae", "");
            const std::string diff_path = !tc_diff.empty() ? tc_diff : kv.get_str("diffusion", "");
            if (vae_path.empty() || diff_path.empty())
                throw std::invalid_argument("train-control: missing --vae/--diffusion");
            Autoencoder ae = Autoencoder::load(vae_path);
            UNetDenoiser unet = UNetDenoiser::load(diff_path);
            NoiseSchedule schedule = unet.schedule();

            TrainControlConfig cfg;
            cfg.steps = kv.get_int("steps", cfg.steps);
            cfg.phase1_steps = kv.get_int("phase1_steps", cfg.phase1_steps);
            cfg.lr1 = kv.get_double("lr1", cfg.lr1);
            cfg.lr2 = kv.get_double("lr2", cfg.lr2);
            cfg.batch = kv.get_int("batch", cfg.batch);
            cfg.seed = seed_given ? run_seed : kv.get_u64("seed", run_seed);

            std::vector<std::pair<Image, Image>> pairs;
            if (!tc_pairs.empty()) {
                const fs::path deg = fs::path(tc_pairs) / "degraded";
                const fs::path gt = fs::path(tc_pairs) / "gt";
                std::vector<fs::path> pngs;
                for (const auto& e : fs::directory_iterator(deg))
                    if (e.path().extension() == ".png") pngs.push_back(e.path());
                std::sort(pngs.begin(), pngs.end());
                for (const auto& p : pngs) {
                    const fs::path g = gt / p.filename();
                    if (fs::exists(g)) pairs.emplace_back(read_png(p.string()), read_png(g.string()));
                }
                if (pairs.empty()) throw std::runtime_error("no pairs under " + tc_pairs);
            } else {
                const std::string fusion_path = kv.get_str("fusion", "");
                if (fusion_path.empty())
                    throw std::invalid_argument("train-control: need --pairs or config key fusion");
                FusionModel fusion = FusionModel::load(fusion_path);
                Rng rng(cfg.seed + 2);
                SceneParams sp;
                sp.h = kv.get_int("size", 64);
                sp.w = sp.h;
                pairs = make_control_pairs(kv.get_int("pairs", 200), sp, kv.get_int("layers", 5),
                                           kv.get_double("blur_gain", 1.5),
                                           kv.get_double("drop_min", 0.0),
                                           kv.get_double("drop_max", 0.5), fusion, rng);
            }
            ControlConfig ccfg;
            ccfg.latent_channels = ae.config().latent_channels;
            ccfg.base_width = kv.get_int("base_width", ccfg.base_width);
            ccfg.temb_dim = unet.config().temb_dim;
            ControlBranch branch(ccfg);
            TrainCurve curve = train_control(branch, pairs, ae, unet, schedule, cfg, tc_out,
                                             tc_out + ".metrics.csv");
            log_run_config(out_dir_of(tc_out), "train-control",
                           {{"vae", vae_path},
                            {"diffusion", diff_path},
                            {"seed", std::to_string(cfg.seed)},
                            {"config", kv.dump()}});
            std::printf("control final loss %.5f over %d steps\n", curve.final_loss, cfg.steps);
        } else if (*re) {
            Autoencoder ae = Autoencoder::load(re_vae);
            UNetDenoiser unet = UNetDenoiser::load(re_diff);
            ControlBranch branch = ControlBranch::load(re_ctrl);
            const SigmaMode mode = sigma_mode_from_string(re_sigma);
            NoiseSchedule schedule = unet.schedule(mode);
            RestorationModels models{&ae, &unet, &branch};
            RestorationConfig cfg;
            cfg.steps = re_steps;
            cfg.sigma_mode = mode;
            cfg.seed = run_seed;
            const Image fused = read_png(re_in);
            const Image out = restore(fused, models, schedule, cfg);
            write_png(re_out, out);
            log_run_config(out_dir_of(re_out), "restore",
                           {{"input", re_in},
                            {"steps", std::to_string(re_steps)},
                            {"sigma_mode", re_sigma},
                            {"seed", std::to_string(run_seed)}});
            std::cout << "wrote " << re_out << "\n";
        } else if (*ev) {
            MetricReport report = evaluate(ev_pred, ev_gt);
            write_report_csv(ev_out, report);
            std::printf("evaluated %d cases: mean SSIM %.4f, PSNR %.2f\n", report.evaluated,
                        report.mean_ssim, report.mean_psnr);
        } else if (*be) {
            bopts.seed = run_seed;
            auto rows = run_bench(bopts);
            log_run_config(bopts.out_dir, "bench",
                           {{"seed", std::to_string(run_seed)},
                            {"cases", std::to_string(bopts.cases)},
                            {"size", std::to_string(bopts.size)},
                            {"layers", std::to_string(bopts.layers)}});
            for (const auto& r : rows)
                std::printf("%-20s SSIM %.4f  PSNR %.2f  sharpness %.6f\n", r.method.c_str(),
                            r.mean_ssim, r.mean_psnr, r.mean_sharpness);
        } else if (*ab) {
            aopts.seed = run_seed;
            if (ab_which != "loops" && ab_which != "pooling" && ab_which != "all")
                throw std::invalid_argument("--which must be loops|pooling|all");
            log_run_config(aopts.out_dir, "ablate",
                           {{"which", ab_which},
                            {"seed", std::to_string(run_seed)},
                            {"scenes", std::to_string(aopts.train_scenes)},
                            {"epochs", std::to_string(aopts.epochs)}});
            if (ab_which == "loops" || ab_which == "all") {
                auto rows = run_loop_ablation(aopts);
                for (const auto& r : rows)
                    std::printf("%-12s val SSIM %.4f  PSNR %.2f\n", r.setting.c_str(), r.val_ssim,
                                r.val_psnr);
            }
            if (ab_which == "pooling" || ab_which == "all") {
                auto rows = run_pool_ablation(aopts);
                for (const auto& r : rows)
                    std::printf("%-12s val SSIM %.4f  PSNR %.2f\n", r.setting.c_str(), r.val_ssim,
                                r.val_psnr);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
