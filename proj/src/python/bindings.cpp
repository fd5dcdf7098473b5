#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "focalforge/baselines.hpp"
#include "focalforge/controlnet.hpp"
#include "focalforge/fusion_net.hpp"
#include "focalforge/metrics.hpp"
#include "focalforge/stack_synth.hpp"
#include "focalforge/synthdata.hpp"

namespace py = pybind11;
using namespace focalforge;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image array_to_image(const Arr& a) {
    if (a.ndim() != 3) throw std::invalid_argument("expected an HxWxC array");
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
              static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), img.px.data());
    return img;
}

py::array image_to_array(const Image& img) {
    py::array_t<double> out({img.h, img.w, img.c});
    std::copy(img.px.begin(), img.px.end(), out.mutable_data());
    return out;
}

Grid array_to_grid(const Arr& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected an HxW array");
    Grid g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), g.v.data());
    return g;
}

Tensor array_to_tensor(const Arr& a) {
    std::vector<int> shape(static_cast<size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] =
        static_cast<int>(a.shape(i));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

py::array tensor_to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int d : t.shape()) shape.push_back(d);
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

FocalStack array_to_stack(const Arr& a) {
    if (a.ndim() != 4) throw std::invalid_argument("expected an LxHxWxC array");
    FocalStack stack;
    const int L = static_cast<int>(a.shape(0));
    const int h = static_cast<int>(a.shape(1));
    const int w = static_cast<int>(a.shape(2));
    const int c = static_cast<int>(a.shape(3));
    const auto* src = a.data();
    for (int l = 0; l < L; ++l) {
        Image img(h, w, c);
        std::copy(src + static_cast<size_t>(l) * img.px.size(),
                  src + static_cast<size_t>(l + 1) * img.px.size(), img.px.data());
        stack.layers.push_back(std::move(img));
        stack.layer_meta.push_back(l);
    }
    return stack;
}

py::array stack_to_array(const FocalStack& stack) {
    const int L = stack.layer_count();
    py::array_t<double> out({L, stack.h(), stack.w(), stack.channels()});
    auto* dst = out.mutable_data();
    for (int l = 0; l < L; ++l) {
        const auto& px = stack.layers[static_cast<size_t>(l)].px;
        std::copy(px.begin(), px.end(), dst + static_cast<size_t>(l) * px.size());
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "focalforge core: focal-stack synthesis, fusion, diffusion restoration, metrics";

    // ---- stack synthesis ----
    m.def(
        "stratify_depth",
        [](const Arr& depth, int layers) {
            const LayerIndexMap map = stratify_depth(array_to_grid(depth), layers);
            py::array_t<int> out({map.h, map.w});
            std::copy(map.idx.begin(), map.idx.end(), out.mutable_data());
            return out;
        },
        py::arg("depth"), py::arg("layers"),
        "Per-pixel bin index: min(floor(depth * layers), layers - 1).");

    m.def(
        "synthesize_stack",
        [](const Arr& image, const Arr& depth, int layers, double blur_gain) {
            return stack_to_array(
                synthesize_stack(array_to_image(image), array_to_grid(depth), layers, blur_gain));
        },
        py::arg("image"), py::arg("depth"), py::arg("layers"), py::arg("blur_gain") = 1.5);

    m.def(
        "drop_layers",
        [](const Arr& stack, double drop_fraction, std::uint64_t seed) {
            Rng rng(seed);
            std::vector<int> dropped;
            const FocalStack kept =
                drop_layers(array_to_stack(stack), drop_fraction, rng, &dropped);
            return py::make_tuple(stack_to_array(kept), dropped);
        },
        py::arg("stack"), py::arg("drop_fraction"), py::arg("seed"));

    m.def(
        "check_completeness",
        [](const std::vector<std::pair<double, double>>& intervals,
           std::pair<double, double> target) {
            std::vector<DoFInterval> iv;
            for (auto [a, b] : intervals) iv.push_back({a, b});
            return check_completeness(iv, {target.first, target.second});
        },
        py::arg("intervals"), py::arg("target"));

    m.def(
        "check_efficiency",
        [](const std::vector<std::pair<double, double>>& intervals) {
            std::vector<DoFInterval> iv;
            for (auto [a, b] : intervals) iv.push_back({a, b});
            return check_efficiency(iv);
        },
        py::arg("intervals"));

    m.def(
        "make_scene",
        [](std::uint64_t seed, int size) {
            Rng rng(seed);
            SceneParams sp;
            sp.h = size;
            sp.w = size;
            auto [img, depth] = make_scene(rng, sp);
            py::array_t<double> d({depth.h, depth.w});
            std::copy(depth.v.begin(), depth.v.end(), d.mutable_data());
            return py::make_tuple(image_to_array(img), d);
        },
        py::arg("seed"), py::arg("size") = 64);

    // ---- diffusion math ----
    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("T", &NoiseSchedule::T)
        .def_property_readonly("beta", [](const NoiseSchedule& s) { return s.beta; })
        .def_property_readonly("alpha", [](const NoiseSchedule& s) { return s.alpha; })
        .def_property_readonly("alpha_bar", [](const NoiseSchedule& s) { return s.alpha_bar; })
        .def_property_readonly("sigma", [](const NoiseSchedule& s) { return s.sigma; });

    m.def(
        "make_schedule",
        [](int T, double beta_start, double beta_end, const std::string& sigma_mode) {
            return make_schedule(T, beta_start, beta_end, sigma_mode_from_string(sigma_mode));
        },
        py::arg("T"), py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02,
        py::arg("sigma_mode") = "beta");

    m.def(
        "q_sample",
        [](const Arr& z, int t, const Arr& eps, const NoiseSchedule& s) {
            return tensor_to_array(q_sample(array_to_tensor(z), t, array_to_tensor(eps), s));
        },
        py::arg("z"), py::arg("t"), py::arg("eps"), py::arg("schedule"));

    m.def(
        "p_sample_step",
        [](const Arr& z_t, int t, const Arr& eps_pred, const NoiseSchedule& s,
           py::object noise) {
            if (noise.is_none())
                return tensor_to_array(
                    p_sample_step(array_to_tensor(z_t), t, array_to_tensor(eps_pred), s));
            const Tensor n = array_to_tensor(noise.cast<Arr>());
            return tensor_to_array(
                p_sample_step(array_to_tensor(z_t), t, array_to_tensor(eps_pred), s, &n));
        },
        py::arg("z_t"), py::arg("t"), py::arg("eps_pred"), py::arg("schedule"),
        py::arg("noise") = py::none());

    // ---- metrics ----
    m.def(
        "ssim", [](const Arr& a, const Arr& b) { return ssim(array_to_image(a), array_to_image(b)); },
        py::arg("a"), py::arg("b"));
    m.def(
        "psnr",
        [](const Arr& a, const Arr& b, double max_val) {
            return psnr(array_to_image(a), array_to_image(b), max_val);
        },
        py::arg("a"), py::arg("b"), py::arg("max_val") = 1.0);
    m.def(
        "sharpness", [](const Arr& img) { return sharpness(array_to_image(img)); }, py::arg("img"));

    // ---- baselines ----
    m.def(
        "laplacian_argmax_fuse",
        [](const Arr& stack, int window) {
            const BaselineResult r = laplacian_argmax_fuse(array_to_stack(stack), window);
            py::array_t<int> idx({r.decision.h, r.decision.w});
            std::copy(r.decision.idx.begin(), r.decision.idx.end(), idx.mutable_data());
            return py::make_tuple(image_to_array(r.fused), idx);
        },
        py::arg("stack"), py::arg("window") = 9);
    m.def(
        "average_fuse",
        [](const Arr& stack) { return image_to_array(average_fuse(array_to_stack(stack))); },
        py::arg("stack"));

    // ---- fusion model ----
    py::class_<FusionModel>(m, "FusionModel")
        .def_static("load", &FusionModel::load, py::arg("path"))
        .def(
            "fuse",
            [](const FusionModel& model, const Arr& stack, const std::string& mode) {
                auto [fused, map] =
                    model.forward(array_to_stack(stack), fuse_mode_from_string(mode));
                return py::make_tuple(image_to_array(fused), tensor_to_array(map.probs));
            },
            py::arg("stack"), py::arg("mode") = "soft",
            "Fuse an LxHxWxC stack; returns (fused HxWxC, focus map LxHxW).");

    // ---- restoration ----
    m.def(
        "restore",
        [](const Arr& fused, const std::string& vae_path, const std::string& diffusion_path,
           const std::string& control_path, int steps, std::uint64_t seed,
           const std::string& sigma_mode) {
            Autoencoder ae = Autoencoder::load(vae_path);
            UNetDenoiser unet = UNetDenoiser::load(diffusion_path);
            ControlBranch branch = ControlBranch::load(control_path);
            const SigmaMode mode = sigma_mode_from_string(sigma_mode);
            RestorationModels models{&ae, &unet, &branch};
            RestorationConfig cfg;
            cfg.steps = steps;
            cfg.sigma_mode = mode;
            cfg.seed = seed;
            return image_to_array(restore(array_to_image(fused), models, unet.schedule(mode), cfg));
        },
        py::arg("fused"), py::arg("vae"), py::arg("diffusion"), py::arg("control"),
        py::arg("steps") = 0, py::arg("seed") = 0, py::arg("sigma_mode") = "beta");

    m.attr("__version__") = "1.0.0";
}
