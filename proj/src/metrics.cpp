#include "focalforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "focalforge/io.hpp"

namespace fs = std::filesystem;

namespace focalforge {

double psnr(const Image& a, const Image& b, double max_val) {
    if (!a.same_dims(b)) throw std::invalid_argument("psnr: shape mismatch");
    if (max_val <= 0.0) throw std::invalid_argument("psnr: max_val must be > 0");
    double mse = 0.0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        const double d = a.px[i] - b.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.px.size());
    if (mse == 0.0) return 100.0;
    return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

std::vector<double> gaussian_window(int n, double sigma) {
    std::vector<double> w(static_cast<size_t>(n));
    const double c = (n - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        w[static_cast<size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        sum += w[static_cast<size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable weighted filter, valid positions only: out is (h-n+1) x (w-n+1).
Grid valid_filter(const Grid& g, const std::vector<double>& win) {
    const int n = static_cast<int>(win.size());
    const int oh = g.h - n + 1, ow = g.w - n + 1;
    Grid tmp(g.h, ow);
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += win[static_cast<size_t>(i)] * g.at(y, x + i);
            tmp.at(y, x) = acc;
        }
    Grid out(oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += win[static_cast<size_t>(i)] * tmp.at(y + i, x);
            out.at(y, x) = acc;
        }
    return out;
}

Grid hadamard(const Grid& a, const Grid& b) {
    Grid out(a.h, a.w);
    for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& p) {
    if (!a.same_dims(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.h < p.window || a.w < p.window)
        throw std::invalid_argument("ssim: image smaller than window");

    const Grid la = luminance(a);
    const Grid lb = luminance(b);
    const auto win = gaussian_window(p.window, p.sigma);

    const Grid mu_a = valid_filter(la, win);
    const Grid mu_b = valid_filter(lb, win);
    const Grid s_aa = valid_filter(hadamard(la, la), win);
    const Grid s_bb = valid_filter(hadamard(lb, lb), win);
    const Grid s_ab = valid_filter(hadamard(la, lb), win);

    const double c1 = (p.k1 * p.max_val) * (p.k1 * p.max_val);
    const double c2 = (p.k2 * p.max_val) * (p.k2 * p.max_val);

    double acc = 0.0;
    for (size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double va = s_aa.v[i] - ma * ma;
        const double vb = s_bb.v[i] - mb * mb;
        const double cov = s_ab.v[i] - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.v.size());
}

double sharpness(const Image& img) {
    const Grid resp = laplacian(luminance(img));
    double mean = 0.0;
    for (double v : resp.v) mean += v;
    mean /= static_cast<double>(resp.v.size());
    double var = 0.0;
    for (double v : resp.v) var += (v - mean) * (v - mean);
    return var / static_cast<double>(resp.v.size());
}

double masked_sharpness(const Image& img, const std::vector<bool>& mask) {
    const Grid resp = laplacian(luminance(img));
    if (mask.size() != resp.v.size())
        throw std::invalid_argument("masked_sharpness: mask size mismatch");
    double mean = 0.0;
    std::int64_t n = 0;
    for (size_t i = 0; i < resp.v.size(); ++i) {
        if (!mask[i]) continue;
        mean += resp.v[i];
        ++n;
    }
    if (n == 0) return 0.0;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < resp.v.size(); ++i)
        if (mask[i]) var += (resp.v[i] - mean) * (resp.v[i] - mean);
    return var / static_cast<double>(n);
}

MetricReport evaluate(const std::string& pred_dir, const std::string& gt_dir) {
    if (!fs::is_directory(pred_dir)) throw std::runtime_error("pred dir not found: " + pred_dir);
    if (!fs::is_directory(gt_dir)) throw std::runtime_error("gt dir not found: " + gt_dir);

    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.path().extension() == ".png") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());

    MetricReport report;
    double s_ssim = 0, s_psnr = 0, s_sharp = 0;
    for (const auto& name : names) {
        MetricCase mc;
        mc.id = name;
        const fs::path gt = fs::path(gt_dir) / name;
        if (!fs::exists(gt)) {
            mc.error = "missing ground-truth counterpart";
            report.cases.push_back(std::move(mc));
            continue;
        }
        try {
            const Image p = read_png((fs::path(pred_dir) / name).string());
            const Image g = read_png(gt.string());
            mc.ssim = ssim(p, g);
            mc.psnr = psnr(p, g);
            mc.sharpness = sharpness(p);
            mc.ok = true;
            s_ssim += mc.ssim;
            s_psnr += mc.psnr;
            s_sharp += mc.sharpness;
            ++report.evaluated;
        } catch (const std::exception& ex) {
            mc.ok = false;
            mc.error = ex.what();
        }
        report.cases.push_back(std::move(mc));
    }
    if (report.evaluated > 0) {
        report.mean_ssim = s_ssim / report.evaluated;
        report.mean_psnr = s_psnr / report.evaluated;
        report.mean_sharpness = s_sharp / report.evaluated;
    }
    return report;
}

void write_report_csv(const std::string& path, const MetricReport& report) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write report: " + path);
    f << "case,status,ssim,psnr,sharpness\n";
    char buf[160];
    for (const auto& c : report.cases) {
        if (c.ok) {
            std::snprintf(buf, sizeof(buf), "%s,ok,%.6f,%.4f,%.8f\n", c.id.c_str(), c.ssim, c.psnr,
                          c.sharpness);
            f << buf;
        } else {
            f << c.id << ",error:" << c.error << ",,,\n";
        }
    }
    std::snprintf(buf, sizeof(buf), "mean,over %d cases,%.6f,%.4f,%.8f\n", report.evaluated,
                  report.mean_ssim, report.mean_psnr, report.mean_sharpness);
    f << buf;
}

MetricReport read_report_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read report: " + path);
    MetricReport report;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string id, status, s1, s2, s3;
        std::getline(ss, id, ',');
        std::getline(ss, status, ',');
        std::getline(ss, s1, ',');
        std::getline(ss, s2, ',');
        std::getline(ss, s3, ',');
        if (id == "mean") {
            if (!s1.empty()) report.mean_ssim = std::stod(s1);
            if (!s2.empty()) report.mean_psnr = std::stod(s2);
            if (!s3.empty()) report.mean_sharpness = std::stod(s3);
            continue;
        }
        MetricCase mc;
        mc.id = id;
        mc.ok = (status == "ok");
        if (!mc.ok) mc.error = status;
        if (mc.ok) {
            mc.ssim = std::stod(s1);
            mc.psnr = std::stod(s2);
            mc.sharpness = std::stod(s3);
            ++report.evaluated;
        }
        report.cases.push_back(std::move(mc));
    }
    return report;
}

}  // namespace focalforge
