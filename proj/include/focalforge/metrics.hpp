#pragma once

#include <string>
#include <vector>

#include "focalforge/image.hpp"

namespace focalforge {

/// 10*log10(max_val^2 / MSE), capped at 100 dB when MSE == 0.
double psnr(const Image& a, const Image& b, double max_val = 1.0);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double max_val = 1.0;
};

/// Single-scale SSIM with a Gaussian window over the luminance channel,
/// averaged over valid (fully interior) window positions.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Variance of the 3x3 Laplacian response of the luminance channel.
double sharpness(const Image& img);

/// Same statistic restricted to the pixels where mask is true.
double masked_sharpness(const Image& img, const std::vector<bool>& mask);

struct MetricCase {
    std::string id;
    bool ok = false;
    std::string error;
    double ssim = 0.0;
    double psnr = 0.0;
    double sharpness = 0.0;
};

struct MetricReport {
    std::vector<MetricCase> cases;
    double mean_ssim = 0.0;
    double mean_psnr = 0.0;
    double mean_sharpness = 0.0;
    int evaluated = 0;
};

/// Pairs PNG files by name between the two directories. A missing or broken
/// counterpart yields an error entry; the run continues.
MetricReport evaluate(const std::string& pred_dir, const std::string& gt_dir);

/// Deterministic CSV: one row per case sorted by id, then a mean row.
void write_report_csv(const std::string& path, const MetricReport& report);
MetricReport read_report_csv(const std::string& path);

}  // namespace focalforge
