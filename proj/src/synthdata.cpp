#include "focalforge/synthdata.hpp"

#include <algorithm>
#include <cmath>

namespace focalforge {

namespace {

struct Color {
    double r, g, b;
};

Color random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

Color mix(const Color& a, const Color& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// 0 = flat, 1 = stripes, 2 = checker.
double pattern_value(int kind, double px, double py, double period, double phase) {
    switch (kind) {
        case 1:
            return std::sin(2.0 * M_PI * (px / period) + phase) > 0.0 ? 1.0 : 0.0;
        case 2: {
            const int cx = static_cast<int>(std::floor(px / period));
            const int cy = static_cast<int>(std::floor(py / period));
            return ((cx + cy) & 1) ? 1.0 : 0.0;
        }
        default:
            return 0.0;
    }
}

}  // namespace

std::pair<Image, DepthMap> make_scene(Rng& rng, const SceneParams& p) {
    Image img(p.h, p.w, 3);
    DepthMap depth(p.h, p.w);

    // Background: color gradient + stripes on a full-range depth ramp.
    const Color bg0 = random_color(rng);
    const Color bg1 = random_color(rng);
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double dx = std::cos(ang), dy = std::sin(ang);
    const double dang = rng.uniform(0.0, 2.0 * M_PI);
    const double ddx = std::cos(dang), ddy = std::sin(dang);
    const int bg_kind = rng.uniform_int(1, 2);
    const double bg_period = rng.uniform(5.0, 9.0);
    const double bg_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double bg_amp = rng.uniform(0.15, 0.35);
    const bool flipped = rng.uniform() < 0.5;
    const double diag = std::sqrt(static_cast<double>(p.h) * p.h + static_cast<double>(p.w) * p.w);

    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            const double t = std::clamp(0.5 + (x * dx + y * dy) / diag, 0.0, 1.0);
            Color c = mix(bg0, bg1, t);
            const double pat = pattern_value(bg_kind, x, y, bg_period, bg_phase);
            c.r += bg_amp * (pat - 0.5);
            c.g += bg_amp * (pat - 0.5);
            c.b += bg_amp * (pat - 0.5);
            img.at(y, x, 0) = c.r;
            img.at(y, x, 1) = c.g;
            img.at(y, x, 2) = c.b;
            double d = std::clamp(0.5 + (x * ddx + y * ddy) / diag * 1.6, 0.0, 1.0);
            depth.at(y, x) = flipped ? 1.0 - d : d;
        }

    // Foreground shapes, far to near.
    const int n_shapes = rng.uniform_int(p.min_shapes, p.max_shapes);
    std::vector<double> shape_depths(static_cast<size_t>(n_shapes));
    for (auto& d : shape_depths) d = rng.uniform();
    std::sort(shape_depths.rbegin(), shape_depths.rend());

    for (double sd : shape_depths) {
        const bool circle = rng.uniform() < 0.5;
        const double cx = rng.uniform(0.1, 0.9) * p.w;
        const double cy = rng.uniform(0.1, 0.9) * p.h;
        const double rx = rng.uniform(0.08, 0.25) * p.w;
        const double ry = circle ? rx : rng.uniform(0.08, 0.25) * p.h;
        const Color fill = random_color(rng);
        const Color alt = random_color(rng);
        const int kind = rng.uniform_int(0, 2);
        const double period = rng.uniform(4.0, 8.0);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double amp = rng.uniform(0.3, 0.7);

        const int y0 = std::max(0, static_cast<int>(cy - ry));
        const int y1 = std::min(p.h - 1, static_cast<int>(cy + ry));
        const int x0 = std::max(0, static_cast<int>(cx - rx));
        const int x1 = std::min(p.w - 1, static_cast<int>(cx + rx));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (circle) {
                    const double u = (x - cx) / rx, v = (y - cy) / ry;
                    if (u * u + v * v > 1.0) continue;
                }
                const double pat = pattern_value(kind, x, y, period, phase);
                const Color c = mix(fill, alt, amp * pat);
                img.at(y, x, 0) = c.r;
                img.at(y, x, 1) = c.g;
                img.at(y, x, 2) = c.b;
                depth.at(y, x) = sd;
            }
    }

    clamp01(img);
    for (auto& d : depth.v) d = std::clamp(d, 0.0, 1.0);
    return {std::move(img), std::move(depth)};
}

std::vector<std::pair<Image, DepthMap>> make_scene_dataset(int count, Rng& rng,
                                                           const SceneParams& params) {
    std::vector<std::pair<Image, DepthMap>> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(make_scene(rng, params));
    return out;
}

}  // namespace focalforge
