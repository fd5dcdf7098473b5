#include "focalforge/baselines.hpp"

#include <stdexcept>
#include <vector>

namespace focalforge {

namespace {

// Box sum over a (2r+1)^2 neighbourhood truncated at the borders.
Grid box_sum(const Grid& g, int radius) {
    Grid rows(g.h, g.w);
    for (int y = 0; y < g.h; ++y) {
        double acc = 0.0;
        for (int x = 0; x <= std::min(radius, g.w - 1); ++x) acc += g.at(y, x);
        rows.at(y, 0) = acc;
        for (int x = 1; x < g.w; ++x) {
            if (x + radius < g.w) acc += g.at(y, x + radius);
            if (x - radius - 1 >= 0) acc -= g.at(y, x - radius - 1);
            rows.at(y, x) = acc;
        }
    }
    Grid out(g.h, g.w);
    for (int x = 0; x < g.w; ++x) {
        double acc = 0.0;
        for (int y = 0; y <= std::min(radius, g.h - 1); ++y) acc += rows.at(y, x);
        out.at(0, x) = acc;
        for (int y = 1; y < g.h; ++y) {
            if (y + radius < g.h) acc += rows.at(y + radius, x);
            if (y - radius - 1 >= 0) acc -= rows.at(y - radius - 1, x);
            out.at(y, x) = acc;
        }
    }
    return out;
}

}  // namespace

BaselineResult laplacian_argmax_fuse(const FocalStack& stack, int window) {
    const int layers = stack.layer_count();
    if (layers < 1) throw std::invalid_argument("laplacian_argmax_fuse: empty stack");
    const int radius = window / 2;
    const int h = stack.h(), w = stack.w(), c = stack.channels();

    std::vector<Grid> activity;
    activity.reserve(static_cast<size_t>(layers));
    for (const auto& layer : stack.layers) {
        Grid resp = laplacian(luminance(layer));
        for (auto& v : resp.v) v *= v;
        activity.push_back(box_sum(resp, radius));
    }

    BaselineResult result;
    result.fused = Image(h, w, c);
    result.decision.layers = layers;
    result.decision.h = h;
    result.decision.w = w;
    result.decision.idx.resize(static_cast<size_t>(h) * w, 0);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            double best_v = activity[0].at(y, x);
            for (int l = 1; l < layers; ++l) {
                const double v = activity[static_cast<size_t>(l)].at(y, x);
                if (v > best_v) {
                    best_v = v;
                    best = l;
                }
            }
            result.decision.at(y, x) = best;
            for (int ch = 0; ch < c; ++ch)
                result.fused.at(y, x, ch) = stack.layers[static_cast<size_t>(best)].at(y, x, ch);
        }
    return result;
}

Image average_fuse(const FocalStack& stack) {
    const int layers = stack.layer_count();
    if (layers < 1) throw std::invalid_argument("average_fuse: empty stack");
    Image out(stack.h(), stack.w(), stack.channels());
    for (const auto& layer : stack.layers)
        for (size_t i = 0; i < out.px.size(); ++i) out.px[i] += layer.px[i];
    for (auto& v : out.px) v /= layers;
    return out;
}

}  // namespace focalforge
