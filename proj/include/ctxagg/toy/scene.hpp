// Synthetic blob scenes: 1-5 non-overlapping colored shapes on a smooth
// textured background, with exact ground-truth boxes and masks. Category 1
// is an axis-aligned rectangle, category 2 an axis-aligned ellipse.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ctxagg/rng.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

struct Instance {
    int category = 0;                // 1 = rectangle, 2 = ellipse
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // tight box, pixel coordinates
    std::vector<uint8_t> mask;       // full-image h*w, row-major

    double box_w() const { return x2 - x1; }
    double box_h() const { return y2 - y1; }
};

struct Scene {
    int h = 0, w = 0;
    Tensor image;  // {3, h, w}, values in [0, 1]
    std::vector<Instance> instances;
};

constexpr int kSceneClassCount = 2;

namespace detail {

inline bool boxes_intersect(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
                            double by2) {
    return ax1 < bx2 && bx1 < ax2 && ay1 < by2 && by1 < ay2;
}

}  // namespace detail

inline Scene generate_scene(uint64_t seed, int h = 128, int w = 128) {
    Rng rng(mix_seed(seed, 0x5ce9e5));
    Scene scene;
    scene.h = h;
    scene.w = w;

    // smooth background: one low-frequency wave per channel plus fine noise
    std::vector<double> img(static_cast<size_t>(3) * h * w);
    for (int c = 0; c < 3; ++c) {
        const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
        const double phase = rng.uniform(0.0, 6.28318530717958647692);
        const double base = rng.uniform(0.3, 0.5);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = base +
                           0.12 * std::sin(6.28318530717958647692 * (fx * x / w + fy * y / h) + phase) +
                           0.04 * rng.uniform(-1.0, 1.0);
                img[(static_cast<size_t>(c) * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
            }
    }

    const int n_target = static_cast<int>(rng.uniform_int(1, 5));
    for (int k = 0; k < n_target; ++k) {
        // rejection-sample a placement that does not overlap prior instances
        for (int attempt = 0; attempt < 40; ++attempt) {
            const int category = static_cast<int>(rng.uniform_int(1, kSceneClassCount));
            const double rx = rng.uniform(6.0, 22.0);
            const double ry = rng.uniform(6.0, 22.0);
            const double cx = rng.uniform(rx + 1.0, w - rx - 1.0);
            const double cy = rng.uniform(ry + 1.0, h - ry - 1.0);
            double col[3];
            for (double& cv : col) cv = rng.uniform(0.0, 1.0);

            const double bx1 = cx - rx, bx2 = cx + rx, by1 = cy - ry, by2 = cy + ry;
            bool clash = false;
            for (const Instance& inst : scene.instances)
                if (detail::boxes_intersect(bx1 - 2, by1 - 2, bx2 + 2, by2 + 2, inst.x1, inst.y1, inst.x2, inst.y2))
                    clash = true;
            if (clash) continue;

            Instance inst;
            inst.category = category;
            inst.mask.assign(static_cast<size_t>(h) * w, 0);
            int min_x = w, max_x = -1, min_y = h, max_y = -1;
            const int y_lo = std::max(0, static_cast<int>(std::floor(by1)));
            const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(by2)));
            const int x_lo = std::max(0, static_cast<int>(std::floor(bx1)));
            const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(bx2)));
            for (int y = y_lo; y <= y_hi; ++y)
                for (int x = x_lo; x <= x_hi; ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    bool inside;
                    if (category == 1) {
                        inside = px >= bx1 && px < bx2 && py >= by1 && py < by2;
                    } else {
                        const double dx = (px - cx) / rx, dy = (py - cy) / ry;
                        inside = dx * dx + dy * dy <= 1.0;
                    }
                    if (inside) {
                        inst.mask[static_cast<size_t>(y) * w + x] = 1;
                        min_x = std::min(min_x, x);
                        max_x = std::max(max_x, x);
                        min_y = std::min(min_y, y);
                        max_y = std::max(max_y, y);
                    }
                }
            if (max_x < 0) continue;  // degenerate placement
            inst.x1 = min_x;
            inst.y1 = min_y;
            inst.x2 = max_x + 1;
            inst.y2 = max_y + 1;

            for (int y = min_y; y <= max_y; ++y)
                for (int x = min_x; x <= max_x; ++x)
                    if (inst.mask[static_cast<size_t>(y) * w + x])
                        for (int c = 0; c < 3; ++c) img[(static_cast<size_t>(c) * h + y) * w + x] = col[c];
            scene.instances.push_back(std::move(inst));
            break;
        }
    }

    // the generator contract guarantees at least one instance per scene
    if (scene.instances.empty()) {
        Instance inst;
        inst.category = 1;
        inst.mask.assign(static_cast<size_t>(h) * w, 0);
        const int x0 = w / 2 - 8, y0 = h / 2 - 8;
        for (int y = y0; y < y0 + 16; ++y)
            for (int x = x0; x < x0 + 16; ++x) {
                inst.mask[static_cast<size_t>(y) * w + x] = 1;
                for (int c = 0; c < 3; ++c) img[(static_cast<size_t>(c) * h + y) * w + x] = 0.9;
            }
        inst.x1 = x0;
        inst.y1 = y0;
        inst.x2 = x0 + 16;
        inst.y2 = y0 + 16;
        scene.instances.push_back(std::move(inst));
    }

    scene.image = Tensor::from({3, h, w}, std::move(img));
    return scene;
}

// Stacks scene images into one {B, 3, h, w} input batch.
inline Tensor stack_images(const std::vector<Scene>& scenes) {
    if (scenes.empty()) throw std::invalid_argument("stack_images: no scenes");
    const int h = scenes[0].h, w = scenes[0].w;
    std::vector<double> data;
    data.reserve(scenes.size() * 3 * h * w);
    for (const Scene& s : scenes) {
        if (s.h != h || s.w != w) throw std::invalid_argument("stack_images: mixed scene sizes");
        data.insert(data.end(), s.image.values().begin(), s.image.values().end());
    }
    return Tensor::from({static_cast<int64_t>(scenes.size()), 3, h, w}, std::move(data));
}

}  // namespace ctxagg
