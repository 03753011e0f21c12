// Toy training and evaluation. Training proposals are ground-truth boxes
// jittered by uniform noise; inference scores a coarse sliding grid with the
// classification head, refines boxes with the regression head, applies
// Soft-NMS, and runs the mask head on the survivors.
#pragma once

#include <cstdlib>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "ctxagg/losses.hpp"
#include "ctxagg/optim.hpp"
#include "ctxagg/soft_nms.hpp"
#include "ctxagg/toy/detector.hpp"
#include "ctxagg/toy/scene.hpp"

namespace ctxagg {

inline double iou_xyxy(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
                       double by2) {
    ScoredBox a{ax1, ay1, ax2, ay2, 0.0, 0};
    ScoredBox b{bx1, by1, bx2, by2, 0.0, 0};
    return box_iou(a, b);
}

// ---- box parameterization ----------------------------------------------------

struct BoxDelta {
    double dx, dy, dw, dh;
};

inline BoxDelta encode_box(const RoI& proposal, double gx1, double gy1, double gx2, double gy2) {
    const double pw = proposal.x2 - proposal.x1, ph = proposal.y2 - proposal.y1;
    const double px = 0.5 * (proposal.x1 + proposal.x2), py = 0.5 * (proposal.y1 + proposal.y2);
    const double gw = gx2 - gx1, gh = gy2 - gy1;
    const double gx = 0.5 * (gx1 + gx2), gy = 0.5 * (gy1 + gy2);
    return {(gx - px) / pw, (gy - py) / ph, std::log(gw / pw), std::log(gh / ph)};
}

inline RoI decode_box(const RoI& proposal, const BoxDelta& d, double img_w, double img_h) {
    const double pw = proposal.x2 - proposal.x1, ph = proposal.y2 - proposal.y1;
    const double px = 0.5 * (proposal.x1 + proposal.x2), py = 0.5 * (proposal.y1 + proposal.y2);
    const double cx = px + d.dx * pw, cy = py + d.dy * ph;
    const double w = pw * std::exp(std::clamp(d.dw, -4.0, 4.0));
    const double h = ph * std::exp(std::clamp(d.dh, -4.0, 4.0));
    RoI out{proposal.batch_index, cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    return clip_roi(out, img_w, img_h);
}

// ---- proposals and targets ----------------------------------------------------

// One proposal per instance: each corner shifted by uniform(-j, j) * box size.
inline std::vector<RoI> jittered_proposals(const Scene& scene, int64_t batch_index, double jitter, Rng& rng) {
    std::vector<RoI> out;
    for (const Instance& inst : scene.instances) {
        RoI r;
        r.batch_index = batch_index;
        r.x1 = inst.x1 + rng.uniform(-jitter, jitter) * inst.box_w();
        r.x2 = inst.x2 + rng.uniform(-jitter, jitter) * inst.box_w();
        r.y1 = inst.y1 + rng.uniform(-jitter, jitter) * inst.box_h();
        r.y2 = inst.y2 + rng.uniform(-jitter, jitter) * inst.box_h();
        r = clip_roi(r, scene.w, scene.h);
        if (r.x2 - r.x1 < 2.0) r.x2 = std::min(static_cast<double>(scene.w), r.x1 + 2.0);
        if (r.y2 - r.y1 < 2.0) r.y2 = std::min(static_cast<double>(scene.h), r.y1 + 2.0);
        out.push_back(r);
    }
    return out;
}

struct ProposalTargets {
    std::vector<int64_t> labels;          // 0 = background
    std::vector<int64_t> positive_rows;   // indices into the proposal list
    std::vector<double> box_deltas;       // positives * 4
    std::vector<double> mask_bins;        // positives * s * s, values in {0, 1}
};

// nearest-pixel sample of the instance mask at the center of each s x s bin
inline void rasterize_mask_target(const Instance& inst, const RoI& proposal, int s, int img_h, int img_w,
                                  std::vector<double>& out) {
    const double bw = proposal.x2 - proposal.x1, bh = proposal.y2 - proposal.y1;
    for (int by = 0; by < s; ++by)
        for (int bx = 0; bx < s; ++bx) {
            const double cy = proposal.y1 + (by + 0.5) * bh / s;
            const double cx = proposal.x1 + (bx + 0.5) * bw / s;
            const int py = static_cast<int>(std::floor(cy));
            const int px = static_cast<int>(std::floor(cx));
            double v = 0.0;
            if (py >= 0 && py < img_h && px >= 0 && px < img_w)
                v = inst.mask[static_cast<size_t>(py) * img_w + px] ? 1.0 : 0.0;
            out.push_back(v);
        }
}

// Proposals are labeled by IoU >= 0.5 with their best-overlapping instance.
inline ProposalTargets match_proposals(const std::vector<Scene>& scenes, const std::vector<RoI>& proposals,
                                       int mask_size) {
    ProposalTargets t;
    for (size_t i = 0; i < proposals.size(); ++i) {
        const RoI& p = proposals[i];
        const Scene& scene = scenes.at(static_cast<size_t>(p.batch_index));
        double best_iou = 0.0;
        const Instance* best = nullptr;
        for (const Instance& inst : scene.instances) {
            const double iou = iou_xyxy(p.x1, p.y1, p.x2, p.y2, inst.x1, inst.y1, inst.x2, inst.y2);
            if (iou > best_iou) {
                best_iou = iou;
                best = &inst;
            }
        }
        if (best && best_iou >= 0.5) {
            t.labels.push_back(best->category);
            t.positive_rows.push_back(static_cast<int64_t>(i));
            const BoxDelta d = encode_box(p, best->x1, best->y1, best->x2, best->y2);
            t.box_deltas.insert(t.box_deltas.end(), {d.dx, d.dy, d.dw, d.dh});
            rasterize_mask_target(*best, p, mask_size, scene.h, scene.w, t.mask_bins);
        } else {
            t.labels.push_back(0);
        }
    }
    return t;
}

// ---- losses --------------------------------------------------------------------

struct LossBreakdown {
    double cls = 0, box = 0, mask = 0, total = 0;
};

// cls: softmax cross-entropy over all proposals; box: smooth-L1 on positive
// rows; mask: per-pixel BCE on positive rows. No positives -> box/mask are 0.
inline std::pair<Tensor, LossBreakdown> compute_losses(const ToyDetector::Outputs& out, const ProposalTargets& t) {
    Tensor cls_loss = cross_entropy(out.cls_logits, t.labels);
    Tensor total = cls_loss;
    LossBreakdown lb;
    lb.cls = cls_loss.item();
    if (!t.positive_rows.empty()) {
        const int64_t np = static_cast<int64_t>(t.positive_rows.size());
        Tensor box_pred = take_rows(out.box_deltas, t.positive_rows);
        Tensor box_tgt = Tensor::from({np, 4}, t.box_deltas);
        Tensor box_loss = smooth_l1(box_pred, box_tgt);
        const int64_t s = out.mask_logits.dim(1);
        Tensor mask_pred = take_rows(out.mask_logits, t.positive_rows);
        Tensor mask_tgt = Tensor::from({np, s, s}, t.mask_bins);
        Tensor mask_loss = bce_with_logits(mask_pred, mask_tgt);
        lb.box = box_loss.item();
        lb.mask = mask_loss.item();
        total = add(total, add(box_loss, mask_loss));
    }
    lb.total = lb.cls + lb.box + lb.mask;
    return {total, lb};
}

// ---- training --------------------------------------------------------------------

struct TrainResult {
    std::vector<LossBreakdown> log;
};

inline void write_metrics_header(std::ostream& os) { os << "iteration,cls_loss,box_loss,mask_loss,total\n"; }

inline void write_metrics_row(std::ostream& os, int iteration, const LossBreakdown& lb) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", iteration, lb.cls, lb.box, lb.mask, lb.total);
    os << buf;
}

// Deterministic given (config seed, model init): scene k of iteration i uses
// seed mix(seed, i * batch + k). Aborts on a non-finite loss, naming the
// iteration.
inline TrainResult train(ToyDetector& model, const RunConfig& cfg, std::ostream* metrics_csv = nullptr) {
    ParamMap params = model.params();
    SgdOptimizer opt(params, cfg.toy.lr, cfg.toy.momentum, cfg.toy.weight_decay);
    Rng jitter_rng(mix_seed(cfg.seed, 0x71772e));
    TrainResult result;
    if (metrics_csv) write_metrics_header(*metrics_csv);
    for (int it = 0; it < cfg.toy.iterations; ++it) {
        std::vector<Scene> scenes;
        std::vector<RoI> proposals;
        for (int b = 0; b < cfg.toy.batch; ++b) {
            scenes.push_back(generate_scene(mix_seed(cfg.seed, static_cast<uint64_t>(it) * cfg.toy.batch + b),
                                            cfg.toy.image_size, cfg.toy.image_size));
            auto props = jittered_proposals(scenes.back(), b, cfg.toy.jitter, jitter_rng);
            proposals.insert(proposals.end(), props.begin(), props.end());
        }
        ProposalTargets targets = match_proposals(scenes, proposals, cfg.hroie.mask_size);
        ToyDetector::Outputs out = model.forward(stack_images(scenes), proposals);
        auto [total, lb] = compute_losses(out, targets);
        if (!std::isfinite(lb.total))
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));
        total.backward();
        opt.step();
        result.log.push_back(lb);
        if (metrics_csv) write_metrics_row(*metrics_csv, it, lb);
    }
    return result;
}

// ---- inference and evaluation ------------------------------------------------------

struct Prediction {
    int category = 0;
    double score = 0;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    std::vector<double> mask_logits;  // mask_size^2, row-major; empty means "no mask"
    int mask_size = 0;
};

enum class ProposalMode { grid, gt_jitter };

// Multi-scale sliding grid over the image; stride is half the window.
inline std::vector<RoI> grid_proposals(int img_h, int img_w, int64_t batch_index = 0) {
    std::vector<RoI> out;
    for (int s : {14, 20, 28, 40, 56, 80, 112}) {
        if (s > img_h || s > img_w) continue;
        const int stride = std::max(4, s / 2);
        for (int y = 0; y + s <= img_h; y += stride)
            for (int x = 0; x + s <= img_w; x += stride)
                out.push_back(RoI{batch_index, static_cast<double>(x), static_cast<double>(y),
                                  static_cast<double>(x + s), static_cast<double>(y + s)});
    }
    return out;
}

// Forward one scene: score proposals, refine boxes, Soft-NMS, then run the
// mask head on the kept refined boxes (top 20 at most).
inline std::vector<Prediction> predict_scene(const ToyDetector& model, const Scene& scene,
                                             const std::vector<RoI>& proposals) {
    NoGradGuard ng;
    const RunConfig& cfg = model.config();
    const int k = cfg.toy.num_classes;
    std::vector<Prediction> preds;
    if (proposals.empty()) return preds;
    FeaturePyramid pyr = model.features(reshape(scene.image, {1, 3, scene.h, scene.w}));
    auto [logits, deltas] = model.detect(pyr, proposals);
    Tensor probs = softmax(logits, 1);

    struct Cand {
        RoI box;
        int category;
        double score;
    };
    std::vector<Cand> cands;
    std::vector<ScoredBox> nms_in;
    for (size_t i = 0; i < proposals.size(); ++i) {
        double best_p = 0.0;
        int best_c = 0;
        for (int c = 1; c <= k; ++c) {
            const double p = probs.data()[i * (k + 1) + c];
            if (p > best_p) {
                best_p = p;
                best_c = c;
            }
        }
        if (best_p < cfg.toy.score_threshold) continue;
        const double* d = deltas.data() + i * 4;
        RoI refined = decode_box(proposals[i], {d[0], d[1], d[2], d[3]}, scene.w, scene.h);
        if (refined.x2 - refined.x1 < 1.0 || refined.y2 - refined.y1 < 1.0) continue;
        nms_in.push_back(ScoredBox{refined.x1, refined.y1, refined.x2, refined.y2, best_p,
                                   static_cast<int64_t>(cands.size())});
        cands.push_back(Cand{refined, best_c, best_p});
    }
    if (cands.empty()) return preds;
    std::vector<ScoredBox> kept =
        soft_nms(nms_in, cfg.toy.nms_iou, cfg.toy.nms_mode_enum(), cfg.toy.nms_score_floor, cfg.toy.nms_sigma);
    if (kept.size() > 20) kept.resize(20);

    std::vector<RoI> mask_rois;
    for (const ScoredBox& b : kept) mask_rois.push_back(cands[static_cast<size_t>(b.index)].box);
    Tensor mask_logits = model.masks(pyr, mask_rois);
    const int ms = static_cast<int>(mask_logits.dim(1));
    for (size_t j = 0; j < kept.size(); ++j) {
        const Cand& c = cands[static_cast<size_t>(kept[j].index)];
        Prediction p;
        p.category = c.category;
        p.score = kept[j].score;
        p.x1 = c.box.x1;
        p.y1 = c.box.y1;
        p.x2 = c.box.x2;
        p.y2 = c.box.y2;
        p.mask_size = ms;
        const double* ml = mask_logits.data() + j * ms * ms;
        p.mask_logits.assign(ml, ml + ms * ms);
        preds.push_back(std::move(p));
    }
    return preds;
}

// Paste a prediction's mask into the full image grid (logit > 0 inside the
// box, nearest bin).
inline std::vector<uint8_t> paste_mask(const Prediction& p, int img_h, int img_w) {
    std::vector<uint8_t> out(static_cast<size_t>(img_h) * img_w, 0);
    if (p.mask_logits.empty()) return out;
    const int s = p.mask_size;
    const int y_lo = std::max(0, static_cast<int>(std::floor(p.y1)));
    const int y_hi = std::min(img_h - 1, static_cast<int>(std::ceil(p.y2)) - 1);
    const int x_lo = std::max(0, static_cast<int>(std::floor(p.x1)));
    const int x_hi = std::min(img_w - 1, static_cast<int>(std::ceil(p.x2)) - 1);
    const double bw = p.x2 - p.x1, bh = p.y2 - p.y1;
    if (bw <= 0 || bh <= 0) return out;
    for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x) {
            const double fy = ((y + 0.5) - p.y1) / bh * s;
            const double fx = ((x + 0.5) - p.x1) / bw * s;
            const int by = std::clamp(static_cast<int>(std::floor(fy)), 0, s - 1);
            const int bx = std::clamp(static_cast<int>(std::floor(fx)), 0, s - 1);
            if ((y + 0.5) >= p.y1 && (y + 0.5) < p.y2 && (x + 0.5) >= p.x1 && (x + 0.5) < p.x2 &&
                p.mask_logits[static_cast<size_t>(by) * s + bx] > 0.0)
                out[static_cast<size_t>(y) * img_w + x] = 1;
        }
    return out;
}

struct SceneScore {
    int matched = 0;
    int total_gt = 0;
    double mask_iou_sum = 0.0;  // over matched pairs
};

// Greedy matching by descending score; a prediction matches the unmatched
// instance of the same category with the highest box IoU (>= 0.5).
inline SceneScore score_predictions(const Scene& scene, std::vector<Prediction> preds) {
    SceneScore s;
    s.total_gt = static_cast<int>(scene.instances.size());
    std::sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) { return a.score > b.score; });
    std::vector<bool> taken(scene.instances.size(), false);
    for (const Prediction& p : preds) {
        int best = -1;
        double best_iou = 0.5;
        for (size_t g = 0; g < scene.instances.size(); ++g) {
            if (taken[g] || scene.instances[g].category != p.category) continue;
            const Instance& inst = scene.instances[g];
            const double iou = iou_xyxy(p.x1, p.y1, p.x2, p.y2, inst.x1, inst.y1, inst.x2, inst.y2);
            if (iou >= best_iou) {
                best_iou = iou;
                best = static_cast<int>(g);
            }
        }
        if (best < 0) continue;
        taken[static_cast<size_t>(best)] = true;
        ++s.matched;
        const std::vector<uint8_t> pm = paste_mask(p, scene.h, scene.w);
        const std::vector<uint8_t>& gm = scene.instances[static_cast<size_t>(best)].mask;
        int64_t inter = 0, uni = 0;
        for (size_t i = 0; i < pm.size(); ++i) {
            const bool a = pm[i] != 0, b = gm[i] != 0;
            inter += a && b;
            uni += a || b;
        }
        s.mask_iou_sum += uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    }
    return s;
}

struct EvalResult {
    double recall = 0.0;         // matched / total ground truth, IoU 0.5
    double mean_mask_iou = 0.0;  // over matched pairs; 0 when nothing matched
    int matched = 0;
    int total_gt = 0;
};

inline int env_thread_cap() {
    const char* v = std::getenv("CTXAGG_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return n >= 1 ? n : 1;
}

// Held-out scene seeds are a fixed range independent of the training seed.
constexpr uint64_t kEvalSeedBase = 1000000007ULL;

inline EvalResult evaluate(const ToyDetector& model, int n_scenes, ProposalMode mode = ProposalMode::grid,
                           double jitter = 0.0) {
    std::vector<SceneScore> scores(static_cast<size_t>(n_scenes));
    const int threads = std::min(env_thread_cap(), std::max(1, n_scenes));
    auto run_range = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            Scene scene =
                generate_scene(kEvalSeedBase + static_cast<uint64_t>(i), model.config().toy.image_size,
                               model.config().toy.image_size);
            std::vector<RoI> proposals;
            if (mode == ProposalMode::grid) {
                proposals = grid_proposals(scene.h, scene.w);
            } else {
                Rng rng(mix_seed(kEvalSeedBase + static_cast<uint64_t>(i), 0x9e77));
                proposals = jittered_proposals(scene, 0, jitter, rng);
            }
            scores[static_cast<size_t>(i)] = score_predictions(scene, predict_scene(model, scene, proposals));
        }
    };
    if (threads <= 1) {
        run_range(0, n_scenes);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n_scenes + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const int b = t * chunk, e = std::min(n_scenes, b + chunk);
            if (b < e) pool.emplace_back(run_range, b, e);
        }
        for (auto& th : pool) th.join();
    }
    EvalResult r;
    double iou_sum = 0.0;
    for (const SceneScore& s : scores) {
        r.matched += s.matched;
        r.total_gt += s.total_gt;
        iou_sum += s.mask_iou_sum;
    }
    r.recall = r.total_gt > 0 ? static_cast<double>(r.matched) / r.total_gt : 0.0;
    r.mean_mask_iou = r.matched > 0 ? iou_sum / r.matched : 0.0;
    return r;
}

}  // namespace ctxagg
