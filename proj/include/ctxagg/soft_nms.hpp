// Soft-NMS: instead of deleting overlapping boxes, decay their scores.
// Linear mode multiplies by (1 - IoU) when IoU exceeds the threshold;
// Gaussian mode multiplies by exp(-IoU^2 / sigma). Boxes fall out when their
// score drops below the floor.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace ctxagg {

struct ScoredBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double score = 0;
    int64_t index = 0;  // caller-assigned identity, preserved through suppression
};

inline double box_area(double x1, double y1, double x2, double y2) {
    return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
}

inline double box_iou(const ScoredBox& a, const ScoredBox& b) {
    const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
    const double inter = box_area(ix1, iy1, ix2, iy2);
    if (inter <= 0.0) return 0.0;
    const double uni = box_area(a.x1, a.y1, a.x2, a.y2) + box_area(b.x1, b.y1, b.x2, b.y2) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

enum class SoftNmsMode { linear, gaussian };

// Returns kept boxes in selection order (descending decayed score). Ties on
// score resolve to the lowest index for determinism.
inline std::vector<ScoredBox> soft_nms(std::vector<ScoredBox> boxes, double iou_threshold = 0.5,
                                       SoftNmsMode mode = SoftNmsMode::linear, double score_floor = 1e-3,
                                       double sigma = 0.5) {
    std::vector<ScoredBox> kept;
    kept.reserve(boxes.size());
    while (!boxes.empty()) {
        size_t best = 0;
        for (size_t i = 1; i < boxes.size(); ++i) {
            if (boxes[i].score > boxes[best].score ||
                (boxes[i].score == boxes[best].score && boxes[i].index < boxes[best].index))
                best = i;
        }
        ScoredBox top = boxes[best];
        boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(best));
        kept.push_back(top);
        std::vector<ScoredBox> next;
        next.reserve(boxes.size());
        for (ScoredBox& b : boxes) {
            const double iou = box_iou(top, b);
            if (mode == SoftNmsMode::linear) {
                if (iou > iou_threshold) b.score *= (1.0 - iou);
            } else {
                b.score *= std::exp(-(iou * iou) / sigma);
            }
            if (b.score >= score_floor) next.push_back(b);
        }
        boxes = std::move(next);
    }
    return kept;
}

}  // namespace ctxagg
