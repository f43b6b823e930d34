#pragma once

// Independent reference implementations used to cross-check the streaming
// production code. Deliberately naive: correctness over speed, and written
// from the definitions rather than by mirroring the production algorithms.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <portmon/detection.hpp>

namespace testsup {

// Direct-form FIR: y[n] = sum_k h[k] x[n-k] with x zero before the start,
// accumulated in ascending k (the same summation order the streaming filter
// commits to, which makes the comparison exact rather than approximate).
inline std::vector<double> convolve_full(const std::vector<double>& h,
                                         const std::vector<double>& x) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      if (k > n) break;
      acc += h[k] * x[n - k];
    }
    y[n] = acc;
  }
  return y;
}

// Keep the factor-th, 2*factor-th, ... filtered samples (indices factor-1,
// 2*factor-1, ...), matching a decimator that counts inputs from one.
inline std::vector<double> decimate_keep_last(const std::vector<double>& y, int factor) {
  std::vector<double> out;
  for (std::size_t n = static_cast<std::size_t>(factor) - 1; n < y.size();
       n += static_cast<std::size_t>(factor)) {
    out.push_back(y[n]);
  }
  return out;
}

// IoU by counting cells on a unit grid; exact for integer-aligned boxes.
inline double raster_iou(const portmon::detection::BBox& a, const portmon::detection::BBox& b) {
  const auto lo_x = static_cast<long>(std::min(a.x_min, b.x_min));
  const auto lo_y = static_cast<long>(std::min(a.y_min, b.y_min));
  const auto hi_x = static_cast<long>(std::max(a.x_max, b.x_max));
  const auto hi_y = static_cast<long>(std::max(a.y_max, b.y_max));
  long inter = 0;
  long uni = 0;
  for (long x = lo_x; x < hi_x; ++x) {
    for (long y = lo_y; y < hi_y; ++y) {
      const double cx = x + 0.5;
      const double cy = y + 0.5;
      const bool in_a = cx > a.x_min && cx < a.x_max && cy > a.y_min && cy < a.y_max;
      const bool in_b = cx > b.x_min && cx < b.x_max && cy > b.y_min && cy < b.y_max;
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// All-points-interpolated AP computed straight from the definition. Scores
// must be distinct so that ordering is unambiguous; matching is greedy per
// scene in score order (best unmatched ground-truth box at IoU >= thresh).
inline double brute_force_ap(const std::vector<portmon::detection::SceneResult>& scenes,
                             double iou_threshold) {
  struct Det {
    double score;
    std::size_t scene;
    std::size_t idx;
  };
  std::vector<Det> dets;
  std::size_t gt_total = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    gt_total += scenes[s].ground_truth.size();
    for (std::size_t i = 0; i < scenes[s].detections.size(); ++i) {
      dets.push_back({scenes[s].detections[i].score, s, i});
    }
  }
  if (gt_total == 0) throw std::invalid_argument("brute_force_ap: no ground truth");
  std::sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.idx < b.idx;
  });

  std::vector<std::vector<bool>> taken(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    taken[s].assign(scenes[s].ground_truth.size(), false);
  }
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < dets.size(); ++rank) {
    const Det& d = dets[rank];
    const auto& gts = scenes[d.scene].ground_truth;
    double best = 0.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[d.scene][j]) continue;
      const double v =
          portmon::detection::iou(scenes[d.scene].detections[d.idx].bbox, gts[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= iou_threshold) {
      taken[d.scene][best_j] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_total));
  }

  // Integrate p(r) dr with p at recall r taken as max precision at any
  // recall >= r; evaluated pointwise, no envelope precomputation.
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] <= prev_recall) continue;
    double p = 0.0;
    for (std::size_t j = i; j < precision.size(); ++j) p = std::max(p, precision[j]);
    ap += (recall[i] - prev_recall) * p;
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace testsup
