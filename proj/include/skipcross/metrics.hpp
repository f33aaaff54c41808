#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "skipcross/errors.hpp"

namespace skipcross {

// Road = positive class throughout.
struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
};

inline ConfusionCounts confusion(const std::vector<uint8_t>& pred,
                                 const std::vector<uint8_t>& gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("confusion: prediction and ground truth sizes differ (" +
                     std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()) + ")");
  }
  ConfusionCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    const uint8_t p = pred[i], g = gt[i];
    if (p > 1 || g > 1) {
      throw DataError("confusion: masks must be binary (0/1)");
    }
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double precision(const ConfusionCounts& c) {
  const int64_t d = c.tp + c.fp;
  return d == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

inline double recall(const ConfusionCounts& c) {
  const int64_t d = c.tp + c.fn;
  return d == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

inline double fbeta(const ConfusionCounts& c, double beta) {
  if (beta <= 0) throw UsageError("fbeta: beta must be positive");
  const double pre = precision(c), rec = recall(c);
  if (pre + rec == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * pre * rec / (b2 * pre + rec);
}

inline double accuracy(const ConfusionCounts& c) {
  const int64_t t = c.total();
  return t == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(t);
}

inline double fpr(const ConfusionCounts& c) {
  const int64_t d = c.fp + c.tn;
  return d == 0 ? 0.0 : static_cast<double>(c.fp) / static_cast<double>(d);
}

inline double fnr(const ConfusionCounts& c) {
  const int64_t d = c.fn + c.tp;
  return d == 0 ? 0.0 : static_cast<double>(c.fn) / static_cast<double>(d);
}

// Mean IoU over road and background; a class absent from both prediction and
// ground truth (empty denominator) contributes IoU 1.
inline double miou(const ConfusionCounts& c) {
  auto iou = [](int64_t tp, int64_t fp, int64_t fn) {
    const int64_t d = tp + fp + fn;
    return d == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(d);
  };
  const double road = iou(c.tp, c.fp, c.fn);
  const double background = iou(c.tn, c.fn, c.fp);
  return 0.5 * (road + background);
}

// Per-threshold counts over the fixed grid t_i = i/255, i = 0..255, with a
// pixel predicted road iff confidence > t_i. Summable across images, so
// dataset-level metrics aggregate counts before deriving any ratio.
struct ThresholdSweep {
  std::array<int64_t, 256> tp{};
  std::array<int64_t, 256> fp{};
  int64_t road_pixels = 0;
  int64_t total_pixels = 0;

  void add(const ThresholdSweep& o) {
    for (int i = 0; i < 256; ++i) {
      tp[static_cast<size_t>(i)] += o.tp[static_cast<size_t>(i)];
      fp[static_cast<size_t>(i)] += o.fp[static_cast<size_t>(i)];
    }
    road_pixels += o.road_pixels;
    total_pixels += o.total_pixels;
  }

  ConfusionCounts counts_at(int i) const {
    ConfusionCounts c;
    c.tp = tp[static_cast<size_t>(i)];
    c.fp = fp[static_cast<size_t>(i)];
    c.fn = road_pixels - c.tp;
    c.tn = (total_pixels - road_pixels) - c.fp;
    return c;
  }

  static double threshold(int i) { return static_cast<double>(i) / 255.0; }
};

inline ThresholdSweep sweep_confidence(const std::vector<float>& confidence,
                                       const std::vector<uint8_t>& gt) {
  if (confidence.size() != gt.size()) {
    throw ShapeError("sweep: confidence and mask sizes differ");
  }
  static const std::array<double, 256> grid = [] {
    std::array<double, 256> g{};
    for (int i = 0; i < 256; ++i) g[static_cast<size_t>(i)] = i / 255.0;
    return g;
  }();
  ThresholdSweep s;
  s.total_pixels = static_cast<int64_t>(gt.size());
  // hist[m] = pixels whose largest accepting threshold index is m-1
  // (i.e. confidence > grid[i] holds exactly for i < m)
  std::array<int64_t, 257> hist_road{}, hist_bg{};
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > 1) throw DataError("sweep: ground truth must be binary (0/1)");
    const double c = static_cast<double>(confidence[i]);
    const auto m = static_cast<size_t>(
        std::lower_bound(grid.begin(), grid.end(), c) - grid.begin());
    if (gt[i]) {
      ++s.road_pixels;
      ++hist_road[m];
    } else {
      ++hist_bg[m];
    }
  }
  int64_t acc_tp = 0, acc_fp = 0;
  for (int i = 255; i >= 0; --i) {
    acc_tp += hist_road[static_cast<size_t>(i) + 1];
    acc_fp += hist_bg[static_cast<size_t>(i) + 1];
    s.tp[static_cast<size_t>(i)] = acc_tp;
    s.fp[static_cast<size_t>(i)] = acc_fp;
  }
  return s;
}

struct MaxFResult {
  double maxf = 0.0;
  double threshold = 0.0;
  int threshold_index = 0;
};

inline MaxFResult maxf_from_sweep(const ThresholdSweep& s) {
  MaxFResult best;
  best.maxf = -1.0;
  for (int i = 0; i < 256; ++i) {
    const double f = fbeta(s.counts_at(i), 1.0);
    if (f > best.maxf) {
      best.maxf = f;
      best.threshold = ThresholdSweep::threshold(i);
      best.threshold_index = i;
    }
  }
  return best;
}

inline MaxFResult maxf(const std::vector<float>& confidence,
                       const std::vector<uint8_t>& gt) {
  return maxf_from_sweep(sweep_confidence(confidence, gt));
}

// 11-point interpolated average precision over the same threshold sweep.
inline double average_precision_from_sweep(const ThresholdSweep& s) {
  std::array<double, 256> pre{}, rec{};
  for (int i = 0; i < 256; ++i) {
    const ConfusionCounts c = s.counts_at(i);
    pre[static_cast<size_t>(i)] = precision(c);
    rec[static_cast<size_t>(i)] = recall(c);
  }
  double total = 0.0;
  for (int level = 0; level <= 10; ++level) {
    const double r = level / 10.0;
    double best = 0.0;
    for (int i = 0; i < 256; ++i) {
      if (rec[static_cast<size_t>(i)] >= r) {
        best = std::max(best, pre[static_cast<size_t>(i)]);
      }
    }
    total += best;
  }
  return total / 11.0;
}

inline double average_precision(const std::vector<float>& confidence,
                                const std::vector<uint8_t>& gt) {
  return average_precision_from_sweep(sweep_confidence(confidence, gt));
}

struct MetricsReport {
  double maxf = 0.0;
  double maxf_threshold = 0.0;
  double ap = 0.0;
  double pre = 0.0;
  double rec = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double miou = 0.0;
  double acc = 0.0;
};

// Point metrics (PRE/REC/F/IoU/ACC) are reported at the MaxF threshold.
inline MetricsReport report_from_sweep(const ThresholdSweep& s) {
  MetricsReport r;
  const MaxFResult m = maxf_from_sweep(s);
  r.maxf = m.maxf;
  r.maxf_threshold = m.threshold;
  r.ap = average_precision_from_sweep(s);
  const ConfusionCounts c = s.counts_at(m.threshold_index);
  r.pre = precision(c);
  r.rec = recall(c);
  r.f1 = fbeta(c, 1.0);
  r.f2 = fbeta(c, 2.0);
  r.fpr = skipcross::fpr(c);
  r.fnr = skipcross::fnr(c);
  r.miou = skipcross::miou(c);
  r.acc = accuracy(c);
  return r;
}

inline MetricsReport evaluate_image(const std::vector<float>& confidence,
                                    const std::vector<uint8_t>& gt) {
  return report_from_sweep(sweep_confidence(confidence, gt));
}

}  // namespace skipcross
