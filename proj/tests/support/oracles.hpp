#pragma once

// Deliberately naive reference implementations. They share no code with the
// library beyond plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "czforge/annotations.hpp"
#include "czforge/eval.hpp"

namespace oracle {

struct GridBox {
  int x0, y0, x1, y1;  // half-open pixel ranges
};

struct PixelCounts {
  long long inter = 0;
  long long uni = 0;
};

/// Counts pixels of the intersection and union by visiting every pixel of
/// the joint bounding region.
inline PixelCounts count_pixels(const GridBox& a, const GridBox& b) {
  PixelCounts c;
  const int x0 = std::min(a.x0, b.x0), x1 = std::max(a.x1, b.x1);
  const int y0 = std::min(a.y0, b.y0), y1 = std::max(a.y1, b.y1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
      const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
      c.inter += in_a && in_b;
      c.uni += in_a || in_b;
    }
  }
  return c;
}

inline double pixel_iou(const GridBox& a, const GridBox& b) {
  const PixelCounts c = count_pixels(a, b);
  return c.inter == 0 ? 0.0 : static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

struct Hit {
  double confidence;
  bool tp;
};

/// Ranked hits, descending confidence, ties in input order.
inline std::vector<Hit> ranked(std::vector<Hit> hits) {
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.confidence > b.confidence; });
  return hits;
}

/// VOC-style all-points AP: area under the monotone precision envelope,
/// integrated over every recall step.
inline double all_points_ap(const std::vector<Hit>& input, std::size_t n_gt) {
  if (n_gt == 0 || input.empty()) return 0.0;
  const std::vector<Hit> hits = ranked(input);
  std::vector<double> rec{0.0}, prec{0.0};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    (hits[i].tp ? tp : fp) += 1;
    if (i + 1 < hits.size() && hits[i + 1].confidence == hits[i].confidence) continue;
    rec.push_back(tp / static_cast<double>(n_gt));
    prec.push_back(tp / (tp + fp));
  }
  rec.push_back(1.0);
  prec.push_back(0.0);
  for (std::size_t i = prec.size() - 1; i-- > 0;) prec[i] = std::max(prec[i], prec[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < rec.size(); ++i) ap += (rec[i] - rec[i - 1]) * prec[i];
  return ap;
}

/// Precision/recall after keeping every hit with confidence >= c.
struct Cut {
  double recall;
  double precision;
};

inline std::vector<Cut> all_cuts(const std::vector<Hit>& hits, std::size_t n_gt) {
  std::vector<Cut> cuts;
  for (const Hit& h : hits) {
    double tp = 0, n = 0;
    for (const Hit& k : hits) {
      if (k.confidence >= h.confidence) {
        n += 1;
        tp += k.tp;
      }
    }
    cuts.push_back({n_gt ? tp / static_cast<double>(n_gt) : 0.0, tp / n});
  }
  return cuts;
}

/// 101-point interpolated AP straight from the definition: for each sample
/// recall, the best precision of any confidence cut reaching it.
inline double interpolated_ap(const std::vector<Hit>& hits, std::size_t n_gt, int points = 101) {
  const std::vector<Cut> cuts = all_cuts(hits, n_gt);
  double sum = 0.0;
  for (int k = 0; k < points; ++k) {
    const double r = static_cast<double>(k) / (points - 1);
    double best = 0.0;
    for (const Cut& c : cuts) {
      if (c.recall >= r) best = std::max(best, c.precision);
    }
    sum += best;
  }
  return sum / points;
}

/// Greedy matching restated: walk predictions by rank, scan ground truth for
/// the best unclaimed same-class box.
inline std::vector<int> greedy_match(const std::vector<czforge::eval::Prediction>& preds,
                                     const std::vector<czforge::Annotation>& gts, double thr) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  std::vector<int> match(preds.size(), -1);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t p : order) {
    double best = thr;
    int who = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != preds[p].class_id) continue;
      const auto& a = preds[p].bbox;
      const auto& b = gts[g].bbox;
      const double iw = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
      const double ih = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
      const double inter = iw * ih;
      const double v = inter > 0 ? inter / (a.w * a.h + b.w * b.h - inter) : 0.0;
      if (v >= best && (who < 0 || v > best)) {
        best = v;
        who = static_cast<int>(g);
      }
    }
    if (who >= 0) {
      taken[static_cast<std::size_t>(who)] = 1;
      match[p] = who;
    }
  }
  return match;
}

struct NaiveClassRow {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0, map50 = 0, map50_95 = 0;
};

/// Whole-split evaluator built from the pieces above.
inline std::vector<NaiveClassRow> naive_evaluate(const std::vector<czforge::ImageRecord>& gt,
                                                 const std::vector<std::vector<czforge::eval::Prediction>>& preds,
                                                 std::size_t num_classes, double conf_threshold) {
  std::vector<NaiveClassRow> rows(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t n_gt = 0;
    for (const auto& r : gt) {
      for (const auto& a : r.annotations) n_gt += static_cast<std::size_t>(a.class_id) == c;
    }
    double ap_sum = 0.0;
    for (int k = 0; k < 10; ++k) {
      const double thr = 0.5 + 0.05 * k;
      std::vector<Hit> hits;
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const std::vector<int> m = greedy_match(preds[i], gt[i].annotations, thr);
        for (std::size_t p = 0; p < preds[i].size(); ++p) {
          if (static_cast<std::size_t>(preds[i][p].class_id) != c) continue;
          hits.push_back({preds[i][p].confidence, m[p] >= 0});
          if (k == 0 && preds[i][p].confidence >= conf_threshold) (m[p] >= 0 ? rows[c].tp : rows[c].fp) += 1;
        }
      }
      const double ap = interpolated_ap(hits, n_gt);
      if (k == 0) rows[c].map50 = ap;
      ap_sum += ap;
    }
    rows[c].map50_95 = ap_sum / 10.0;
    rows[c].fn = n_gt - rows[c].tp;
    const double tp = static_cast<double>(rows[c].tp);
    rows[c].precision = rows[c].tp + rows[c].fp ? tp / static_cast<double>(rows[c].tp + rows[c].fp) : 0.0;
    rows[c].recall = n_gt ? tp / static_cast<double>(n_gt) : 0.0;
    const double s = rows[c].precision + rows[c].recall;
    rows[c].f1 = s > 0 ? 2 * rows[c].precision * rows[c].recall / s : 0.0;
  }
  return rows;
}

/// Counts of each class in each split for a given assignment.
using Counts = std::array<std::vector<long long>, 3>;

inline Counts split_counts(const std::vector<std::vector<long long>>& per_image, const std::vector<int>& assign,
                           std::size_t num_classes) {
  Counts c;
  for (auto& v : c) v.assign(num_classes, 0);
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    for (std::size_t k = 0; k < num_classes; ++k) c[static_cast<std::size_t>(assign[i])][k] += per_image[i][k];
  }
  return c;
}

/// Every assignment of images to three splits that minimizes the summed
/// absolute deviation of per-class counts from ratio * total.
inline std::vector<Counts> optimal_split_counts(const std::vector<std::vector<long long>>& per_image,
                                                const std::array<double, 3>& ratios, std::size_t num_classes,
                                                double* best_cost = nullptr) {
  std::vector<long long> totals(num_classes, 0);
  for (const auto& row : per_image) {
    for (std::size_t k = 0; k < num_classes; ++k) totals[k] += row[k];
  }
  const std::size_t n = per_image.size();
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 3;
  double best = INFINITY;
  std::vector<Counts> winners;
  std::vector<int> assign(n, 0);
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t rest = code;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = static_cast<int>(rest % 3);
      rest /= 3;
    }
    const Counts c = split_counts(per_image, assign, num_classes);
    double cost = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < num_classes; ++k) cost += std::fabs(c[s][k] - ratios[s] * totals[k]);
    }
    if (cost < best - 1e-9) {
      best = cost;
      winners.clear();
    }
    if (cost <= best + 1e-9 && std::find(winners.begin(), winners.end(), c) == winners.end()) winners.push_back(c);
  }
  if (best_cost) *best_cost = best;
  return winners;
}

}  // namespace oracle
