#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "czforge/annotations.hpp"

namespace czforge::eval {

struct Prediction {
  ClassId class_id = 0;
  NormBBox bbox;
  double confidence = 0.0;

  bool operator==(const Prediction&) const = default;
};

/// Intersection over union; 0 for disjoint boxes. Mixing pixel and
/// normalized boxes does not compile.
double iou(const PixelBBox& a, const PixelBBox& b) noexcept;
double iou(const NormBBox& a, const NormBBox& b) noexcept;

struct MatchResult {
  /// Per prediction, in input order.
  std::vector<bool> true_positive;
  /// Index of the matched ground truth, or -1.
  std::vector<int> matched_gt;
  /// Unmatched ground truths per class.
  std::map<ClassId, std::size_t> false_negatives;
};

/// Greedy confidence-ranked matching within one image. Predictions are visited
/// by descending confidence (ties in input order); each takes the unmatched
/// same-class ground truth of highest IoU (ties to the lowest index) if that
/// IoU reaches `iou_threshold`.
MatchResult match_detections(std::span<const Prediction> predictions, std::span<const Annotation> ground_truth,
                             double iou_threshold);

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double confidence = 0.0;
};

struct PRCurve {
  ClassId class_id = 0;
  double iou_threshold = 0.5;
  std::size_t num_ground_truth = 0;
  /// One point per distinct confidence, descending confidence.
  std::vector<PRPoint> points;
};

struct ImageDetections {
  std::span<const Prediction> predictions;
  std::span<const Annotation> ground_truth;
};

/// A ranked detection after matching: confidence and whether it hit.
struct ScoredHit {
  double confidence = 0.0;
  bool true_positive = false;
};

PRCurve pr_curve(std::span<const ImageDetections> images, double iou_threshold, ClassId class_id);
PRCurve pr_curve_from_hits(std::vector<ScoredHit> hits, std::size_t num_ground_truth, ClassId class_id = 0,
                           double iou_threshold = 0.5);

/// Interpolated AP: mean over r in {0, 1/(n-1), ..., 1} of the best
/// precision at recall >= r.
double average_precision(const PRCurve& curve, int points = 101);

struct EvalConfig {
  std::vector<double> iou_thresholds{0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  double conf_threshold = 0.2;
  int interpolation_points = 101;
  unsigned workers = 1;

  /// Thresholds strictly increasing in (0,1] and including 0.5.
  void validate() const;
};

struct ClassMetrics {
  std::string name;
  std::size_t gt_instances = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  /// AP at each configured IoU threshold.
  std::vector<double> ap;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<double> iou_thresholds;
  double conf_threshold = 0.2;
  std::vector<ClassMetrics> per_class;
  /// Unweighted means over classes that have ground truth.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  /// (classes + 1)^2, indexed [predicted][actual]; the last index is background.
  std::vector<std::vector<std::size_t>> confusion;
  /// One curve per class per IoU threshold, class-major.
  std::vector<PRCurve> curves;
  std::size_t num_images = 0;
  std::size_t num_predictions = 0;
  /// Evaluation wall time, not model inference time.
  double eval_ms_per_image = 0.0;
};

using PredictionSet = std::map<std::string, std::vector<Prediction>, std::less<>>;

/// Throws DataError when a prediction stem has no ground-truth record.
EvalReport evaluate(std::span<const ImageRecord> ground_truth, const PredictionSet& predictions,
                    const EvalConfig& config, const ClassRegistry& registry);

/// "class confidence cx cy w h" per line.
std::vector<Prediction> parse_prediction_file(std::string_view text, const ClassRegistry& registry);
std::string serialize_prediction_file(std::span<const Prediction> predictions);

std::string report_to_json(const EvalReport& report);
/// Class, Precision, Recall, F1, mAP50, mAP50-95, EvalTime(ms/img)
std::string report_to_csv(const EvalReport& report);
std::string report_to_text(const EvalReport& report);
std::string pr_curve_to_csv(const PRCurve& curve);

}  // namespace czforge::eval
