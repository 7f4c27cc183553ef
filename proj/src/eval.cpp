#include "czforge/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "czforge/error.hpp"
#include "czforge/parallel.hpp"

namespace czforge::eval {

double iou(const PixelBBox& a, const PixelBBox& b) noexcept {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou(const NormBBox& a, const NormBBox& b) noexcept {
  return iou(PixelBBox{a.x_min(), a.y_min(), a.x_max(), a.y_max()},
             PixelBBox{b.x_min(), b.y_min(), b.x_max(), b.y_max()});
}

namespace {

std::vector<std::size_t> confidence_order(std::span<const Prediction> predictions) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].confidence > predictions[b].confidence;
  });
  return order;
}

}  // namespace

MatchResult match_detections(std::span<const Prediction> predictions, std::span<const Annotation> ground_truth,
                             double iou_threshold) {
  MatchResult result;
  result.true_positive.assign(predictions.size(), false);
  result.matched_gt.assign(predictions.size(), -1);
  std::vector<bool> used(ground_truth.size(), false);
  for (std::size_t p : confidence_order(predictions)) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (used[g] || ground_truth[g].class_id != predictions[p].class_id) continue;
      const double v = iou(predictions[p].bbox, ground_truth[g].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      used[static_cast<std::size_t>(best)] = true;
      result.true_positive[p] = true;
      result.matched_gt[p] = best;
    }
  }
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    if (!used[g]) ++result.false_negatives[ground_truth[g].class_id];
  }
  return result;
}

PRCurve pr_curve_from_hits(std::vector<ScoredHit> hits, std::size_t num_ground_truth, ClassId class_id,
                           double iou_threshold) {
  PRCurve curve;
  curve.class_id = class_id;
  curve.iou_threshold = iou_threshold;
  curve.num_ground_truth = num_ground_truth;
  std::stable_sort(hits.begin(), hits.end(),
                   [](const ScoredHit& a, const ScoredHit& b) { return a.confidence > b.confidence; });
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    (hits[i].true_positive ? tp : fp) += 1;
    if (i + 1 < hits.size() && hits[i + 1].confidence == hits[i].confidence) continue;
    PRPoint pt;
    pt.recall = num_ground_truth > 0 ? static_cast<double>(tp) / static_cast<double>(num_ground_truth) : 0.0;
    pt.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    pt.confidence = hits[i].confidence;
    curve.points.push_back(pt);
  }
  return curve;
}

PRCurve pr_curve(std::span<const ImageDetections> images, double iou_threshold, ClassId class_id) {
  std::vector<ScoredHit> hits;
  std::size_t num_gt = 0;
  for (const ImageDetections& img : images) {
    const MatchResult m = match_detections(img.predictions, img.ground_truth, iou_threshold);
    for (std::size_t p = 0; p < img.predictions.size(); ++p) {
      if (img.predictions[p].class_id == class_id) hits.push_back({img.predictions[p].confidence, m.true_positive[p]});
    }
    num_gt += static_cast<std::size_t>(
        std::count_if(img.ground_truth.begin(), img.ground_truth.end(),
                      [&](const Annotation& a) { return a.class_id == class_id; }));
  }
  return pr_curve_from_hits(std::move(hits), num_gt, class_id, iou_threshold);
}

double average_precision(const PRCurve& curve, int points) {
  if (points < 2) throw ValidationError("interpolation needs at least 2 points");
  if (curve.points.empty()) return 0.0;
  // Suffix maximum of precision over recall-sorted points.
  std::vector<PRPoint> pts = curve.points;
  std::stable_sort(pts.begin(), pts.end(), [](const PRPoint& a, const PRPoint& b) { return a.recall < b.recall; });
  std::vector<double> best(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    best[i] = running;
  }
  double sum = 0.0;
  std::size_t j = 0;
  for (int k = 0; k < points; ++k) {
    const double r = static_cast<double>(k) / static_cast<double>(points - 1);
    while (j < pts.size() && pts[j].recall < r) ++j;
    if (j < pts.size()) sum += best[j];
  }
  return sum / points;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ValidationError("at least one IoU threshold is required");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw ValidationError("IoU thresholds must lie in (0,1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) throw ValidationError("IoU thresholds must be strictly increasing");
  }
  if (std::none_of(iou_thresholds.begin(), iou_thresholds.end(), [](double t) { return std::fabs(t - 0.5) < 1e-9; })) {
    throw ValidationError("IoU thresholds must include 0.50");
  }
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) throw ValidationError("confidence threshold must be in [0,1]");
  if (interpolation_points < 2) throw ValidationError("interpolation points must be >= 2");
}

namespace {

struct ImageOutcome {
  /// [threshold][class] -> hits in prediction input order
  std::vector<std::vector<std::vector<ScoredHit>>> hits;
  std::vector<std::vector<std::size_t>> confusion;
};

ImageOutcome evaluate_image(std::span<const Prediction> preds, std::span<const Annotation> gts,
                            const EvalConfig& config, std::size_t num_classes, std::size_t half_index) {
  ImageOutcome out;
  out.hits.assign(config.iou_thresholds.size(), std::vector<std::vector<ScoredHit>>(num_classes));
  out.confusion.assign(num_classes + 1, std::vector<std::size_t>(num_classes + 1, 0));
  MatchResult at_half;
  for (std::size_t t = 0; t < config.iou_thresholds.size(); ++t) {
    MatchResult m = match_detections(preds, gts, config.iou_thresholds[t]);
    for (std::size_t p = 0; p < preds.size(); ++p) {
      out.hits[t][static_cast<std::size_t>(preds[p].class_id)].push_back({preds[p].confidence, m.true_positive[p]});
    }
    if (t == half_index) at_half = std::move(m);
  }

  // Confusion at (conf_threshold, IoU 0.5): same-class matches first, then
  // leftover predictions claim leftover ground truth of any class.
  const std::size_t bg = num_classes;
  std::vector<bool> gt_used(gts.size(), false);
  std::vector<std::size_t> leftovers;
  for (std::size_t p : confidence_order(preds)) {
    if (preds[p].confidence < config.conf_threshold) continue;
    if (at_half.true_positive[p]) {
      gt_used[static_cast<std::size_t>(at_half.matched_gt[p])] = true;
      const auto c = static_cast<std::size_t>(preds[p].class_id);
      ++out.confusion[c][c];
    } else {
      leftovers.push_back(p);
    }
  }
  const double half = config.iou_thresholds[half_index];
  for (std::size_t p : leftovers) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const double v = iou(preds[p].bbox, gts[g].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    const auto pc = static_cast<std::size_t>(preds[p].class_id);
    if (best >= 0 && best_iou >= half) {
      gt_used[static_cast<std::size_t>(best)] = true;
      ++out.confusion[pc][static_cast<std::size_t>(gts[static_cast<std::size_t>(best)].class_id)];
    } else {
      ++out.confusion[pc][bg];
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!gt_used[g]) ++out.confusion[bg][static_cast<std::size_t>(gts[g].class_id)];
  }
  return out;
}

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

EvalReport evaluate(std::span<const ImageRecord> ground_truth, const PredictionSet& predictions,
                    const EvalConfig& config, const ClassRegistry& registry) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t nc = registry.size();
  if (nc == 0) throw ValidationError("class registry is empty");

  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (!index.emplace(ground_truth[i].image_id, i).second) {
      throw DataError("duplicate ground-truth image '" + ground_truth[i].image_id + "'");
    }
    for (const Annotation& a : ground_truth[i].annotations) {
      if (!registry.contains(a.class_id)) throw DataError("unknown class in '" + ground_truth[i].image_id + "'");
    }
  }
  std::size_t num_predictions = 0;
  for (const auto& [stem, preds] : predictions) {
    if (!index.contains(stem)) throw DataError("orphan prediction file '" + stem + "': no matching ground truth");
    for (const Prediction& p : preds) {
      if (!registry.contains(p.class_id)) throw DataError("unknown class in predictions for '" + stem + "'");
    }
    num_predictions += preds.size();
  }

  std::size_t half_index = 0;
  for (std::size_t t = 0; t < config.iou_thresholds.size(); ++t) {
    if (std::fabs(config.iou_thresholds[t] - 0.5) < 1e-9) half_index = t;
  }

  static const std::vector<Prediction> kNone;
  std::vector<ImageOutcome> outcomes(ground_truth.size());
  parallel_for(ground_truth.size(), config.workers, [&](std::size_t i) {
    auto it = predictions.find(ground_truth[i].image_id);
    const std::vector<Prediction>& preds = it == predictions.end() ? kNone : it->second;
    outcomes[i] = evaluate_image(preds, ground_truth[i].annotations, config, nc, half_index);
  });

  EvalReport report;
  report.class_names = registry.names();
  report.iou_thresholds = config.iou_thresholds;
  report.conf_threshold = config.conf_threshold;
  report.num_images = ground_truth.size();
  report.num_predictions = num_predictions;
  report.confusion.assign(nc + 1, std::vector<std::size_t>(nc + 1, 0));

  std::vector<std::size_t> gt_count(nc, 0);
  for (const ImageRecord& rec : ground_truth) {
    for (const Annotation& a : rec.annotations) ++gt_count[static_cast<std::size_t>(a.class_id)];
  }
  for (const ImageOutcome& o : outcomes) {
    for (std::size_t r = 0; r <= nc; ++r) {
      for (std::size_t c = 0; c <= nc; ++c) report.confusion[r][c] += o.confusion[r][c];
    }
  }

  for (std::size_t c = 0; c < nc; ++c) {
    ClassMetrics m;
    m.name = registry.names()[c];
    m.gt_instances = gt_count[c];
    for (std::size_t t = 0; t < config.iou_thresholds.size(); ++t) {
      std::vector<ScoredHit> hits;
      for (const ImageOutcome& o : outcomes) hits.insert(hits.end(), o.hits[t][c].begin(), o.hits[t][c].end());
      if (t == half_index) {
        for (const ScoredHit& h : hits) {
          if (h.confidence < config.conf_threshold) continue;
          (h.true_positive ? m.true_positives : m.false_positives) += 1;
        }
      }
      PRCurve curve = pr_curve_from_hits(std::move(hits), gt_count[c], static_cast<ClassId>(c), config.iou_thresholds[t]);
      m.ap.push_back(average_precision(curve, config.interpolation_points));
      report.curves.push_back(std::move(curve));
    }
    m.false_negatives = gt_count[c] - m.true_positives;
    m.precision = safe_div(static_cast<double>(m.true_positives), static_cast<double>(m.true_positives + m.false_positives));
    m.recall = safe_div(static_cast<double>(m.true_positives), static_cast<double>(gt_count[c]));
    m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.map50 = m.ap[half_index];
    m.map50_95 = std::accumulate(m.ap.begin(), m.ap.end(), 0.0) / static_cast<double>(m.ap.size());
    report.per_class.push_back(std::move(m));
  }

  std::size_t counted = 0;
  for (const ClassMetrics& m : report.per_class) {
    if (m.gt_instances == 0) continue;
    ++counted;
    report.precision += m.precision;
    report.recall += m.recall;
    report.f1 += m.f1;
    report.map50 += m.map50;
    report.map50_95 += m.map50_95;
  }
  if (counted > 0) {
    const double n = static_cast<double>(counted);
    report.precision /= n;
    report.recall /= n;
    report.f1 /= n;
    report.map50 /= n;
    report.map50_95 /= n;
  }

  const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
  report.eval_ms_per_image = report.num_images > 0 ? elapsed.count() / static_cast<double>(report.num_images) : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Prediction files

namespace {

bool parse_double(std::string_view token, double& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string fixed6(double v) { return format_fixed6(v); }

}  // namespace

std::vector<Prediction> parse_prediction_file(std::string_view text, const ClassRegistry& registry) {
  std::vector<Prediction> out;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++number;
    std::vector<std::string_view> f;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      const std::size_t s = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
      if (i > s) f.push_back(line.substr(s, i - s));
    }
    if (f.empty()) continue;
    if (f.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(f.size()), number);
    Prediction p;
    auto [ptr, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), p.class_id);
    if (ec != std::errc() || ptr != f[0].data() + f[0].size()) throw ParseError("non-numeric class id", number);
    if (!registry.contains(p.class_id)) throw ParseError("unknown class id " + std::to_string(p.class_id), number);
    if (!parse_double(f[1], p.confidence)) throw ParseError("non-numeric confidence", number);
    if (p.confidence < 0.0 || p.confidence > 1.0) throw ParseError("confidence out of range", number);
    static constexpr const char* kNames[4] = {"cx", "cy", "w", "h"};
    double v[4];
    for (int k = 0; k < 4; ++k) {
      if (!parse_double(f[static_cast<std::size_t>(k) + 2], v[k])) throw ParseError(std::string("non-numeric ") + kNames[k], number);
    }
    p.bbox = {v[0], v[1], v[2], v[3]};
    for (int k = 0; k < 2; ++k) {
      if (v[k] < 0.0 || v[k] > 1.0) throw ParseError(std::string(kNames[k]) + " out of range", number);
    }
    for (int k = 2; k < 4; ++k) {
      if (v[k] <= 0.0 || v[k] > 1.0) throw ParseError(std::string(kNames[k]) + " out of range", number);
    }
    out.push_back(p);
  }
  return out;
}

std::string serialize_prediction_file(std::span<const Prediction> predictions) {
  std::string out;
  for (const Prediction& p : predictions) {
    out += std::to_string(p.class_id) + " " + fixed6(p.confidence) + " " + fixed6(p.bbox.cx) + " " + fixed6(p.bbox.cy) +
           " " + fixed6(p.bbox.w) + " " + fixed6(p.bbox.h) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report emission

std::string report_to_json(const EvalReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["classes"] = report.class_names;
  j["iou_thresholds"] = report.iou_thresholds;
  j["conf_threshold"] = report.conf_threshold;
  j["num_images"] = report.num_images;
  j["num_predictions"] = report.num_predictions;
  j["eval_ms_per_image"] = report.eval_ms_per_image;
  j["aggregate"] = {{"precision", report.precision}, {"recall", report.recall}, {"f1", report.f1},
                    {"mAP50", report.map50},         {"mAP50-95", report.map50_95}};
  ordered_json rows = ordered_json::array();
  for (const ClassMetrics& m : report.per_class) {
    rows.push_back({{"class", m.name},
                    {"instances", m.gt_instances},
                    {"tp", m.true_positives},
                    {"fp", m.false_positives},
                    {"fn", m.false_negatives},
                    {"precision", m.precision},
                    {"recall", m.recall},
                    {"f1", m.f1},
                    {"mAP50", m.map50},
                    {"mAP50-95", m.map50_95},
                    {"ap", m.ap}});
  }
  j["per_class"] = rows;
  std::vector<std::string> labels = report.class_names;
  labels.push_back("background");
  j["confusion_matrix"] = {{"labels", labels}, {"rows", "predicted"}, {"columns", "actual"}, {"matrix", report.confusion}};
  ordered_json curves = ordered_json::array();
  for (const PRCurve& c : report.curves) {
    ordered_json pts = ordered_json::array();
    for (const PRPoint& p : c.points) pts.push_back({p.recall, p.precision, p.confidence});
    curves.push_back({{"class", report.class_names.at(static_cast<std::size_t>(c.class_id))},
                      {"iou", c.iou_threshold},
                      {"num_ground_truth", c.num_ground_truth},
                      {"points", pts}});
  }
  j["pr_curves"] = curves;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::string out = "Class,Instances,Precision,Recall,F1,mAP50,mAP50-95,EvalTime(ms/img)\n";
  const std::string time = fixed6(report.eval_ms_per_image);
  for (const ClassMetrics& m : report.per_class) {
    out += m.name + "," + std::to_string(m.gt_instances) + "," + fixed6(m.precision) + "," + fixed6(m.recall) + "," +
           fixed6(m.f1) + "," + fixed6(m.map50) + "," + fixed6(m.map50_95) + "," + time + "\n";
  }
  std::size_t total = 0;
  for (const ClassMetrics& m : report.per_class) total += m.gt_instances;
  out += "all," + std::to_string(total) + "," + fixed6(report.precision) + "," + fixed6(report.recall) + "," +
         fixed6(report.f1) + "," + fixed6(report.map50) + "," + fixed6(report.map50_95) + "," + time + "\n";
  return out;
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "Class" << std::right << std::setw(10) << "Instances" << std::setw(11)
      << "Precision" << std::setw(8) << "Recall" << std::setw(8) << "F1" << std::setw(8) << "mAP50" << std::setw(10)
      << "mAP50-95" << '\n';
  out << std::fixed << std::setprecision(3);
  auto row = [&](const std::string& name, std::size_t n, double p, double r, double f, double m50, double m5095) {
    out << std::left << std::setw(10) << name << std::right << std::setw(10) << n << std::setw(11) << p << std::setw(8)
        << r << std::setw(8) << f << std::setw(8) << m50 << std::setw(10) << m5095 << '\n';
  };
  std::size_t total = 0;
  for (const ClassMetrics& m : report.per_class) {
    row(m.name, m.gt_instances, m.precision, m.recall, m.f1, m.map50, m.map50_95);
    total += m.gt_instances;
  }
  row("all", total, report.precision, report.recall, report.f1, report.map50, report.map50_95);
  out << std::setprecision(4) << "evaluation time: " << report.eval_ms_per_image << " ms/image over "
      << report.num_images << " images (not model inference)\n";
  return out.str();
}

std::string pr_curve_to_csv(const PRCurve& curve) {
  std::string out = "recall,precision,confidence\n";
  for (const PRPoint& p : curve.points) {
    out += fixed6(p.recall) + "," + fixed6(p.precision) + "," + fixed6(p.confidence) + "\n";
  }
  return out;
}

}  // namespace czforge::eval
