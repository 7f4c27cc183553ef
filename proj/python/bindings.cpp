#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "czforge/annotations.hpp"
#include "czforge/augment.hpp"
#include "czforge/error.hpp"
#include "czforge/eval.hpp"
#include "czforge/random.hpp"
#include "czforge/splitter.hpp"
#include "czforge/synthgen.hpp"

namespace py = pybind11;
using namespace czforge;

namespace {

// Annotations cross the boundary as (class_id, cx, cy, w, h) tuples.
using AnnTuple = std::tuple<int, double, double, double, double>;
// Predictions as (class_id, confidence, cx, cy, w, h).
using PredTuple = std::tuple<int, double, double, double, double, double>;
using Pixels = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::vector<Annotation> to_annotations(const std::vector<AnnTuple>& in) {
  std::vector<Annotation> out;
  for (const auto& [c, cx, cy, w, h] : in) out.push_back({c, {cx, cy, w, h}});
  return out;
}

std::vector<AnnTuple> from_annotations(const std::vector<Annotation>& in) {
  std::vector<AnnTuple> out;
  for (const Annotation& a : in) out.emplace_back(a.class_id, a.bbox.cx, a.bbox.cy, a.bbox.w, a.bbox.h);
  return out;
}

std::vector<PredTuple> from_predictions(const std::vector<eval::Prediction>& in) {
  std::vector<PredTuple> out;
  for (const auto& p : in) out.emplace_back(p.class_id, p.confidence, p.bbox.cx, p.bbox.cy, p.bbox.w, p.bbox.h);
  return out;
}

Rgb8Image to_image(const Pixels& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ValidationError("image must be an HxWx3 uint8 array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return Rgb8Image(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

Pixels from_image(const Rgb8Image& img) {
  Pixels out({img.height(), img.width(), 3});
  std::copy(img.bytes().begin(), img.bytes().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const eval::EvalReport& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["map50"] = r.map50;
  d["map50_95"] = r.map50_95;
  py::dict per;
  for (const auto& m : r.per_class) {
    py::dict row;
    row["instances"] = m.gt_instances;
    row["tp"] = m.true_positives;
    row["fp"] = m.false_positives;
    row["fn"] = m.false_negatives;
    row["precision"] = m.precision;
    row["recall"] = m.recall;
    row["f1"] = m.f1;
    row["map50"] = m.map50;
    row["map50_95"] = m.map50_95;
    row["ap"] = m.ap;
    per[py::str(m.name)] = row;
  }
  d["per_class"] = per;
  d["confusion"] = r.confusion;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "czforge core: labels, augmentation, synthetic scenes, splitting and detection metrics";

  auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", data_error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("class_names", [] { return ClassRegistry::construction_zone().names(); });

  m.def(
      "parse_yolo_label",
      [](const std::string& text, std::vector<std::string> names) {
        const ClassRegistry reg = names.empty() ? ClassRegistry::construction_zone() : ClassRegistry(std::move(names));
        return from_annotations(parse_yolo_label(text, reg));
      },
      py::arg("text"), py::arg("names") = std::vector<std::string>{});
  m.def(
      "serialize_yolo_label", [](const std::vector<AnnTuple>& anns) { return serialize_yolo_label(to_annotations(anns)); },
      py::arg("annotations"));

  m.def(
      "iou",
      [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
        return eval::iou(NormBBox{a[0], a[1], a[2], a[3]}, NormBBox{b[0], b[1], b[2], b[3]});
      },
      py::arg("a"), py::arg("b"), "IoU of two normalized (cx, cy, w, h) boxes.");

  m.def(
      "average_precision",
      [](const std::vector<std::pair<double, bool>>& hits, std::size_t num_ground_truth, int points) {
        std::vector<eval::ScoredHit> scored;
        for (const auto& [c, tp] : hits) scored.push_back({c, tp});
        return eval::average_precision(eval::pr_curve_from_hits(scored, num_ground_truth), points);
      },
      py::arg("hits"), py::arg("num_ground_truth"), py::arg("points") = 101,
      "Interpolated AP from (confidence, is_true_positive) pairs.");

  m.def(
      "evaluate",
      [](const std::map<std::string, std::vector<AnnTuple>>& ground_truth,
         const std::map<std::string, std::vector<PredTuple>>& predictions, double conf_threshold,
         std::vector<double> iou_thresholds, unsigned workers) {
        std::vector<ImageRecord> gt;
        for (const auto& [id, anns] : ground_truth) gt.push_back({id, 0, 0, to_annotations(anns)});
        eval::PredictionSet preds;
        for (const auto& [id, list] : predictions) {
          auto& out = preds[id];
          for (const auto& [c, conf, cx, cy, w, h] : list) out.push_back({c, {cx, cy, w, h}, conf});
        }
        eval::EvalConfig config;
        config.conf_threshold = conf_threshold;
        if (!iou_thresholds.empty()) config.iou_thresholds = std::move(iou_thresholds);
        config.workers = workers;
        eval::EvalReport report;
        {
          py::gil_scoped_release release;
          report = eval::evaluate(gt, preds, config, ClassRegistry::construction_zone());
        }
        return metrics_dict(report);
      },
      py::arg("ground_truth"), py::arg("predictions"), py::arg("conf_threshold") = 0.2,
      py::arg("iou_thresholds") = std::vector<double>{}, py::arg("workers") = 1);

  m.def(
      "render_scene",
      [](std::uint64_t seed, int width, int height, bool allow_overlap) {
        synth::SceneDistribution d;
        d.width = width;
        d.height = height;
        d.allow_overlap = allow_overlap;
        const synth::RenderedScene s = synth::render_scene(synth::sample_scene(d, seed));
        return py::make_tuple(from_image(s.image), from_annotations(s.annotations));
      },
      py::arg("seed"), py::arg("width") = 640, py::arg("height") = 640, py::arg("allow_overlap") = false,
      "Samples and renders a scene; returns (HxWx3 uint8 array, annotations).");

  m.def(
      "reference_detector", [](const Pixels& image) { return from_predictions(synth::reference_detector(to_image(image))); },
      py::arg("image"));

  m.def("preset_names", &augment::preset_names);
  m.def(
      "augment",
      [](const Pixels& image, const std::vector<AnnTuple>& anns, const std::string& pipeline, std::uint64_t seed,
         const std::string& image_id) {
        augment::AugmentPipeline p;
        const auto names = augment::preset_names();
        if (std::find(names.begin(), names.end(), pipeline) != names.end()) {
          p = augment::preset(pipeline, seed);
        } else {
          p = augment::parse_pipeline(pipeline);
          p.master_seed = seed;
        }
        const augment::AugmentResult r = augment::apply_pipeline(to_image(image), to_annotations(anns), p, image_id);
        return py::make_tuple(from_image(r.image), from_annotations(r.annotations),
                              augment::provenance_to_json(r.provenance));
      },
      py::arg("image"), py::arg("annotations"), py::arg("pipeline"), py::arg("seed") = 0,
      py::arg("image_id") = "image", "Applies a preset name or a pipeline description.");

  m.def(
      "stratified_split",
      [](const std::vector<std::vector<AnnTuple>>& images, const std::array<double, 3>& ratios, std::uint64_t seed) {
        std::vector<ImageRecord> records;
        for (std::size_t i = 0; i < images.size(); ++i) {
          records.push_back({"img" + std::to_string(i), 0, 0, to_annotations(images[i])});
        }
        split::SplitSpec spec;
        spec.ratios = ratios;
        spec.seed = seed;
        const split::SplitResult r = split::stratified_split(records, spec, ClassRegistry::construction_zone());
        std::vector<int> assignment;
        for (Split s : r.assignment) assignment.push_back(static_cast<int>(s));
        return assignment;
      },
      py::arg("images"), py::arg("ratios") = std::array<double, 3>{0.8, 0.1, 0.1}, py::arg("seed") = 0,
      "Split index (0 train, 1 val, 2 test) for each image's annotation list.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a czforge command line; returns (exit_code, stdout, stderr).");
}
