// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "czforge/annotations.hpp"
#include "czforge/augment.hpp"
#include "czforge/error.hpp"
#include "czforge/eval.hpp"
#include "czforge/random.hpp"
#include "czforge/splitter.hpp"
#include "czforge/synthgen.hpp"
#include "fixtures.hpp"
#include "mask_check.hpp"
#include "oracles.hpp"
#include "toy_split.hpp"

namespace fs = std::filesystem;
using namespace czforge;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_s;  // <= 0: no runtime bound
  std::function<Verdict()> run;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const ClassRegistry kReg = ClassRegistry::construction_zone();

// ---------------------------------------------------------------------------

std::string corrupt_line(Rng& rng, const Annotation& a) {
  const std::string cls = std::to_string(a.class_id);
  const std::string cx = format_fixed6(a.bbox.cx), cy = format_fixed6(a.bbox.cy);
  const std::string w = format_fixed6(a.bbox.w), h = format_fixed6(a.bbox.h);
  switch (rng.uniform_int(0, 9)) {
    case 0: return cls + " " + cx + " " + cy + " " + w;
    case 1: return cls + " " + cx + " " + cy + " " + w + " " + h + " 0.5";
    case 2: return cls + " 1.500000 " + cy + " " + w + " " + h;
    case 3: return cls + " " + cx + " -0.250000 " + w + " " + h;
    case 4: return cls + " " + cx + " " + cy + " 0 " + h;
    case 5: return cls + " " + cx + " " + cy + " " + w + " 1.2";
    case 6: return std::to_string(rng.uniform_int(3, 99)) + " " + cx + " " + cy + " " + w + " " + h;
    case 7: return "-1 " + cx + " " + cy + " " + w + " " + h;
    case 8: return cls + " " + cx + " x" + cy + " " + w + " " + h;
    default: return cls + " " + cx + " " + cy + " nan " + h;
  }
}

Verdict parser_roundtrip() {
  Rng rng(1001);
  int same = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto anns = fixture::random_annotations(rng, 40, 3);
    const std::string text = serialize_yolo_label(anns);
    same += serialize_yolo_label(parse_yolo_label(text, kReg)) == text;
  }
  int rejected = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<Annotation> anns;
    while (anns.empty()) anns = fixture::random_annotations(rng, 12, 3);
    const auto bad = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(anns.size()) - 1));
    std::string text;
    for (std::size_t i = 0; i < anns.size(); ++i) {
      text += i == bad ? corrupt_line(rng, anns[i]) + "\n" : serialize_yolo_label({anns[i]});
    }
    try {
      parse_yolo_label(text, kReg);
    } catch (const ParseError& e) {
      const std::string tail = ", line " + std::to_string(bad + 1);
      rejected += e.line() == bad + 1 && std::string(e.what()).ends_with(tail);
    }
  }
  return {same == 1000 && rejected == 200, fmt("%d/1000 byte-identical, %d/200 rejected at the right line", same, rejected)};
}

Verdict iou_oracle() {
  Rng rng(2002);
  int exact = 0;
  auto box = [&] {
    const int x0 = rng.uniform_int(0, 60), y0 = rng.uniform_int(0, 60);
    return oracle::GridBox{x0, y0, x0 + rng.uniform_int(1, 40), y0 + rng.uniform_int(1, 40)};
  };
  for (int t = 0; t < 10000; ++t) {
    const oracle::GridBox a = box(), b = box();
    const double analytic = eval::iou(PixelBBox{double(a.x0), double(a.y0), double(a.x1), double(a.y1)},
                                      PixelBBox{double(b.x0), double(b.y0), double(b.x1), double(b.y1)});
    exact += analytic == oracle::pixel_iou(a, b);
  }
  return {exact == 10000, fmt("%d/10000 pairs equal bit for bit", exact)};
}

Verdict ap_oracle() {
  Rng rng(3003);
  int within = 0, definition = 0, steps = 0, steps_equal = 0;
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const auto n_gt = static_cast<std::size_t>(rng.uniform_int(1, 10));
    std::vector<oracle::Hit> hits;
    if (t % 5 == 0) {
      // Every ground truth found before any false positive.
      for (std::size_t k = 0; k < n_gt; ++k) hits.push_back({0.5 + 0.5 * rng.uniform(), true});
      for (int k = rng.uniform_int(0, 20 - static_cast<int>(n_gt)); k > 0; --k) hits.push_back({0.4 * rng.uniform(), false});
    } else {
      std::size_t tps = 0;
      for (int k = rng.uniform_int(0, 20); k > 0; --k) {
        const bool tp = tps < n_gt && rng.uniform() < 0.5;
        tps += tp;
        hits.push_back({std::round(rng.uniform() * 40) / 40, tp});
      }
    }
    std::vector<eval::ScoredHit> scored;
    for (const auto& h : hits) scored.push_back({h.confidence, h.tp});
    const double ap = eval::average_precision(eval::pr_curve_from_hits(scored, n_gt));
    const double all_points = oracle::all_points_ap(hits, n_gt);
    worst = std::max(worst, std::fabs(ap - all_points));
    within += std::fabs(ap - all_points) <= 0.01 + 1e-12;
    definition += std::fabs(ap - oracle::interpolated_ap(hits, n_gt)) <= 1e-9;

    // Step-function instances: the precision envelope is one constant level
    // over the whole recall axis, so every sample point sees the same value.
    const auto cuts = oracle::all_cuts(hits, n_gt);
    double best = 0.0, best_full = -1.0;
    for (const auto& c : cuts) {
      best = std::max(best, c.precision);
      if (c.recall >= 1.0) best_full = std::max(best_full, c.precision);
    }
    const bool no_hits = best == 0.0;
    if (no_hits || best_full == best) {
      ++steps;
      steps_equal += std::fabs(ap - all_points) <= 1e-9;
    }
  }
  const bool ok = within == 500 && definition == 500 && steps > 0 && steps_equal == steps;
  return {ok, fmt("%d/500 within 0.01 of all-points (max %.4f), %d/500 equal the 101-point definition, %d/%d "
                  "step-function instances within 1e-9",
                  within, worst, definition, steps_equal, steps)};
}

// Scenes shared by the evaluator checks.
struct LoopData {
  std::vector<ImageRecord> gt;
  std::vector<ImageRecord> drift_gt;
  eval::PredictionSet clean;
  eval::PredictionSet drift;
};

const synth::SceneDistribution kLoopDist{};

ImageRecord record_of(const std::string& id, const Rgb8Image& img, std::vector<Annotation> anns) {
  return {id, img.width(), img.height(), std::move(anns)};
}

std::vector<synth::RenderedScene> render_loop_scenes(std::size_t n) {
  std::vector<synth::RenderedScene> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth::render_scene(synth::sample_scene(kLoopDist, derive_seed(4004, i))));
  return out;
}

Verdict perfect_case() {
  const auto scenes = render_loop_scenes(200);
  std::vector<ImageRecord> gt;
  eval::PredictionSet preds;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string id = synth::scene_id(i);
    gt.push_back(record_of(id, scenes[i].image, scenes[i].annotations));
    auto& p = preds[id];
    for (const auto& a : scenes[i].annotations) p.push_back({a.class_id, a.bbox, 1.0});
  }
  const eval::EvalReport r = eval::evaluate(gt, preds, eval::EvalConfig{}, kReg);
  bool ok = true;
  std::string detail;
  for (const auto& m : r.per_class) {
    ok = ok && m.gt_instances > 0 && m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0 && m.map50 == 1.0 &&
         m.map50_95 == 1.0;
    detail += fmt("%s P=%g R=%g F1=%g mAP50=%g mAP50-95=%g (n=%zu); ", m.name.c_str(), m.precision, m.recall, m.f1,
                  m.map50, m.map50_95, m.gt_instances);
  }
  return {ok, detail};
}

std::vector<double> clean_map50;

Verdict closed_loop_clean() {
  const auto scenes = render_loop_scenes(200);
  std::vector<ImageRecord> gt;
  eval::PredictionSet preds;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string id = synth::scene_id(i);
    gt.push_back(record_of(id, scenes[i].image, scenes[i].annotations));
    preds[id] = synth::reference_detector(scenes[i].image);
  }
  const eval::EvalReport r = eval::evaluate(gt, preds, eval::EvalConfig{}, kReg);
  bool ok = true;
  std::string detail;
  clean_map50.clear();
  for (const auto& m : r.per_class) {
    ok = ok && m.gt_instances > 0 && m.map50 >= 0.99;
    clean_map50.push_back(m.map50);
    detail += fmt("%s mAP50=%.4f (n=%zu); ", m.name.c_str(), m.map50, m.gt_instances);
  }
  return {ok, detail};
}

Verdict closed_loop_drift() {
  const auto scenes = render_loop_scenes(200);
  const augment::AugmentPipeline heavy = augment::preset("heavy_drift", 4004);
  std::vector<ImageRecord> gt;
  eval::PredictionSet preds;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string id = synth::scene_id(i);
    const augment::AugmentResult d = augment::apply_pipeline(scenes[i].image, scenes[i].annotations, heavy, id);
    gt.push_back(record_of(id, d.image, d.annotations));
    preds[id] = synth::reference_detector(d.image);
  }
  const eval::EvalReport r = eval::evaluate(gt, preds, eval::EvalConfig{}, kReg);
  bool ok = clean_map50.size() == r.per_class.size();
  std::string detail;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const double before = c < clean_map50.size() ? clean_map50[c] : NAN;
    ok = ok && r.per_class[c].map50 < before;
    detail += fmt("%s mAP50 %.4f -> %.4f; ", r.per_class[c].name.c_str(), before, r.per_class[c].map50);
  }
  return {ok, detail};
}

augment::AugmentPipeline one_step(const std::string& op, std::vector<augment::ParamRange> params) {
  augment::AugmentPipeline p;
  p.name = op;
  p.steps = {{op, std::move(params), 1.0}};
  return p;
}

Verdict augment_invariants() {
  Rng rng(5005);
  synth::SceneDistribution d;
  d.width = 192;
  d.height = 160;
  const std::vector<std::string> ops{"brightness", "contrast", "saturation", "hue",    "noise",          "blur",
                                     "hflip",      "vflip",    "rotate",     "shear",  "scale_translate"};
  const std::map<std::string, std::vector<augment::ParamRange>> identity{
      {"brightness", {{"gain", 1, 1}}},  {"contrast", {{"factor", 1, 1}}}, {"saturation", {{"factor", 1, 1}}},
      {"hue", {{"degrees", 0, 0}}},      {"noise", {{"sigma", 0, 0}}},     {"blur", {{"sigma", 0, 0}}},
      {"rotate", {{"degrees", 0, 0}}},   {"shear", {{"kx", 0, 0}, {"ky", 0, 0}}},
      {"scale_translate", {{"sx", 1, 1}, {"sy", 1, 1}, {"tx", 0, 0}, {"ty", 0, 0}}},
  };
  int photometric = 0, photometric_ok = 0, flips = 0, flips_ok = 0, ident = 0, ident_ok = 0, hulls = 0, hulls_ok = 0;
  std::size_t mask_pixels = 0;
  for (int t = 0; t < 1000; ++t) {
    const synth::RenderedScene sc = synth::render_scene(synth::sample_scene(d, derive_seed(5005, t)));
    const std::string labels = serialize_yolo_label(sc.annotations);
    const std::string& op = ops[static_cast<std::size_t>(t) % ops.size()];
    const std::string id = "pair" + std::to_string(t);

    if (auto it = identity.find(op); it != identity.end()) {
      ++ident;
      const auto r = augment::apply_pipeline(sc.image, sc.annotations, one_step(op, it->second), id);
      ident_ok += r.image == sc.image && serialize_yolo_label(r.annotations) == labels;
    }
    if (op == "hflip" || op == "vflip") {
      ++flips;
      const auto once = augment::apply_pipeline(sc.image, sc.annotations, one_step(op, {}), id);
      const auto twice = augment::apply_pipeline(once.image, once.annotations, one_step(op, {}), id);
      flips_ok += twice.image == sc.image && serialize_yolo_label(twice.annotations) == labels;
    } else if (op == "rotate" || op == "shear") {
      ++hulls;
      const augment::AugmentOp g = op == "rotate" ? augment::AugmentOp{augment::Rotate{rng.uniform(-180.0, 180.0)}}
                                                  : augment::AugmentOp{augment::Shear{rng.uniform(-0.5, 0.5),
                                                                                      rng.uniform(-0.5, 0.5)}};
      const oracle::HullCheck hc = oracle::check_hulls(sc, g);
      mask_pixels += hc.pixels;
      hulls_ok += hc.outside == 0;
    } else if (op != "scale_translate") {
      ++photometric;
      std::vector<augment::ParamRange> params;
      for (const std::string& name : augment::op_parameters(op)) {
        double v = 0.0;
        if (name == "degrees") v = rng.uniform(-180.0, 180.0);
        else if (name == "sigma") v = rng.uniform(0.1, 4.0) * (op == "noise" ? 8.0 : 1.0);
        else v = rng.uniform(0.2, 2.0);
        params.push_back({name, v, v});
      }
      const auto r = augment::apply_pipeline(sc.image, sc.annotations, one_step(op, params), id);
      photometric_ok += serialize_yolo_label(r.annotations) == labels;
    }
  }

  // Worker-count independence through the command line.
  fixture::TempDir dir("accept-aug");
  std::ostringstream sink;
  bool workers_ok = cli::run({"gen", "-n", "24", "--seed", "6", "--width", "160", "--height", "160", "--out",
                              (dir / "ds").string()},
                             sink, sink) == 0;
  auto tree = [](const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = fixture::read_file(e.path());
    }
    return files;
  };
  for (const char* preset : {"geometric", "heavy_drift", "light_drift"}) {
    const std::string one = (dir / (std::string(preset) + "_j1")).string();
    const std::string eight = (dir / (std::string(preset) + "_j8")).string();
    for (const auto& [out, j] : {std::pair{one, "1"}, std::pair{eight, "8"}}) {
      workers_ok = workers_ok && cli::run({"augment", "--in", (dir / "ds").string(), "--out", out, "--preset", preset,
                                           "--seed", "77", "-j", j},
                                          sink, sink) == 0;
    }
    workers_ok = workers_ok && tree(one) == tree(eight);
  }

  const bool ok = photometric_ok == photometric && flips_ok == flips && ident_ok == ident && hulls_ok == hulls &&
                  mask_pixels > 0 && workers_ok;
  return {ok, fmt("labels kept %d/%d, flip involutions %d/%d, identities %d/%d, hulls %d/%d (%zu mask pixels), "
                  "workers 1 vs 8 %s",
                  photometric_ok, photometric, flips_ok, flips, ident_ok, ident, hulls_ok, hulls, mask_pixels,
                  workers_ok ? "identical" : "DIFFER")};
}

Verdict split_quality() {
  const auto& counts = fixture::toy_split_counts();
  const auto toy = fixture::records_from_counts(counts);
  const std::array<double, 3> ratios{0.5, 0.25, 0.25};
  const auto optima = oracle::optimal_split_counts(counts, ratios, 3);
  int near = 0;
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    split::SplitSpec spec;
    spec.ratios = ratios;
    spec.seed = static_cast<std::uint64_t>(seed);
    const auto rep = split::stratified_split(toy, spec, kReg).report;
    bool hit = false;
    for (const auto& o : optima) {
      bool all = true;
      for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t c = 0; c < 3; ++c) all = all && std::llabs(static_cast<long long>(rep.achieved[s][c]) - o[s][c]) <= 1;
      }
      hit = hit || all;
    }
    near += hit;
  }

  Rng rng(6006);
  int partition = 0, determinism = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<long long>> rows(static_cast<std::size_t>(rng.uniform_int(1, 80)));
    for (auto& row : rows) {
      row.assign(3, 0);
      for (auto& v : row) v = rng.uniform() < 0.5 ? 0 : rng.uniform_int(1, 5);
    }
    const auto records = fixture::records_from_counts(rows);
    split::SplitSpec spec;
    const double a = rng.uniform(0.05, 0.95), b = rng.uniform(0.0, 1.0 - a);
    spec.ratios = {a, b, 1.0 - a - b};
    spec.seed = rng.next_u64();
    const auto r1 = split::stratified_split(records, spec, kReg);
    const auto r2 = split::stratified_split(records, spec, kReg);
    std::multiset<std::string> seen;
    for (const auto& part : r1.parts) {
      for (const auto& rec : part) seen.insert(rec.image_id);
    }
    std::set<std::string> expected;
    for (const auto& rec : records) expected.insert(rec.image_id);
    partition += seen.size() == records.size() && std::set<std::string>(seen.begin(), seen.end()) == expected;
    determinism += r1.assignment == r2.assignment;
  }
  return {near == seeds && partition == 100 && determinism == 100,
          fmt("toy set within +-1 of the exhaustive optimum for %d/%d seeds, partition %d/100, determinism %d/100",
              near, seeds, partition, determinism)};
}

Verdict split_count_table() {
  fixture::TempDir dir("accept-counts");
  fixture::build_counted_dataset(dir.path(), {"beacon", "cone", "barrier"},
                                 {fixture::SplitCounts{1126, 530, 1072}, {240, 120, 240}, {10, 10, 10}});
  std::ostringstream out, err;
  const int code = cli::run({"stats", "--in", dir.path().string()}, out, err);
  const std::map<std::string, std::vector<long long>> expected{
      {"train", {1126, 530, 1072}}, {"val", {240, 120, 240}}, {"test", {10, 10, 10}}};
  std::map<std::string, std::vector<long long>> printed;
  std::string header;
  std::istringstream lines(out.str());
  for (std::string line; std::getline(lines, line);) {
    std::istringstream words(line);
    std::string first;
    words >> first;
    if (first == "Type") header = line;
    if (!expected.contains(first)) continue;
    for (long long v; words >> v;) printed[first].push_back(v);
  }
  bool ok = code == 0 && header.find("beacon") < header.find("cone") && header.find("cone") < header.find("barrier");
  for (const auto& [split, counts] : expected) {
    ok = ok && printed[split].size() >= 3 && std::vector<long long>(printed[split].begin(), printed[split].begin() + 3) == counts;
  }
  std::string flat = out.str();
  for (auto& ch : flat) ch = ch == '\n' ? '|' : ch;
  return {ok, "stats printed: " + flat};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"parser roundtrip and fuzz rejection", 5, parser_roundtrip},
      {"IoU equals pixel counting", 10, iou_oracle},
      {"AP against independent oracles", 30, ap_oracle},
      {"evaluator perfect case", 0, perfect_case},
      {"closed loop, clean scenes", 60, closed_loop_clean},
      {"closed loop, heavy drift lowers mAP50", 0, closed_loop_drift},
      {"augment invariants", 0, augment_invariants},
      {"split quality", 0, split_quality},
      {"published split counts reproduced by stats", 0, split_count_table},
  };
  const auto start = Clock::now();
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_time = c.limit_s <= 0 || secs < c.limit_s;
    const bool pass = v.ok && in_time;
    failures += !pass;
    std::string timing = fmt("%.2f s", secs);
    if (c.limit_s > 0) timing += fmt(", limit %.0f s", c.limit_s);
    std::printf("%s  %s: %s [%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  const double total = seconds_since(start);
  const bool quick = total < 300.0;
  failures += !quick;
  std::printf("%s  full acceptance run under 5 minutes: %.1f s\n", quick ? "PASS" : "FAIL", total);
  return failures == 0 ? 0 : 1;
}
