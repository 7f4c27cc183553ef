#include "czforge/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "czforge/dataset_io.hpp"
#include "czforge/error.hpp"
#include "czforge/parallel.hpp"
#include "czforge/random.hpp"

namespace czforge::synth {
namespace {

// Canonical palette. Hue windows in the detector are built around these.
constexpr Rgb kConeOrange{235, 110, 20};   // hue ~25
constexpr Rgb kBarrierRed{210, 30, 30};    // hue 0
constexpr Rgb kBeaconAmber{245, 190, 20};  // hue ~45
constexpr Rgb kWhite{240, 240, 240};
constexpr Rgb kPostGray{140, 140, 140};
constexpr Rgb kLaneWhite{225, 225, 220};

// Obstacle proportions in units of camera height above the road.
constexpr double kNearPlane = 0.1;  // distance that puts an obstacle's base on the bottom row
constexpr double kConeHeight = 0.45;
constexpr double kConeWidth = 0.30;
constexpr double kBarrierHeight = 0.35;
constexpr double kBarrierWidth = 1.0;
constexpr double kBeaconDisc = 0.20;  // diameter
constexpr double kBeaconPost = 0.45;
constexpr double kBeaconPostWidth = 0.05;
// Post length relative to the disc diameter; the detector uses it to recover
// the full beacon extent from the disc alone.
constexpr double kPostToDisc = kBeaconPost / kBeaconDisc;

enum : ClassId { kCone = 0, kBarrier = 1, kBeacon = 2 };

struct Projection {
  double x_center = 0.0;
  double base_y = 0.0;
  double scale = 0.0;  // pixels per camera height
};

double horizon_y(const SceneSpec& spec) { return spec.horizon_frac * spec.height; }

Projection project(const SceneSpec& spec, const ObstacleSpec& o) {
  const double hy = horizon_y(spec);
  const double ground = spec.height - hy;
  Projection p;
  p.base_y = hy + ground * (kNearPlane / o.distance);
  p.scale = p.base_y - hy;
  const double road_half = 0.5 * spec.width * (p.base_y - hy) / ground;
  p.x_center = spec.width / 2.0 + o.lateral * road_half;
  return p;
}

/// Raster target that records which obstacle owns each pixel.
class Canvas {
 public:
  Canvas(Rgb8Image& image, std::vector<int>& owner) : image_(image), owner_(owner) {}

  int width() const { return image_.width(); }
  int height() const { return image_.height(); }

  /// Fills pixels x0..x1 (inclusive) of row y after clipping to the frame.
  void span(int y, int x0, int x1, Rgb color, int id, ObjectMask* mask) {
    if (y < 0 || y >= height()) return;
    x0 = std::max(x0, 0);
    x1 = std::min(x1, width() - 1);
    if (x1 < x0) return;
    for (int x = x0; x <= x1; ++x) {
      image_.set(x, y, color);
      owner_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width()) + static_cast<std::size_t>(x)] = id;
    }
    if (mask != nullptr) add_run(*mask, y, x0, x1 + 1);
  }

 private:
  static void add_run(ObjectMask& mask, int y, int x0, int x1) {
    // Merge with an existing run on the same row when they touch.
    for (MaskRun& r : mask.runs) {
      if (r.y == y && x0 <= r.x1 && x1 >= r.x0) {
        r.x0 = std::min(r.x0, x0);
        r.x1 = std::max(r.x1, x1);
        return;
      }
    }
    mask.runs.push_back({y, x0, x1});
  }

  Rgb8Image& image_;
  std::vector<int>& owner_;
};

/// Inclusive pixel range whose centers fall inside [lo, hi].
std::pair<int, int> center_range(double lo, double hi) {
  return {static_cast<int>(std::ceil(lo - 0.5)), static_cast<int>(std::floor(hi - 0.5))};
}

void draw_cone(Canvas& cv, const Projection& p, int id, ObjectMask& mask) {
  const double h = kConeHeight * p.scale;
  const double half_base = kConeWidth * p.scale / 2.0;
  const double top = p.base_y - h;
  const auto [y0, y1] = center_range(top, p.base_y);
  for (int y = y0; y <= y1; ++y) {
    const double t = (y + 0.5 - top) / h;  // 0 at apex, 1 at base
    const double hw = half_base * t;
    const auto [x0, x1] = center_range(p.x_center - hw, p.x_center + hw);
    if (x1 < x0) continue;
    cv.span(y, x0, x1, kConeOrange, id, &mask);
    const int width = x1 - x0 + 1;
    if (t >= 0.45 && t <= 0.62 && width >= 3) {
      const int inset = std::max(1, static_cast<int>(std::lround(0.2 * width)));
      if (x0 + inset <= x1 - inset) cv.span(y, x0 + inset, x1 - inset, kWhite, id, nullptr);
    }
  }
}

void draw_barrier(Canvas& cv, const Projection& p, int id, ObjectMask& mask) {
  const double h = kBarrierHeight * p.scale;
  const double half_w = kBarrierWidth * p.scale / 2.0;
  const auto [y0, y1] = center_range(p.base_y - h, p.base_y);
  const auto [x0, x1] = center_range(p.x_center - half_w, p.x_center + half_w);
  if (x1 < x0 || y1 < y0) return;
  const int inset = std::max(1, static_cast<int>(std::lround(0.15 * (y1 - y0 + 1))));
  const int period = std::max(2, static_cast<int>(std::lround(0.25 * (y1 - y0 + 1))));
  for (int y = y0; y <= y1; ++y) {
    cv.span(y, x0, x1, kBarrierRed, id, &mask);
    if (y < y0 + inset || y > y1 - inset) continue;
    // Diagonal white stripes inside a red frame.
    for (int x = x0 + inset; x <= x1 - inset; ++x) {
      if (((x + y) / period) % 2 == 1) cv.span(y, x, x, kWhite, id, nullptr);
    }
  }
}

void draw_beacon(Canvas& cv, const Projection& p, int id, ObjectMask& mask) {
  const double post_h = kBeaconPost * p.scale;
  const double post_half = std::max(0.5, kBeaconPostWidth * p.scale / 2.0);
  const double r = kBeaconDisc * p.scale / 2.0;
  const double post_top = p.base_y - post_h;
  {
    const auto [y0, y1] = center_range(post_top, p.base_y);
    const auto [x0, x1] = center_range(p.x_center - post_half, p.x_center + post_half);
    for (int y = y0; y <= y1; ++y) cv.span(y, x0, x1, kPostGray, id, &mask);
  }
  const double cy = post_top - r;
  const auto [y0, y1] = center_range(cy - r, cy + r);
  for (int y = y0; y <= y1; ++y) {
    const double dy = y + 0.5 - cy;
    const double hw = std::sqrt(std::max(0.0, r * r - dy * dy));
    const auto [x0, x1] = center_range(p.x_center - hw, p.x_center + hw);
    if (x1 >= x0) cv.span(y, x0, x1, kBeaconAmber, id, &mask);
  }
}

void draw_background(const SceneSpec& spec, Rgb8Image& image) {
  const double hy = horizon_y(spec);
  const double ground = spec.height - hy;
  Rng rng(spec.seed);
  const double dash_phase = rng.uniform();
  for (int y = 0; y < spec.height; ++y) {
    const double yc = y + 0.5;
    if (yc < hy) {
      for (int x = 0; x < spec.width; ++x) image.set(x, y, spec.sky);
      continue;
    }
    for (int x = 0; x < spec.width; ++x) image.set(x, y, spec.ground);
    const double depth = (yc - hy) / ground;  // 0 at horizon, 1 at bottom
    const double half = 0.5 * spec.width * depth;
    const auto [x0, x1] = center_range(spec.width / 2.0 - half, spec.width / 2.0 + half);
    for (int x = std::max(x0, 0); x <= std::min(x1, spec.width - 1); ++x) image.set(x, y, spec.road);
    // Dashed center line; dash frequency grows towards the horizon.
    const double lane_half = std::max(0.5, 0.008 * spec.width * depth);
    const double phase = std::fmod(6.0 / std::max(depth, 1e-3) + dash_phase, 1.0);
    if (phase < 0.5 && depth > 0.02) {
      const auto [l0, l1] = center_range(spec.width / 2.0 - lane_half, spec.width / 2.0 + lane_half);
      for (int x = std::max(l0, 0); x <= std::min(l1, spec.width - 1); ++x) image.set(x, y, kLaneWhite);
    }
  }
}

void validate_spec(const SceneSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) throw ValidationError("scene dimensions must be positive");
  if (!(spec.horizon_frac > 0.0 && spec.horizon_frac < 1.0)) throw ValidationError("horizon_frac must be in (0,1)");
  for (const ObstacleSpec& o : spec.obstacles) {
    if (o.class_id < kCone || o.class_id > kBeacon) throw ValidationError("obstacle class must be 0, 1 or 2");
    if (!(o.distance > 0.0 && o.distance <= 1.0)) throw ValidationError("obstacle distance must be in (0,1]");
    if (!(o.lateral >= -1.0 && o.lateral <= 1.0)) throw ValidationError("obstacle lateral must be in [-1,1]");
  }
}

}  // namespace

std::size_t ObjectMask::area() const noexcept {
  std::size_t a = 0;
  for (const MaskRun& r : runs) a += static_cast<std::size_t>(r.x1 - r.x0);
  return a;
}

bool ObjectMask::contains(int x, int y) const noexcept {
  return std::any_of(runs.begin(), runs.end(), [&](const MaskRun& r) { return r.y == y && x >= r.x0 && x < r.x1; });
}

PixelBBox obstacle_footprint(const SceneSpec& spec, const ObstacleSpec& obstacle) {
  const Projection p = project(spec, obstacle);
  double half_w = 0.0;
  double h = 0.0;
  switch (obstacle.class_id) {
    case kCone: half_w = kConeWidth * p.scale / 2.0; h = kConeHeight * p.scale; break;
    case kBarrier: half_w = kBarrierWidth * p.scale / 2.0; h = kBarrierHeight * p.scale; break;
    default: half_w = kBeaconDisc * p.scale / 2.0; h = (kBeaconPost + kBeaconDisc) * p.scale; break;
  }
  return {p.x_center - half_w, p.base_y - h, p.x_center + half_w, p.base_y};
}

RenderedScene render_scene(const SceneSpec& spec) {
  validate_spec(spec);
  RenderedScene scene;
  scene.image = Rgb8Image(spec.width, spec.height);
  draw_background(spec, scene.image);

  std::vector<int> owner(static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height), -1);
  Canvas canvas(scene.image, owner);

  // Painter's order: farthest first, ties by index.
  std::vector<std::size_t> order(spec.obstacles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return spec.obstacles[a].distance > spec.obstacles[b].distance;
  });
  std::vector<ObjectMask> masks(spec.obstacles.size());
  for (std::size_t i : order) {
    const ObstacleSpec& o = spec.obstacles[i];
    ObjectMask& mask = masks[i];
    mask.obstacle_index = i;
    mask.class_id = o.class_id;
    const Projection p = project(spec, o);
    const int id = static_cast<int>(i);
    switch (o.class_id) {
      case kCone: draw_cone(canvas, p, id, mask); break;
      case kBarrier: draw_barrier(canvas, p, id, mask); break;
      default: draw_beacon(canvas, p, id, mask); break;
    }
  }

  std::vector<std::size_t> visible(spec.obstacles.size(), 0);
  for (int v : owner) {
    if (v >= 0) ++visible[static_cast<std::size_t>(v)];
  }
  for (std::size_t i = 0; i < spec.obstacles.size(); ++i) {
    ObjectMask& mask = masks[i];
    if (mask.runs.empty()) {
      scene.log.push_back("obstacle " + std::to_string(i) + " omitted: projects to zero pixels");
      continue;
    }
    if (visible[i] == 0) {
      scene.log.push_back("obstacle " + std::to_string(i) + " omitted: fully occluded");
      continue;
    }
    std::sort(mask.runs.begin(), mask.runs.end(),
              [](const MaskRun& a, const MaskRun& b) { return a.y != b.y ? a.y < b.y : a.x0 < b.x0; });
    PixelBBox box{static_cast<double>(spec.width), static_cast<double>(spec.height), 0.0, 0.0};
    for (const MaskRun& r : mask.runs) {
      box.xmin = std::min<double>(box.xmin, r.x0);
      box.xmax = std::max<double>(box.xmax, r.x1);
      box.ymin = std::min<double>(box.ymin, r.y);
      box.ymax = std::max<double>(box.ymax, r.y + 1);
    }
    scene.annotations.push_back({mask.class_id, to_norm(box, spec.width, spec.height)});
    scene.masks.push_back(std::move(mask));
  }
  return scene;
}

SceneSpec sample_scene(const SceneDistribution& d, std::uint64_t seed) {
  if (d.min_obstacles < 0 || d.max_obstacles < d.min_obstacles) throw ValidationError("bad obstacle count range");
  if (!(d.min_distance > 0.0 && d.min_distance <= d.max_distance && d.max_distance <= 1.0)) {
    throw ValidationError("distance bounds must satisfy 0 < min <= max <= 1");
  }
  if (d.num_classes == 0 || d.num_classes > 3) throw ValidationError("num_classes must be 1..3");
  Rng rng(seed);
  SceneSpec spec;
  spec.width = d.width;
  spec.height = d.height;
  spec.seed = rng.next_u64();
  spec.horizon_frac = rng.uniform(d.min_horizon, d.max_horizon);
  const int n = rng.uniform_int(d.min_obstacles, d.max_obstacles);
  std::vector<PixelBBox> taken;
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      ObstacleSpec o;
      o.class_id = static_cast<ClassId>(rng.uniform_int(0, static_cast<int>(d.num_classes) - 1));
      o.distance = rng.uniform(d.min_distance, d.max_distance);
      o.lateral = rng.uniform(-0.85, 0.85);
      const PixelBBox fp = obstacle_footprint(spec, o);
      const bool clash = !d.allow_overlap && std::any_of(taken.begin(), taken.end(), [&](const PixelBBox& t) {
        constexpr double kMargin = 3.0;
        return fp.xmin < t.xmax + kMargin && t.xmin < fp.xmax + kMargin && fp.ymin < t.ymax + kMargin &&
               t.ymin < fp.ymax + kMargin;
      });
      if (clash) continue;
      taken.push_back(fp);
      spec.obstacles.push_back(o);
      break;
    }
  }
  return spec;
}

std::string scene_id(std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "scene_" + digits;
}

GenerateSummary generate_dataset(const GenerateOptions& options) {
  namespace fs = std::filesystem;
  if (options.drift) augment::validate(*options.drift);
  const fs::path images = options.out_root / "images";
  const fs::path labels = options.out_root / "labels";
  std::error_code ec;
  fs::create_directories(images, ec);
  if (ec) throw IoError("cannot create '" + images.string() + "': " + ec.message());
  fs::create_directories(labels, ec);
  if (ec) throw IoError("cannot create '" + labels.string() + "': " + ec.message());

  struct PerImage {
    std::vector<std::size_t> counts;
    std::vector<std::string> log;
    std::string provenance;
    std::uint64_t seed = 0;
  };
  std::vector<PerImage> per(options.count);
  const std::size_t nc = options.registry.size();

  parallel_for(options.count, options.workers, [&](std::size_t i) {
    const std::string id = scene_id(i);
    PerImage& out = per[i];
    out.seed = derive_seed(options.seed, i);
    const SceneSpec spec = sample_scene(options.distribution, out.seed);
    RenderedScene scene = render_scene(spec);
    Rgb8Image image = std::move(scene.image);
    std::vector<Annotation> anns = std::move(scene.annotations);
    if (options.drift) {
      augment::AugmentResult r = augment::apply_pipeline(image, anns, *options.drift, id);
      image = std::move(r.image);
      anns = std::move(r.annotations);
      out.provenance = augment::provenance_to_json(r.provenance);
    }
    save_image(image, images / (id + ".png"));
    io::write_text(labels / (id + ".txt"), serialize_yolo_label(anns));
    out.counts.assign(nc, 0);
    for (const Annotation& a : anns) {
      if (options.registry.contains(a.class_id)) ++out.counts[static_cast<std::size_t>(a.class_id)];
    }
    for (const std::string& line : scene.log) out.log.push_back(id + ": " + line);
  });

  GenerateSummary summary;
  summary.images = options.count;
  summary.class_counts.assign(nc, 0);
  nlohmann::ordered_json manifest;
  manifest["count"] = options.count;
  manifest["seed"] = options.seed;
  manifest["width"] = options.distribution.width;
  manifest["height"] = options.distribution.height;
  manifest["drift_preset"] = options.drift ? nlohmann::ordered_json(options.drift->name) : nlohmann::ordered_json();
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  std::string log_text;
  std::string provenance_text;
  for (std::size_t i = 0; i < options.count; ++i) {
    nlohmann::ordered_json e;
    e["id"] = scene_id(i);
    e["seed"] = per[i].seed;
    e["objects"] = per[i].counts;
    entries.push_back(std::move(e));
    for (std::size_t c = 0; c < nc; ++c) summary.class_counts[c] += per[i].counts[c];
    summary.omitted_obstacles += per[i].log.size();
    for (const std::string& l : per[i].log) log_text += l + "\n";
    if (options.drift) provenance_text += per[i].provenance + "\n";
  }
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < nc; ++c) counts[options.registry.names()[c]] = summary.class_counts[c];
  manifest["class_counts"] = counts;
  manifest["omitted_obstacles"] = summary.omitted_obstacles;
  manifest["images"] = entries;
  io::write_text(options.out_root / "manifest.json", manifest.dump(2) + "\n");
  io::write_text(options.out_root / "generation.log", log_text);
  if (options.drift) io::write_text(options.out_root / "provenance.jsonl", provenance_text);

  DatasetConfig cfg;
  cfg.root_path = ".";
  for (Split s : kAllSplits) cfg.split_paths[s] = "images";
  cfg.classes = options.registry;
  io::write_text(options.out_root / "data.yaml", serialize_dataset_config(cfg));
  return summary;
}

// ---------------------------------------------------------------------------
// Reference detector

namespace {

int signature(Rgb c, const DetectorConfig& cfg) {
  const HsvPixel p = rgb_to_hsv(c);
  if (p.s < cfg.min_saturation || p.v < cfg.min_value) return -1;
  if (p.h >= 340.0 || p.h < 12.0) return kBarrier;
  if (p.h >= 12.0 && p.h < 34.0) return kCone;
  if (p.h >= 36.0 && p.h < 58.0) return kBeacon;
  return -1;
}

}  // namespace

std::vector<eval::Prediction> reference_detector(const Rgb8Image& image, const DetectorConfig& config) {
  const int w = image.width();
  const int h = image.height();
  const auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x); };
  std::vector<int> label(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  Rgb last = image.at(0, 0);
  int last_label = signature(last, config);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Rgb c = image.at(x, y);
      if (!(c == last)) {
        last = c;
        last_label = signature(c, config);
      }
      label[idx(x, y)] = last_label;
    }
  }
  std::vector<bool> seen(label.size(), false);
  std::vector<eval::Prediction> out;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int cls = label[idx(x, y)];
      if (cls < 0 || seen[idx(x, y)]) continue;
      std::size_t area = 0;
      int x0 = x, x1 = x, y0 = y, y1 = y;
      stack.assign(1, {x, y});
      seen[idx(x, y)] = true;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++area;
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t k = idx(nx, ny);
            if (seen[k] || label[k] != cls) continue;
            seen[k] = true;
            stack.emplace_back(nx, ny);
          }
        }
      }
      if (area < config.min_component_pixels) continue;
      PixelBBox box{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1),
                    static_cast<double>(y1 + 1)};
      if (cls == kBeacon) {
        // The post is colorless: extend the disc by the canonical post length.
        box.ymax = std::min<double>(h, box.ymax + std::round(kPostToDisc * box.height()));
      }
      eval::Prediction p;
      p.class_id = cls;
      p.bbox = to_norm(box, w, h);
      p.confidence = std::min(1.0, static_cast<double>(area) / config.expected_min_area);
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace czforge::synth
