#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "czforge/annotations.hpp"
#include "czforge/augment.hpp"
#include "czforge/eval.hpp"
#include "czforge/imaging.hpp"

namespace czforge::synth {

struct ObstacleSpec {
  ClassId class_id = 0;
  /// Normalized depth in (0,1]; apparent size scales with 1/distance.
  double distance = 0.5;
  /// -1 left road edge, 0 center, +1 right road edge.
  double lateral = 0.0;
};

struct SceneSpec {
  int width = 640;
  int height = 640;
  double horizon_frac = 0.4;
  std::vector<ObstacleSpec> obstacles;
  Rgb sky{110, 160, 215};
  Rgb road{92, 92, 96};
  Rgb ground{76, 122, 58};
  std::uint64_t seed = 0;
};

struct MaskRun {
  int y = 0;
  int x0 = 0;  // inclusive
  int x1 = 0;  // exclusive

  bool operator==(const MaskRun&) const = default;
};

/// Pixels drawn for one obstacle, as row runs in scan order.
struct ObjectMask {
  std::size_t obstacle_index = 0;
  ClassId class_id = 0;
  std::vector<MaskRun> runs;

  std::size_t area() const noexcept;
  bool contains(int x, int y) const noexcept;
};

struct RenderedScene {
  Rgb8Image image;
  /// annotations[i] is the tight box of masks[i].
  std::vector<Annotation> annotations;
  std::vector<ObjectMask> masks;
  /// Obstacles omitted because they project to no visible pixels.
  std::vector<std::string> log;
};

/// Unclipped screen footprint of an obstacle, in pixels.
PixelBBox obstacle_footprint(const SceneSpec& spec, const ObstacleSpec& obstacle);

/// Throws ValidationError for bad dimensions, horizon or obstacle parameters.
RenderedScene render_scene(const SceneSpec& spec);

struct SceneDistribution {
  int width = 640;
  int height = 640;
  int min_obstacles = 1;
  int max_obstacles = 4;
  double min_distance = 0.12;
  double max_distance = 0.45;
  double min_horizon = 0.35;
  double max_horizon = 0.45;
  /// Reject placements whose footprints touch another obstacle's.
  bool allow_overlap = false;
  std::size_t num_classes = 3;
};

SceneSpec sample_scene(const SceneDistribution& distribution, std::uint64_t seed);

struct GenerateOptions {
  std::size_t count = 0;
  SceneDistribution distribution;
  std::optional<augment::AugmentPipeline> drift;
  std::filesystem::path out_root;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  ClassRegistry registry = ClassRegistry::construction_zone();
};

struct GenerateSummary {
  std::size_t images = 0;
  std::vector<std::size_t> class_counts;
  std::size_t omitted_obstacles = 0;
};

/// Writes images/*.png, labels/*.txt, data.yaml, manifest.json and
/// generation.log (plus provenance.jsonl when drift is set) under out_root.
/// out_root must exist and be empty.
GenerateSummary generate_dataset(const GenerateOptions& options);

/// Stem of the i-th generated image.
std::string scene_id(std::size_t index);

struct DetectorConfig {
  double min_saturation = 0.45;
  double min_value = 0.35;
  /// Components with fewer pixels are ignored.
  std::size_t min_component_pixels = 4;
  /// Component area (pixels) that earns confidence 1.
  double expected_min_area = 120.0;
};

/// Hue-window segmentation of the canonical obstacle colors followed by
/// 8-connected components; one prediction per component.
std::vector<eval::Prediction> reference_detector(const Rgb8Image& image, const DetectorConfig& config = {});

}  // namespace czforge::synth
