#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "czforge/annotations.hpp"
#include "czforge/imaging.hpp"

namespace czforge::augment {

// Photometric ops. None of these touch annotations.
struct Brightness { double gain = 1.0; };          // out = in * gain
struct Contrast { double factor = 1.0; };          // out = (in - 128) * factor + 128
struct Saturation { double factor = 1.0; };        // HSV s *= factor
struct HueShift { double degrees = 0.0; };         // HSV h += degrees (mod 360)
struct GaussianNoise {
  double sigma = 0.0;  // intensity units, 0-255 scale
  std::uint64_t seed = 0;
};
struct GaussianBlur { double sigma = 0.0; };       // pixels

// Geometric ops. Boxes are co-transformed.
struct HFlip {};
struct VFlip {};
struct Rotate { double degrees = 0.0; };           // about the center, counter-clockwise on screen
struct Shear { double kx = 0.0; double ky = 0.0; };  // about the center
struct ScaleTranslate {
  double sx = 1.0;
  double sy = 1.0;
  double tx = 0.0;  // fraction of width
  double ty = 0.0;  // fraction of height
};

using AugmentOp = std::variant<Brightness, Contrast, Saturation, HueShift, GaussianNoise, GaussianBlur,
                               HFlip, VFlip, Rotate, Shear, ScaleTranslate>;

inline constexpr Rgb kDefaultFill{114, 114, 114};
inline constexpr double kDefaultMinVisibility = 0.3;

std::string_view op_name(const AugmentOp& op) noexcept;
bool is_photometric(const AugmentOp& op) noexcept;

/// Throws ValidationError when a parameter is outside its declared range.
void validate(const AugmentOp& op);

Rgb8Image apply_photometric(const Rgb8Image& image, const AugmentOp& op);

/// Forward map between continuous pixel coordinates (origin at the top-left
/// corner of pixel (0,0), y down).
struct Affine2D {
  // x' = a*x + b*y + c ; y' = d*x + e*y + f
  double a = 1.0, b = 0.0, c = 0.0;
  double d = 0.0, e = 1.0, f = 0.0;

  std::array<double, 2> apply(double x, double y) const noexcept {
    return {a * x + b * y + c, d * x + e * y + f};
  }
  Affine2D inverse() const;
  bool is_identity() const noexcept;
};

/// Pixel-space forward map of a geometric op on a width x height image.
Affine2D geometric_map(const AugmentOp& op, int width, int height);

struct GeometricResult {
  Rgb8Image image;
  std::vector<Annotation> annotations;
};

/// Resamples the image (bilinear, inverse mapping, `fill` outside the source)
/// and maps every box to the clipped axis-aligned hull of its mapped corners.
/// A box is dropped when the visible part of its hull is below
/// `min_visibility` of the whole hull.
GeometricResult apply_geometric(const Rgb8Image& image, std::span<const Annotation> annotations,
                                const AugmentOp& op, Rgb fill = kDefaultFill,
                                double min_visibility = kDefaultMinVisibility);

/// Box half of apply_geometric. nullopt when the box is dropped.
std::optional<NormBBox> transform_box(const NormBBox& box, const AugmentOp& op, int width, int height,
                                      double min_visibility = kDefaultMinVisibility);

// ---------------------------------------------------------------------------
// Pipelines

/// Parameter sampled uniformly in [lo, hi]; lo == hi is a fixed value.
struct ParamRange {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

struct PipelineStep {
  std::string op;  // brightness, contrast, saturation, hue, noise, blur, hflip, vflip, rotate, shear, scale_translate
  std::vector<ParamRange> params;
  double probability = 1.0;
};

struct AugmentPipeline {
  std::string name;
  std::vector<PipelineStep> steps;
  std::uint64_t master_seed = 0;
  double min_visibility = kDefaultMinVisibility;
  Rgb fill = kDefaultFill;
};

/// Parameter names accepted by `op`, in sampling order. Throws
/// ValidationError for an unknown op name.
const std::vector<std::string>& op_parameters(std::string_view op);

/// Checks op names, parameter names and ranges, probabilities.
void validate(const AugmentPipeline& pipeline);

/// Parses a pipeline description in the key:value dialect.
AugmentPipeline parse_pipeline(std::string_view text);
std::string serialize_pipeline(const AugmentPipeline& pipeline);

/// Built-in drift presets: light_drift, heavy_drift.
AugmentPipeline preset(std::string_view name, std::uint64_t master_seed = 0);
std::vector<std::string> preset_names();

struct StepRecord {
  AugmentOp op;  // with the parameters that were sampled
  bool applied = false;
};

struct AugmentProvenance {
  std::string image_id;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
};

struct AugmentResult {
  Rgb8Image image;
  std::vector<Annotation> annotations;
  AugmentProvenance provenance;
};

/// Per-image seed: stable hash of (master_seed, image_id).
std::uint64_t image_seed(std::uint64_t master_seed, std::string_view image_id) noexcept;

/// Runs the steps in order. Each step draws its firing variate and then all
/// its parameters from the per-image stream whether or not it fires, so the
/// draws of later steps never depend on earlier outcomes.
AugmentResult apply_pipeline(const Rgb8Image& image, std::span<const Annotation> annotations,
                             const AugmentPipeline& pipeline, std::string_view image_id);

/// Re-applies a recorded provenance.
AugmentResult replay(const Rgb8Image& image, std::span<const Annotation> annotations,
                     const AugmentProvenance& provenance, double min_visibility = kDefaultMinVisibility,
                     Rgb fill = kDefaultFill);

/// One JSON object per line.
std::string provenance_to_json(const AugmentProvenance& provenance);
AugmentProvenance provenance_from_json(std::string_view line);

}  // namespace czforge::augment
