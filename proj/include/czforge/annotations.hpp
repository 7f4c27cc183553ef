#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace czforge {

using ClassId = int;

/// Ordered id -> name table. Ids are contiguous from 0 and names are unique.
class ClassRegistry {
 public:
  ClassRegistry() = default;
  /// Throws ValidationError when names are empty or duplicated.
  explicit ClassRegistry(std::vector<std::string> names);

  /// {0: cone, 1: barrier, 2: beacon}
  static ClassRegistry construction_zone();

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  bool contains(ClassId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < names_.size();
  }
  const std::string& name(ClassId id) const;
  std::optional<ClassId> find(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool operator==(const ClassRegistry&) const = default;

 private:
  std::vector<std::string> names_;
};

/// Normalized center-format box (YOLO convention).
struct NormBBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x_min() const noexcept { return cx - w / 2.0; }
  double x_max() const noexcept { return cx + w / 2.0; }
  double y_min() const noexcept { return cy - h / 2.0; }
  double y_max() const noexcept { return cy + h / 2.0; }
  double area() const noexcept { return w * h; }

  /// 0 <= cx,cy <= 1 and 0 < w,h <= 1, all finite.
  bool valid() const noexcept;

  static NormBBox from_corners(double x0, double y0, double x1, double y1) noexcept {
    return {(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
  }

  bool operator==(const NormBBox&) const = default;
};

/// Pixel-space box on the half-open grid [xmin,xmax) x [ymin,ymax).
struct PixelBBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const noexcept { return xmax - xmin; }
  double height() const noexcept { return ymax - ymin; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept;

  bool operator==(const PixelBBox&) const = default;
};

NormBBox to_norm(const PixelBBox& box, int width, int height) noexcept;
PixelBBox to_pixel(const NormBBox& box, int width, int height) noexcept;

struct Annotation {
  ClassId class_id = 0;
  NormBBox bbox;

  bool operator==(const Annotation&) const = default;
};

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Annotation> annotations;

  bool operator==(const ImageRecord&) const = default;
};

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };
inline constexpr std::array<Split, 3> kAllSplits{Split::kTrain, Split::kVal, Split::kTest};
std::string_view split_name(Split split) noexcept;
std::optional<Split> parse_split(std::string_view name) noexcept;

struct DatasetConfig {
  std::string root_path;
  std::map<Split, std::string> split_paths;
  ClassRegistry classes;
};

// ---------------------------------------------------------------------------
// YOLO label files

/// Parses one label file. Blank lines are skipped; anything else malformed
/// throws ParseError naming the 1-based line.
std::vector<Annotation> parse_yolo_label(std::string_view text, const ClassRegistry& registry);

/// "class cx cy w h\n" per annotation, coordinates with 6 decimals.
std::string serialize_yolo_label(const std::vector<Annotation>& annotations);

/// Fixed 6-decimal rendering used by every text format we write.
std::string format_fixed6(double value);

// ---------------------------------------------------------------------------
// Dataset config

DatasetConfig parse_dataset_config(std::string_view text);
std::string serialize_dataset_config(const DatasetConfig& config);

// ---------------------------------------------------------------------------
// CVAT for images 1.1

std::vector<ImageRecord> parse_cvat_xml(std::string_view text, const ClassRegistry& registry);

// ---------------------------------------------------------------------------
// Statistics and filtering

struct SplitRecords {
  std::string name;
  std::span<const ImageRecord> records;
};

struct DatasetStats {
  struct Row {
    std::string split;
    std::size_t images = 0;
    /// Instance counts in registry order.
    std::vector<std::size_t> counts;
  };
  std::vector<std::string> class_names;
  std::vector<Row> rows;
  std::vector<std::size_t> totals;
  std::size_t total_images = 0;
};

/// Counts annotation instances per class per split, plus totals.
DatasetStats dataset_stats(std::span<const SplitRecords> splits, const ClassRegistry& registry);

/// Aligned text table with one row per split and one column per class.
std::string render_stats_table(const DatasetStats& stats);

struct FilterResult {
  std::vector<ImageRecord> kept;
  std::vector<ImageRecord> removed;
};

/// Removes records with no boxes or with any box whose w*h exceeds
/// `max_area_frac`. Order is preserved in both partitions.
FilterResult filter_records(const std::vector<ImageRecord>& records, double max_area_frac);

}  // namespace czforge
