#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "czforge/annotations.hpp"
#include "czforge/imaging.hpp"
#include "czforge/random.hpp"

namespace fixture {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    const auto stamp = czforge::derive_seed(reinterpret_cast<std::uintptr_t>(this), ++counter);
    path_ = fs::temp_directory_path() / ("czforge-" + tag + "-" + std::to_string(stamp % 1000000007ULL));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& sub) const { return path_ / sub; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Box whose corners sit on a 6-decimal grid so it survives serialization.
inline czforge::NormBBox random_box(czforge::Rng& rng) {
  auto q = [](double v) { return static_cast<double>(static_cast<long long>(v * 1e6 + 0.5)) / 1e6; };
  const double w = q(rng.uniform(0.001, 0.6));
  const double h = q(rng.uniform(0.001, 0.6));
  const double cx = q(rng.uniform(w / 2, 1.0 - w / 2));
  const double cy = q(rng.uniform(h / 2, 1.0 - h / 2));
  return {cx, cy, w, h};
}

inline std::vector<czforge::Annotation> random_annotations(czforge::Rng& rng, int max_count, int num_classes) {
  std::vector<czforge::Annotation> out(static_cast<std::size_t>(rng.uniform_int(0, max_count)));
  for (auto& a : out) {
    a.class_id = rng.uniform_int(0, num_classes - 1);
    a.bbox = random_box(rng);
  }
  return out;
}

/// Writes a small solid PNG.
inline void write_png(const fs::path& p, int w = 8, int h = 8, czforge::Rgb fill = {90, 90, 90}) {
  fs::create_directories(p.parent_path());
  czforge::save_image(czforge::Rgb8Image(w, h, fill), p);
}

/// Per-class object counts, registry order, for one split.
using SplitCounts = std::vector<std::size_t>;

/// Dataset in the standard split layout whose class instance counts equal
/// `counts[split][class]`. Objects are packed up to `per_image` per image,
/// one class per image. `names` become the data.yaml registry.
inline void build_counted_dataset(const fs::path& root, const std::vector<std::string>& names,
                                  const std::array<SplitCounts, 3>& counts, std::size_t per_image = 8) {
  std::string yaml = "path: .\ntrain: images/train\nval: images/val\ntest: images/test\nnames:\n";
  for (std::size_t i = 0; i < names.size(); ++i) yaml += "  " + std::to_string(i) + ": " + names[i] + "\n";
  write_file(root / "data.yaml", yaml);
  const std::array<std::string, 3> splits{"train", "val", "test"};
  const czforge::Rgb8Image tile(8, 8, czforge::Rgb{60, 60, 60});
  for (std::size_t s = 0; s < 3; ++s) {
    fs::create_directories(root / "images" / splits[s]);
    fs::create_directories(root / "labels" / splits[s]);
    std::size_t image = 0;
    for (std::size_t c = 0; c < names.size(); ++c) {
      std::size_t left = counts[s][c];
      while (left > 0) {
        const std::size_t n = std::min(left, per_image);
        left -= n;
        std::vector<czforge::Annotation> anns;
        for (std::size_t k = 0; k < n; ++k) {
          anns.push_back({static_cast<int>(c), {0.05 + 0.1 * static_cast<double>(k), 0.5, 0.05, 0.1}});
        }
        char stem[32];
        std::snprintf(stem, sizeof stem, "img_%05zu", image++);
        czforge::save_image(tile, root / "images" / splits[s] / (std::string(stem) + ".png"));
        write_file(root / "labels" / splits[s] / (std::string(stem) + ".txt"), czforge::serialize_yolo_label(anns));
      }
    }
  }
}

}  // namespace fixture
