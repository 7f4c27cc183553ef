#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace czforge {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

/// Packed row-major 8-bit RGB buffer, no padding.
class Rgb8Image {
 public:
  Rgb8Image() = default;
  /// Throws ValidationError for non-positive dimensions.
  Rgb8Image(int width, int height, Rgb fill = {});
  /// Adopts `pixels`, which must hold exactly width*height*3 bytes.
  Rgb8Image(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  Rgb at(int x, int y) const noexcept {
    const std::uint8_t* p = &pixels_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    std::uint8_t* p = &pixels_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  std::uint8_t* row(int y) noexcept { return pixels_.data() + offset(0, y); }
  const std::uint8_t* row(int y) const noexcept { return pixels_.data() + offset(0, y); }

  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  bool operator==(const Rgb8Image&) const = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Hue in degrees [0,360), saturation and value in [0,1].
struct HsvPixel {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

HsvPixel rgb_to_hsv(Rgb pixel) noexcept;
Rgb hsv_to_rgb(const HsvPixel& pixel) noexcept;

/// Rounds half away from zero and clamps into [0,255].
std::uint8_t clamp_u8(double value) noexcept;

// File I/O. Format is chosen from the extension (.png, .ppm).
Rgb8Image load_image(const std::filesystem::path& path);
void save_image(const Rgb8Image& image, const std::filesystem::path& path);

Rgb8Image decode_ppm(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> encode_ppm(const Rgb8Image& image);
Rgb8Image decode_png(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> encode_png(const Rgb8Image& image);

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Reads only the header.
ImageSize read_image_size(const std::filesystem::path& path);

}  // namespace czforge
