#include "czforge/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "czforge/error.hpp"

namespace czforge {

Rgb8Image::Rgb8Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ValidationError("image dimensions must be positive");
  pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

Rgb8Image::Rgb8Image(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw ValidationError("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw ValidationError("pixel buffer size does not match dimensions");
  }
}

std::uint8_t clamp_u8(double value) noexcept {
  if (!(value > 0.0)) return 0;  // also maps NaN to 0
  if (value >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(value));
}

HsvPixel rgb_to_hsv(Rgb pixel) noexcept {
  const double r = pixel.r / 255.0;
  const double g = pixel.g / 255.0;
  const double b = pixel.b / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  HsvPixel out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  if (delta > 0.0) {
    double h = 0.0;
    if (pixel.r >= pixel.g && pixel.r >= pixel.b) {
      h = 60.0 * ((g - b) / delta);
    } else if (pixel.g >= pixel.b) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
  }
  return out;
}

Rgb hsv_to_rgb(const HsvPixel& pixel) noexcept {
  double h = std::isfinite(pixel.h) ? std::fmod(pixel.h, 360.0) : 0.0;
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h = 0.0;
  const double s = std::clamp(pixel.s, 0.0, 1.0);
  const double v = std::clamp(pixel.v, 0.0, 1.0);
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0.0, g = 0.0, b = 0.0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {clamp_u8((r + m) * 255.0), clamp_u8((g + m) * 255.0), clamp_u8((b + m) * 255.0)};
}

// ---------------------------------------------------------------------------
// PPM (P6, maxval 255)

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> data) : data_(data) {}

  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      const char c = static_cast<char>(data_[pos_]);
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long number() {
    skip_space_and_comments();
    long v = 0;
    std::size_t digits = 0;
    while (pos_ < data_.size() && data_[pos_] >= '0' && data_[pos_] <= '9') {
      v = v * 10 + (data_[pos_] - '0');
      if (v > 1'000'000) throw DataError("PPM header value too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw DataError(pos_ >= data_.size() ? "truncated file" : "malformed PPM header");
    return v;
  }

  std::size_t pos() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

bool is_png(std::span<const std::uint8_t> data) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  return data.size() >= 8 && std::memcmp(data.data(), kSig, 8) == 0;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

struct PngHeader {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

PngHeader png_header(std::span<const std::uint8_t> data) {
  if (!is_png(data)) throw DataError("not a PNG file");
  if (data.size() < 33) throw DataError("truncated file");
  if (std::memcmp(data.data() + 12, "IHDR", 4) != 0) throw DataError("malformed PNG: missing IHDR");
  PngHeader h;
  h.width = static_cast<int>(be32(data.data() + 16));
  h.height = static_cast<int>(be32(data.data() + 20));
  h.bit_depth = data[24];
  h.color_type = data[25];
  if (h.width <= 0 || h.height <= 0) throw DataError("malformed PNG: bad dimensions");
  return h;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return data;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

Rgb8Image decode_ppm(std::span<const std::uint8_t> data) {
  if (data.size() < 2 || data[0] != 'P' || data[1] != '6') throw DataError("not a binary PPM (P6) file");
  HeaderReader reader(data.subspan(2));
  const long width = reader.number();
  const long height = reader.number();
  const long maxval = reader.number();
  if (width <= 0 || height <= 0) throw DataError("PPM dimensions must be positive");
  if (maxval != 255) throw DataError("unsupported bit depth: PPM maxval must be 255");
  const std::size_t body = 2 + reader.pos() + 1;  // exactly one whitespace byte follows maxval
  const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (data.size() < body || data.size() - body < need) throw DataError("truncated file");
  std::vector<std::uint8_t> pixels(data.begin() + static_cast<std::ptrdiff_t>(body),
                                   data.begin() + static_cast<std::ptrdiff_t>(body + need));
  return Rgb8Image(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

std::vector<std::uint8_t> encode_ppm(const Rgb8Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.bytes().begin(), image.bytes().end());
  return out;
}

Rgb8Image decode_png(std::span<const std::uint8_t> data) {
  const PngHeader header = png_header(data);
  if (header.bit_depth != 8) throw DataError("unsupported bit depth " + std::to_string(header.bit_depth));
  if (header.color_type != PNG_COLOR_TYPE_RGB && header.color_type != PNG_COLOR_TYPE_RGB_ALPHA) {
    throw DataError("unsupported color type " + std::to_string(header.color_type));
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, data.data(), data.size())) {
    throw DataError(std::string("malformed PNG: ") + img.message);
  }
  // Read RGBA and drop the alpha channel ourselves: asking libpng for RGB
  // would composite over a background instead.
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgba.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError(msg.find("EOF") != std::string::npos || msg.find("truncat") != std::string::npos ||
                            msg.find("end of data") != std::string::npos
                        ? "truncated file"
                        : "malformed PNG: " + msg);
  }
  std::vector<std::uint8_t> pixels(rgba.size() / 4 * 3);
  for (std::size_t i = 0, j = 0; i < rgba.size(); i += 4, j += 3) {
    pixels[j] = rgba[i];
    pixels[j + 1] = rgba[i + 1];
    pixels[j + 2] = rgba[i + 2];
  }
  return Rgb8Image(static_cast<int>(img.width), static_cast<int>(img.height), std::move(pixels));
}

std::vector<std::uint8_t> encode_png(const Rgb8Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, image.bytes().data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.bytes().data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

Rgb8Image load_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> data = read_bytes(path);
  try {
    if (is_png(data)) return decode_png(data);
    return decode_ppm(data);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_image(const Rgb8Image& image, const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    write_bytes(path, encode_png(image));
  } else if (ext == ".ppm") {
    write_bytes(path, encode_ppm(image));
  } else {
    throw ValidationError("unsupported image extension '" + ext + "' (use .png or .ppm)");
  }
}

ImageSize read_image_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> head(512);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  try {
    if (is_png(head)) {
      const PngHeader h = png_header(head);
      return {h.width, h.height};
    }
    if (head.size() < 2 || head[0] != 'P' || head[1] != '6') throw DataError("not a PNG or P6 PPM file");
    HeaderReader reader{std::span<const std::uint8_t>(head).subspan(2)};
    const long w = reader.number();
    const long h = reader.number();
    if (w <= 0 || h <= 0) throw DataError("PPM dimensions must be positive");
    return {static_cast<int>(w), static_cast<int>(h)};
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace czforge
