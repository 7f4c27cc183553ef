#include "czforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "json.hpp"

#include "czforge/error.hpp"
#include "czforge/kvconfig.hpp"
#include "czforge/random.hpp"

namespace czforge::augment {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

bool finite(double v) { return std::isfinite(v); }

// Pointwise per-channel lookup tables for the affine photometric ops.
Rgb8Image apply_lut(const Rgb8Image& image, const std::array<std::uint8_t, 256>& lut) {
  Rgb8Image out = image;
  for (std::uint8_t& b : out.bytes()) b = lut[b];
  return out;
}

template <typename Fn>
Rgb8Image map_hsv(const Rgb8Image& image, Fn&& fn) {
  Rgb8Image out = image;
  auto bytes = out.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    HsvPixel p = rgb_to_hsv({bytes[i], bytes[i + 1], bytes[i + 2]});
    fn(p);
    const Rgb c = hsv_to_rgb(p);
    bytes[i] = c.r;
    bytes[i + 1] = c.g;
    bytes[i + 2] = c.b;
  }
  return out;
}

Rgb8Image gaussian_noise(const Rgb8Image& image, const GaussianNoise& op) {
  if (op.sigma == 0.0) return image;
  Rgb8Image out = image;
  Rng rng(op.seed);
  for (std::uint8_t& b : out.bytes()) b = clamp_u8(b + op.sigma * rng.normal());
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

Rgb8Image gaussian_blur(const Rgb8Image& image, double sigma) {
  if (sigma == 0.0) return image;
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = image.width();
  const int h = image.height();
  const std::size_t row_len = static_cast<std::size_t>(w) * 3;
  std::vector<double> tmp(row_len * static_cast<std::size_t>(h));

  // Horizontal pass over a border-replicated copy of each row.
  std::vector<double> padded(static_cast<std::size_t>(w + 2 * radius) * 3);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* src = image.row(y);
    for (int x = -radius; x < w + radius; ++x) {
      const std::uint8_t* p = src + static_cast<std::size_t>(std::clamp(x, 0, w - 1)) * 3;
      double* q = padded.data() + static_cast<std::size_t>(x + radius) * 3;
      q[0] = p[0];
      q[1] = p[1];
      q[2] = p[2];
    }
    double* dst = tmp.data() + static_cast<std::size_t>(y) * row_len;
    std::fill(dst, dst + row_len, 0.0);
    for (int k = 0; k <= 2 * radius; ++k) {
      const double wt = kernel[static_cast<std::size_t>(k)];
      const double* s = padded.data() + static_cast<std::size_t>(k) * 3;
      for (std::size_t i = 0; i < row_len; ++i) dst[i] += wt * s[i];
    }
  }

  // Vertical pass.
  Rgb8Image out(w, h);
  std::vector<double> acc(row_len);
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int k = -radius; k <= radius; ++k) {
      const int sy = std::clamp(y + k, 0, h - 1);
      const double wt = kernel[static_cast<std::size_t>(k + radius)];
      const double* src = tmp.data() + static_cast<std::size_t>(sy) * row_len;
      for (std::size_t i = 0; i < row_len; ++i) acc[i] += wt * src[i];
    }
    std::uint8_t* dst = out.row(y);
    for (std::size_t i = 0; i < row_len; ++i) dst[i] = clamp_u8(acc[i]);
  }
  return out;
}

Rgb8Image resample(const Rgb8Image& image, const Affine2D& forward, Rgb fill) {
  const Affine2D inv = forward.inverse();
  const int w = image.width();
  const int h = image.height();
  Rgb8Image out(w, h, fill);
  for (int y = 0; y < h; ++y) {
    std::uint8_t* dst = out.row(y);
    for (int x = 0; x < w; ++x) {
      const auto [px, py] = inv.apply(x + 0.5, y + 0.5);
      if (!(px >= 0.0 && px <= w && py >= 0.0 && py <= h)) continue;
      const double u = px - 0.5;
      const double v = py - 0.5;
      const double fu = std::floor(u);
      const double fv = std::floor(v);
      const double ax = u - fu;
      const double ay = v - fv;
      const int x0 = std::clamp(static_cast<int>(fu), 0, w - 1);
      const int x1 = std::clamp(static_cast<int>(fu) + 1, 0, w - 1);
      const int y0 = std::clamp(static_cast<int>(fv), 0, h - 1);
      const int y1 = std::clamp(static_cast<int>(fv) + 1, 0, h - 1);
      const std::uint8_t* r0 = image.row(y0);
      const std::uint8_t* r1 = image.row(y1);
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - ax) * r0[x0 * 3 + c] + ax * r0[x1 * 3 + c];
        const double bottom = (1.0 - ax) * r1[x0 * 3 + c] + ax * r1[x1 * 3 + c];
        dst[x * 3 + c] = clamp_u8((1.0 - ay) * top + ay * bottom);
      }
    }
  }
  return out;
}

Rgb8Image flip(const Rgb8Image& image, bool horizontal) {
  const int w = image.width();
  const int h = image.height();
  Rgb8Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* src = image.row(horizontal ? y : h - 1 - y);
    std::uint8_t* dst = out.row(y);
    if (!horizontal) {
      std::copy(src, src + static_cast<std::size_t>(w) * 3, dst);
      continue;
    }
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = src + static_cast<std::size_t>(w - 1 - x) * 3;
      dst[x * 3] = p[0];
      dst[x * 3 + 1] = p[1];
      dst[x * 3 + 2] = p[2];
    }
  }
  return out;
}

/// Clips the hull [x0,x1]x[y0,y1] (normalized) to the unit square and applies
/// the visibility rule.
std::optional<NormBBox> clip_hull(double x0, double y0, double x1, double y1, double min_visibility) {
  const double hull_area = (x1 - x0) * (y1 - y0);
  if (!(hull_area > 0.0)) return std::nullopt;
  const double cx0 = std::clamp(x0, 0.0, 1.0);
  const double cx1 = std::clamp(x1, 0.0, 1.0);
  const double cy0 = std::clamp(y0, 0.0, 1.0);
  const double cy1 = std::clamp(y1, 0.0, 1.0);
  const double visible = (cx1 - cx0) * (cy1 - cy0);
  if (!(visible > 0.0) || visible < min_visibility * hull_area) return std::nullopt;
  NormBBox out = NormBBox::from_corners(cx0, cy0, cx1, cy1);
  out.w = std::min(out.w, 1.0);
  out.h = std::min(out.h, 1.0);
  if (!out.valid()) return std::nullopt;
  return out;
}

}  // namespace

std::string_view op_name(const AugmentOp& op) noexcept {
  return std::visit(Overloaded{
                        [](const Brightness&) { return std::string_view("brightness"); },
                        [](const Contrast&) { return std::string_view("contrast"); },
                        [](const Saturation&) { return std::string_view("saturation"); },
                        [](const HueShift&) { return std::string_view("hue"); },
                        [](const GaussianNoise&) { return std::string_view("noise"); },
                        [](const GaussianBlur&) { return std::string_view("blur"); },
                        [](const HFlip&) { return std::string_view("hflip"); },
                        [](const VFlip&) { return std::string_view("vflip"); },
                        [](const Rotate&) { return std::string_view("rotate"); },
                        [](const Shear&) { return std::string_view("shear"); },
                        [](const ScaleTranslate&) { return std::string_view("scale_translate"); },
                    },
                    op);
}

bool is_photometric(const AugmentOp& op) noexcept { return op.index() <= 5; }

void validate(const AugmentOp& op) {
  std::visit(Overloaded{
                 [](const Brightness& o) { require(o.gain >= 0.0 && o.gain <= 4.0, "brightness gain must be in [0,4]"); },
                 [](const Contrast& o) { require(o.factor >= 0.0 && o.factor <= 4.0, "contrast factor must be in [0,4]"); },
                 [](const Saturation& o) {
                   require(o.factor >= 0.0 && o.factor <= 4.0, "saturation factor must be in [0,4]");
                 },
                 [](const HueShift& o) { require(finite(o.degrees), "hue shift must be finite"); },
                 [](const GaussianNoise& o) { require(o.sigma >= 0.0 && o.sigma <= 255.0, "noise sigma must be in [0,255]"); },
                 [](const GaussianBlur& o) { require(o.sigma >= 0.0 && o.sigma <= 50.0, "blur sigma must be in [0,50]"); },
                 [](const HFlip&) {},
                 [](const VFlip&) {},
                 [](const Rotate& o) { require(finite(o.degrees), "rotation angle must be finite"); },
                 [](const Shear& o) {
                   require(std::fabs(o.kx) <= 1.0 && std::fabs(o.ky) <= 1.0, "shear factors must satisfy |k| <= 1");
                   require(std::fabs(1.0 - o.kx * o.ky) > 1e-6, "shear is singular (kx*ky == 1)");
                 },
                 [](const ScaleTranslate& o) {
                   require(o.sx > 0.0 && o.sx <= 4.0 && o.sy > 0.0 && o.sy <= 4.0, "scale factors must be in (0,4]");
                   require(std::fabs(o.tx) <= 1.0 && std::fabs(o.ty) <= 1.0, "translation must be in [-1,1]");
                 },
             },
             op);
}

Rgb8Image apply_photometric(const Rgb8Image& image, const AugmentOp& op) {
  validate(op);
  if (!is_photometric(op)) throw ValidationError(std::string(op_name(op)) + " is not a photometric op");
  return std::visit(
      Overloaded{
          [&](const Brightness& o) {
            std::array<std::uint8_t, 256> lut{};
            for (int v = 0; v < 256; ++v) lut[v] = clamp_u8(v * o.gain);
            return apply_lut(image, lut);
          },
          [&](const Contrast& o) {
            std::array<std::uint8_t, 256> lut{};
            for (int v = 0; v < 256; ++v) lut[v] = clamp_u8((v - 128) * o.factor + 128.0);
            return apply_lut(image, lut);
          },
          [&](const Saturation& o) {
            if (o.factor == 1.0) return image;
            return map_hsv(image, [&](HsvPixel& p) { p.s = std::min(1.0, p.s * o.factor); });
          },
          [&](const HueShift& o) {
            double shift = std::fmod(o.degrees, 360.0);
            if (shift < 0.0) shift += 360.0;
            if (shift == 0.0) return image;
            return map_hsv(image, [&](HsvPixel& p) {
              p.h += shift;
              if (p.h >= 360.0) p.h -= 360.0;
            });
          },
          [&](const GaussianNoise& o) { return gaussian_noise(image, o); },
          [&](const GaussianBlur& o) { return gaussian_blur(image, o.sigma); },
          [&](const auto&) { return image; },
      },
      op);
}

Affine2D Affine2D::inverse() const {
  const double det = a * e - b * d;
  if (std::fabs(det) < 1e-12) throw ValidationError("affine map is singular");
  Affine2D inv;
  inv.a = e / det;
  inv.b = -b / det;
  inv.d = -d / det;
  inv.e = a / det;
  inv.c = -(inv.a * c + inv.b * f);
  inv.f = -(inv.d * c + inv.e * f);
  return inv;
}

bool Affine2D::is_identity() const noexcept {
  return a == 1.0 && b == 0.0 && c == 0.0 && d == 0.0 && e == 1.0 && f == 0.0;
}

Affine2D geometric_map(const AugmentOp& op, int width, int height) {
  const double w = width;
  const double h = height;
  const double ox = w / 2.0;
  const double oy = h / 2.0;
  // Linear part L about the center (ox, oy) plus an extra offset (tx, ty).
  auto about_center = [&](double a, double b, double d, double e, double tx, double ty) {
    Affine2D m;
    m.a = a;
    m.b = b;
    m.d = d;
    m.e = e;
    m.c = ox - (a * ox + b * oy) + tx;
    m.f = oy - (d * ox + e * oy) + ty;
    return m;
  };
  return std::visit(Overloaded{
                        [&](const HFlip&) { return about_center(-1, 0, 0, 1, 0, 0); },
                        [&](const VFlip&) { return about_center(1, 0, 0, -1, 0, 0); },
                        [&](const Rotate& o) {
                          if (o.degrees == 0.0) return Affine2D{};
                          const double t = o.degrees * std::numbers::pi / 180.0;
                          const double cs = std::cos(t);
                          const double sn = std::sin(t);
                          // Counter-clockwise on screen with y pointing down.
                          return about_center(cs, sn, -sn, cs, 0, 0);
                        },
                        [&](const Shear& o) {
                          if (o.kx == 0.0 && o.ky == 0.0) return Affine2D{};
                          return about_center(1, o.kx, o.ky, 1, 0, 0);
                        },
                        [&](const ScaleTranslate& o) {
                          if (o.sx == 1.0 && o.sy == 1.0 && o.tx == 0.0 && o.ty == 0.0) return Affine2D{};
                          return about_center(o.sx, 0, 0, o.sy, o.tx * w, o.ty * h);
                        },
                        [&](const auto&) { return Affine2D{}; },
                    },
                    op);
}

std::optional<NormBBox> transform_box(const NormBBox& box, const AugmentOp& op, int width, int height,
                                      double min_visibility) {
  if (std::holds_alternative<HFlip>(op)) return NormBBox{1.0 - box.cx, box.cy, box.w, box.h};
  if (std::holds_alternative<VFlip>(op)) return NormBBox{box.cx, 1.0 - box.cy, box.w, box.h};
  if (is_photometric(op)) return box;
  const Affine2D m = geometric_map(op, width, height);
  if (m.is_identity()) return box;
  if (const auto* st = std::get_if<ScaleTranslate>(&op)) {
    // Axis-aligned: exact in normalized coordinates.
    const double x0 = 0.5 + st->sx * (box.x_min() - 0.5) + st->tx;
    const double x1 = 0.5 + st->sx * (box.x_max() - 0.5) + st->tx;
    const double y0 = 0.5 + st->sy * (box.y_min() - 0.5) + st->ty;
    const double y1 = 0.5 + st->sy * (box.y_max() - 0.5) + st->ty;
    return clip_hull(x0, y0, x1, y1, min_visibility);
  }
  const PixelBBox p = to_pixel(box, width, height);
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = x0;
  double x1 = -x0;
  double y1 = -x0;
  for (const auto& [cx, cy] : {std::pair{p.xmin, p.ymin}, std::pair{p.xmax, p.ymin}, std::pair{p.xmin, p.ymax},
                               std::pair{p.xmax, p.ymax}}) {
    const auto [qx, qy] = m.apply(cx, cy);
    x0 = std::min(x0, qx);
    x1 = std::max(x1, qx);
    y0 = std::min(y0, qy);
    y1 = std::max(y1, qy);
  }
  return clip_hull(x0 / width, y0 / height, x1 / width, y1 / height, min_visibility);
}

GeometricResult apply_geometric(const Rgb8Image& image, std::span<const Annotation> annotations,
                                const AugmentOp& op, Rgb fill, double min_visibility) {
  validate(op);
  if (is_photometric(op)) throw ValidationError(std::string(op_name(op)) + " is not a geometric op");
  require(min_visibility > 0.0 && min_visibility <= 1.0, "min_visibility must be in (0,1]");
  GeometricResult out;
  const Affine2D m = geometric_map(op, image.width(), image.height());
  if (std::holds_alternative<HFlip>(op)) {
    out.image = flip(image, true);
  } else if (std::holds_alternative<VFlip>(op)) {
    out.image = flip(image, false);
  } else if (m.is_identity()) {
    out.image = image;
  } else {
    out.image = resample(image, m, fill);
  }
  for (const Annotation& a : annotations) {
    if (auto box = transform_box(a.bbox, op, image.width(), image.height(), min_visibility)) {
      out.annotations.push_back({a.class_id, *box});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

struct OpSpec {
  std::vector<std::string> params;
  std::vector<double> identity;
};

const std::map<std::string, OpSpec, std::less<>>& op_table() {
  static const std::map<std::string, OpSpec, std::less<>> table{
      {"brightness", {{"gain"}, {1.0}}},
      {"contrast", {{"factor"}, {1.0}}},
      {"saturation", {{"factor"}, {1.0}}},
      {"hue", {{"degrees"}, {0.0}}},
      {"noise", {{"sigma"}, {0.0}}},
      {"blur", {{"sigma"}, {0.0}}},
      {"hflip", {{}, {}}},
      {"vflip", {{}, {}}},
      {"rotate", {{"degrees"}, {0.0}}},
      {"shear", {{"kx", "ky"}, {0.0, 0.0}}},
      {"scale_translate", {{"sx", "sy", "tx", "ty"}, {1.0, 1.0, 0.0, 0.0}}},
  };
  return table;
}

const OpSpec& op_spec(std::string_view op) {
  const auto& table = op_table();
  auto it = table.find(op);
  if (it == table.end()) {
    std::string known;
    for (const auto& [name, spec] : table) known += (known.empty() ? "" : ", ") + name;
    throw ValidationError("unknown op '" + std::string(op) + "' (known: " + known + ")");
  }
  return it->second;
}

AugmentOp make_op(std::string_view op, const std::vector<double>& v, std::uint64_t noise_seed) {
  if (op == "brightness") return Brightness{v[0]};
  if (op == "contrast") return Contrast{v[0]};
  if (op == "saturation") return Saturation{v[0]};
  if (op == "hue") return HueShift{v[0]};
  if (op == "noise") return GaussianNoise{v[0], noise_seed};
  if (op == "blur") return GaussianBlur{v[0]};
  if (op == "hflip") return HFlip{};
  if (op == "vflip") return VFlip{};
  if (op == "rotate") return Rotate{v[0]};
  if (op == "shear") return Shear{v[0], v[1]};
  if (op == "scale_translate") return ScaleTranslate{v[0], v[1], v[2], v[3]};
  op_spec(op);  // throws
  return HFlip{};
}

/// Full parameter vector for `step` with each value chosen by `pick`.
template <typename Pick>
std::vector<double> step_values(const PipelineStep& step, Pick&& pick) {
  const OpSpec& spec = op_spec(step.op);
  std::vector<double> values = spec.identity;
  for (std::size_t i = 0; i < spec.params.size(); ++i) {
    for (const ParamRange& r : step.params) {
      if (r.name == spec.params[i]) values[i] = pick(r);
    }
  }
  return values;
}

std::vector<std::pair<std::string, double>> op_params(const AugmentOp& op) {
  return std::visit(Overloaded{
                        [](const Brightness& o) { return std::vector<std::pair<std::string, double>>{{"gain", o.gain}}; },
                        [](const Contrast& o) { return std::vector<std::pair<std::string, double>>{{"factor", o.factor}}; },
                        [](const Saturation& o) {
                          return std::vector<std::pair<std::string, double>>{{"factor", o.factor}};
                        },
                        [](const HueShift& o) { return std::vector<std::pair<std::string, double>>{{"degrees", o.degrees}}; },
                        [](const GaussianNoise& o) { return std::vector<std::pair<std::string, double>>{{"sigma", o.sigma}}; },
                        [](const GaussianBlur& o) { return std::vector<std::pair<std::string, double>>{{"sigma", o.sigma}}; },
                        [](const HFlip&) { return std::vector<std::pair<std::string, double>>{}; },
                        [](const VFlip&) { return std::vector<std::pair<std::string, double>>{}; },
                        [](const Rotate& o) { return std::vector<std::pair<std::string, double>>{{"degrees", o.degrees}}; },
                        [](const Shear& o) {
                          return std::vector<std::pair<std::string, double>>{{"kx", o.kx}, {"ky", o.ky}};
                        },
                        [](const ScaleTranslate& o) {
                          return std::vector<std::pair<std::string, double>>{
                              {"sx", o.sx}, {"sy", o.sy}, {"tx", o.tx}, {"ty", o.ty}};
                        },
                    },
                    op);
}

void apply_step(Rgb8Image& image, std::vector<Annotation>& annotations, const AugmentOp& op, double min_visibility,
                Rgb fill) {
  if (is_photometric(op)) {
    image = apply_photometric(image, op);
  } else {
    GeometricResult g = apply_geometric(image, annotations, op, fill, min_visibility);
    image = std::move(g.image);
    annotations = std::move(g.annotations);
  }
}

Rgb parse_fill(const kv::Entry& e) {
  const auto items = kv::to_list(e);
  if (items.size() != 3) throw ParseError("fill must be [r, g, b]", e.line);
  std::array<std::uint8_t, 3> c{};
  for (std::size_t i = 0; i < 3; ++i) {
    const long long v = kv::to_integer({e.key, items[i], e.line});
    if (v < 0 || v > 255) throw ParseError("fill components must be in [0,255]", e.line);
    c[i] = static_cast<std::uint8_t>(v);
  }
  return {c[0], c[1], c[2]};
}

std::string format_number(double v) {
  nlohmann::json j = v;
  return j.dump();
}

}  // namespace

const std::vector<std::string>& op_parameters(std::string_view op) { return op_spec(op).params; }

void validate(const AugmentPipeline& pipeline) {
  require(pipeline.min_visibility > 0.0 && pipeline.min_visibility <= 1.0, "min_visibility must be in (0,1]");
  for (std::size_t i = 0; i < pipeline.steps.size(); ++i) {
    const PipelineStep& step = pipeline.steps[i];
    const std::string where = "step " + std::to_string(i + 1) + " (" + step.op + ")";
    const OpSpec& spec = op_spec(step.op);
    require(step.probability >= 0.0 && step.probability <= 1.0, where + ": probability must be in [0,1]");
    for (const ParamRange& r : step.params) {
      require(std::find(spec.params.begin(), spec.params.end(), r.name) != spec.params.end(),
              where + ": unknown parameter '" + r.name + "'");
      require(finite(r.lo) && finite(r.hi) && r.lo <= r.hi, where + ": parameter '" + r.name + "' range is invalid");
    }
    try {
      validate(make_op(step.op, step_values(step, [](const ParamRange& r) { return r.lo; }), 0));
      validate(make_op(step.op, step_values(step, [](const ParamRange& r) { return r.hi; }), 0));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
}

AugmentPipeline parse_pipeline(std::string_view text) {
  const kv::Document doc = kv::Document::parse(text);
  AugmentPipeline p;
  for (const kv::Node& node : doc.nodes()) {
    if (node.key == "steps") continue;
    if (node.kind != kv::Node::Kind::kScalar) throw ParseError("'" + node.key + "' must be a scalar", node.line);
    const kv::Entry e{node.key, node.scalar, node.line};
    if (node.key == "name") {
      p.name = node.scalar;
    } else if (node.key == "master_seed" || node.key == "seed") {
      p.master_seed = kv::to_u64(e);
    } else if (node.key == "min_visibility") {
      p.min_visibility = kv::to_double(e);
    } else if (node.key == "fill") {
      p.fill = parse_fill(e);
    } else {
      throw ParseError("unknown key '" + node.key + "'", node.line);
    }
  }
  if (const kv::Node* steps = doc.find("steps")) {
    if (steps->kind == kv::Node::Kind::kScalar) throw ParseError("'steps' must be a list", steps->line);
    if (steps->kind == kv::Node::Kind::kMap && !steps->map.empty()) {
      throw ParseError("'steps' must be a list", steps->line);
    }
    for (const kv::Map& item : steps->list) {
      const kv::Entry* op = kv::find(item, "op");
      const std::size_t line = item.empty() ? steps->line : item.front().line;
      if (op == nullptr) throw ParseError("step without 'op'", line);
      PipelineStep step;
      step.op = op->value;
      try {
        op_spec(step.op);
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), op->line);
      }
      for (const kv::Entry& e : item) {
        if (e.key == "op") continue;
        if (e.key == "p" || e.key == "probability") {
          step.probability = kv::to_double(e);
          continue;
        }
        const auto items = kv::to_list(e);
        if (items.size() == 1) {
          const double v = kv::to_double({e.key, items[0], e.line});
          step.params.push_back({e.key, v, v});
        } else if (items.size() == 2) {
          step.params.push_back(
              {e.key, kv::to_double({e.key, items[0], e.line}), kv::to_double({e.key, items[1], e.line})});
        } else {
          throw ParseError("'" + e.key + "' must be a value or a [min, max] range", e.line);
        }
      }
      p.steps.push_back(std::move(step));
    }
  }
  try {
    validate(p);
  } catch (const ValidationError& e) {
    throw DataError(std::string("invalid pipeline: ") + e.what());
  }
  return p;
}

std::string serialize_pipeline(const AugmentPipeline& pipeline) {
  std::string out;
  if (!pipeline.name.empty()) out += "name: " + pipeline.name + "\n";
  out += "master_seed: " + std::to_string(pipeline.master_seed) + "\n";
  out += "min_visibility: " + format_number(pipeline.min_visibility) + "\n";
  out += "fill: [" + std::to_string(pipeline.fill.r) + ", " + std::to_string(pipeline.fill.g) + ", " +
         std::to_string(pipeline.fill.b) + "]\n";
  out += "steps:\n";
  for (const PipelineStep& s : pipeline.steps) {
    out += "  - op: " + s.op + "\n";
    for (const ParamRange& r : s.params) {
      out += "    " + r.name + ": ";
      out += r.lo == r.hi ? format_number(r.lo) : "[" + format_number(r.lo) + ", " + format_number(r.hi) + "]";
      out += "\n";
    }
    out += "    p: " + format_number(s.probability) + "\n";
  }
  return out;
}

AugmentPipeline preset(std::string_view name, std::uint64_t master_seed) {
  AugmentPipeline p;
  p.name = std::string(name);
  p.master_seed = master_seed;
  if (name == "light_drift") {
    p.steps = {
        {"brightness", {{"gain", 0.7, 1.3}}, 0.5}, {"contrast", {{"factor", 0.8, 1.2}}, 0.5},
        {"saturation", {{"factor", 0.7, 1.3}}, 0.5}, {"hue", {{"degrees", -8.0, 8.0}}, 0.5},
        {"blur", {{"sigma", 0.0, 1.0}}, 0.3},        {"noise", {{"sigma", 0.0, 8.0}}, 0.3},
    };
  } else if (name == "heavy_drift") {
    // Low light, defocus, then sensor noise.
    p.steps = {
        {"brightness", {{"gain", 0.4, 0.4}}, 1.0},
        {"blur", {{"sigma", 3.0, 3.0}}, 1.0},
        {"noise", {{"sigma", 25.0, 25.0}}, 1.0},
    };
  } else if (name == "geometric") {
    p.steps = {
        {"hflip", {}, 0.5},
        {"rotate", {{"degrees", -10.0, 10.0}}, 0.3},
        {"shear", {{"kx", -0.1, 0.1}, {"ky", -0.05, 0.05}}, 0.3},
        {"scale_translate", {{"sx", 0.8, 1.2}, {"sy", 0.8, 1.2}, {"tx", -0.1, 0.1}, {"ty", -0.05, 0.05}}, 0.3},
        {"blur", {{"sigma", 0.0, 1.5}}, 0.2},
    };
  } else {
    std::string known;
    for (const std::string& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  return p;
}

std::vector<std::string> preset_names() { return {"light_drift", "heavy_drift", "geometric"}; }

std::uint64_t image_seed(std::uint64_t master_seed, std::string_view image_id) noexcept {
  return derive_seed(master_seed, image_id);
}

AugmentResult apply_pipeline(const Rgb8Image& image, std::span<const Annotation> annotations,
                             const AugmentPipeline& pipeline, std::string_view image_id) {
  validate(pipeline);
  AugmentResult result;
  result.image = image;
  result.annotations.assign(annotations.begin(), annotations.end());
  result.provenance.image_id = std::string(image_id);
  result.provenance.seed = image_seed(pipeline.master_seed, image_id);
  Rng rng(result.provenance.seed);
  for (const PipelineStep& step : pipeline.steps) {
    const bool fire = rng.uniform() < step.probability;
    const std::vector<double> values = step_values(step, [&](const ParamRange& r) {
      const double u = rng.uniform();
      return r.lo == r.hi ? r.lo : r.lo + (r.hi - r.lo) * u;
    });
    const std::uint64_t noise_seed = step.op == "noise" ? rng.next_u64() : 0;
    StepRecord record{make_op(step.op, values, noise_seed), fire};
    if (fire) apply_step(result.image, result.annotations, record.op, pipeline.min_visibility, pipeline.fill);
    result.provenance.steps.push_back(std::move(record));
  }
  return result;
}

AugmentResult replay(const Rgb8Image& image, std::span<const Annotation> annotations,
                     const AugmentProvenance& provenance, double min_visibility, Rgb fill) {
  AugmentResult result;
  result.image = image;
  result.annotations.assign(annotations.begin(), annotations.end());
  result.provenance = provenance;
  for (const StepRecord& step : provenance.steps) {
    if (step.applied) apply_step(result.image, result.annotations, step.op, min_visibility, fill);
  }
  return result;
}

std::string provenance_to_json(const AugmentProvenance& provenance) {
  nlohmann::ordered_json j;
  j["image_id"] = provenance.image_id;
  j["seed"] = provenance.seed;
  j["steps"] = nlohmann::ordered_json::array();
  for (const StepRecord& s : provenance.steps) {
    nlohmann::ordered_json step;
    step["op"] = op_name(s.op);
    step["applied"] = s.applied;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : op_params(s.op)) params[k] = v;
    step["params"] = params;
    if (const auto* n = std::get_if<GaussianNoise>(&s.op)) step["noise_seed"] = n->seed;
    j["steps"].push_back(std::move(step));
  }
  return j.dump();
}

AugmentProvenance provenance_from_json(std::string_view line) {
  AugmentProvenance p;
  try {
    const auto j = nlohmann::json::parse(line);
    p.image_id = j.at("image_id").get<std::string>();
    p.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("steps")) {
      const std::string op = s.at("op").get<std::string>();
      PipelineStep step{op, {}, 1.0};
      for (const auto& [k, v] : s.at("params").items()) step.params.push_back({k, v.get<double>(), v.get<double>()});
      const std::vector<double> values = step_values(step, [](const ParamRange& r) { return r.lo; });
      const std::uint64_t noise_seed = s.contains("noise_seed") ? s.at("noise_seed").get<std::uint64_t>() : 0;
      p.steps.push_back({make_op(op, values, noise_seed), s.at("applied").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed provenance record: ") + e.what());
  } catch (const ValidationError& e) {
    throw DataError(std::string("malformed provenance record: ") + e.what());
  }
  return p;
}

}  // namespace czforge::augment
