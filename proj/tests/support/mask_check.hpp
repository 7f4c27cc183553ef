#pragma once

#include <cstddef>

#include "czforge/augment.hpp"
#include "czforge/synthgen.hpp"

namespace oracle {

struct HullCheck {
  std::size_t pixels = 0;     // mask pixels landing inside the output frame
  std::size_t outside = 0;    // of those, pixels outside their transformed box
  std::size_t dropped = 0;    // boxes removed by the visibility rule
};

/// Maps every pixel center of every object mask through the op and checks
/// it against that object's transformed box.
inline HullCheck check_hulls(const czforge::synth::RenderedScene& scene, const czforge::augment::AugmentOp& op,
                             double min_visibility = czforge::augment::kDefaultMinVisibility) {
  namespace aug = czforge::augment;
  const int w = scene.image.width();
  const int h = scene.image.height();
  const aug::Affine2D m = aug::geometric_map(op, w, h);
  HullCheck out;
  for (std::size_t i = 0; i < scene.masks.size(); ++i) {
    const auto box = aug::transform_box(scene.annotations[i].bbox, op, w, h, min_visibility);
    if (!box) {
      ++out.dropped;
      continue;
    }
    const double x0 = box->x_min() * w, x1 = box->x_max() * w;
    const double y0 = box->y_min() * h, y1 = box->y_max() * h;
    for (const auto& run : scene.masks[i].runs) {
      for (int x = run.x0; x < run.x1; ++x) {
        const auto [px, py] = m.apply(x + 0.5, run.y + 0.5);
        if (px < 0 || py < 0 || px >= w || py >= h) continue;
        ++out.pixels;
        if (px < x0 - 1e-9 || px > x1 + 1e-9 || py < y0 - 1e-9 || py > y1 + 1e-9) ++out.outside;
      }
    }
  }
  return out;
}

}  // namespace oracle
