#pragma once

#include <optional>
#include <vector>

#include "render/camera.h"
#include "render/view.h"

namespace tritex {

struct VolumeRenderOptions {
  int n_samples = 32;
  DensityParams density;
  Color background{1.0, 1.0, 1.0};
  bool jitter = true;          // stratified per-ray jitter; midpoints when off
  uint64_t jitter_seed = 0;    // split per pixel, schedule independent
  bool with_depth = false;
};

// Per-ray render of a pixel subset (loss-side usage; avoids building images).
struct RayBatch {
  std::vector<int64_t> pixels;  // rays that hit the unit box, as row*W+col
  Tensor opacity;               // [M]
  Tensor rgb;                   // [M,3], composited over background
  Tensor depth;                 // [M] expected termination distance (optional)
};

RayBatch volume_render_rays(const SdfField& sdf, const RgbField& rgb, const Camera& cam,
                            const VolumeRenderOptions& opts,
                            const std::vector<int64_t>& pixel_ids);

// Full-image volume rendering; rays that miss the bounding box get opacity 0
// and the background color.
RenderedView volume_render(const SdfField& sdf, const RgbField& rgb, const Camera& cam,
                           const VolumeRenderOptions& opts);

}  // namespace tritex
