#include "render/volume.h"

#include <cmath>
#include <stdexcept>

#include "core/ops.h"

namespace tritex {

void RenderedView::check_valid(const char* op) const {
  if (!rgb.defined() || !opacity.defined())
    throw std::invalid_argument(std::string(op) + ": undefined view tensors");
  const double* o = opacity.data();
  for (int64_t i = 0; i < opacity.numel(); ++i)
    if (!std::isfinite(o[i]) || o[i] < -1e-9 || o[i] > 1.0 + 1e-9)
      throw std::invalid_argument(std::string(op) + ": opacity out of [0,1]");
  const double* c = rgb.data();
  for (int64_t i = 0; i < rgb.numel(); ++i)
    if (!std::isfinite(c[i]) || c[i] < -1e-9 || c[i] > 1.0 + 1e-9)
      throw std::invalid_argument(std::string(op) + ": rgb out of [0,1]");
}

RayBatch volume_render_rays(const SdfField& sdf, const RgbField& rgb, const Camera& cam,
                            const VolumeRenderOptions& opts,
                            const std::vector<int64_t>& pixel_ids) {
  cam.check_valid("volume_render");
  if (opts.n_samples < 2) throw std::invalid_argument("volume_render: n_samples must be >= 2");
  if (!opts.density.valid()) throw std::invalid_argument("volume_render: invalid density params");
  const int64_t ns = opts.n_samples;

  // Collect rays that hit the unit box.
  struct HitRay {
    int64_t pixel;
    Ray ray;
    double t_near, t_far;
  };
  std::vector<HitRay> hits;
  hits.reserve(pixel_ids.size());
  for (int64_t pid : pixel_ids) {
    const Ray r = cam.pixel_ray(pid / cam.width, pid % cam.width);
    double tn, tf;
    if (intersect_unit_box(r, tn, tf)) hits.push_back({pid, r, tn, tf});
  }
  const int64_t m = static_cast<int64_t>(hits.size());

  RayBatch out;
  if (m == 0) {
    out.opacity = Tensor::zeros({0});
    out.rgb = Tensor::zeros({0, 3});
    return out;
  }

  // Stratified sample positions: one sample per equal-width bin. The bin
  // width is the quadrature step, so homogeneous media integrate exactly.
  std::vector<double> pts(m * ns * 3);
  std::vector<double> deltas(m);
  std::vector<double> ts(m * ns);
  Rng base(opts.jitter_seed);
  for (int64_t i = 0; i < m; ++i) {
    const HitRay& h = hits[i];
    const double bin = (h.t_far - h.t_near) / static_cast<double>(ns);
    deltas[i] = bin;
    Rng r = base.split(static_cast<uint64_t>(h.pixel));
    for (int64_t k = 0; k < ns; ++k) {
      const double u = opts.jitter ? r.uniform() : 0.5;
      const double t = h.t_near + (static_cast<double>(k) + u) * bin;
      ts[i * ns + k] = t;
      const Vec3 p = h.ray.origin + h.ray.dir * t;
      double* dst = &pts[(i * ns + k) * 3];
      dst[0] = p.x;
      dst[1] = p.y;
      dst[2] = p.z;
    }
  }

  const FieldQuery q = FieldQuery::of(std::move(pts));
  Tensor sdf_vals = sdf(q);                                       // [m*ns]
  Tensor sigma = sdf_to_density(reshape(sdf_vals, {m, ns}), opts.density);
  Tensor delta = Tensor::from({m, 1}, std::move(deltas));
  Tensor sig_del = mul(sigma, delta);                             // [m,ns]
  Tensor transmittance = exp_(neg(cumsum_exclusive_lastdim(sig_del)));
  Tensor alpha = sub(Tensor::full({m, ns}, 1.0), exp_(neg(sig_del)));
  Tensor weights = mul(transmittance, alpha);                     // [m,ns]
  Tensor opacity = sum_axis(weights, 1);                          // [m]

  Tensor rgb_vals = reshape(rgb(q), {m, ns, 3});
  Tensor w3 = reshape(weights, {m, ns, 1});
  Tensor fg = sum_axis(mul(w3, rgb_vals), 1);                     // [m,3]
  Tensor bg = Tensor::from({1, 3}, {opts.background[0], opts.background[1], opts.background[2]});
  Tensor bg_w = reshape(sub(Tensor::full({m}, 1.0), opacity), {m, 1});
  Tensor composited = add(fg, mul(bg_w, bg));

  out.pixels.reserve(m);
  for (const auto& h : hits) out.pixels.push_back(h.pixel);
  out.opacity = opacity;
  out.rgb = composited;
  if (opts.with_depth) {
    Tensor tvals = Tensor::from({m, ns}, std::move(ts));
    out.depth = sum_axis(mul(weights, tvals), 1);
  }
  return out;
}

RenderedView volume_render(const SdfField& sdf, const RgbField& rgb, const Camera& cam,
                           const VolumeRenderOptions& opts) {
  std::vector<int64_t> all(cam.height * cam.width);
  for (int64_t i = 0; i < static_cast<int64_t>(all.size()); ++i) all[i] = i;
  RayBatch batch = volume_render_rays(sdf, rgb, cam, opts, all);

  RenderedView view;
  view.height = cam.height;
  view.width = cam.width;
  const std::vector<double> bg(opts.background.begin(), opts.background.end());
  view.rgb = scatter_rows_to_image(batch.rgb, batch.pixels, cam.height, cam.width, bg);
  Tensor op_img = scatter_rows_to_image(reshape(batch.opacity, {-1, 1}), batch.pixels,
                                        cam.height, cam.width, {0.0});
  view.opacity = reshape(op_img, {cam.height, cam.width});
  if (opts.with_depth && batch.depth.defined()) {
    Tensor d_img = scatter_rows_to_image(reshape(batch.depth, {-1, 1}), batch.pixels, cam.height,
                                         cam.width, {0.0});
    view.depth = reshape(d_img, {cam.height, cam.width});
  }
  return view;
}

}  // namespace tritex
