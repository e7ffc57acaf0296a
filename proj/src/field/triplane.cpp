#include "field/triplane.h"

#include <cmath>
#include <stdexcept>

#include "core/ops.h"
#include "core/serialize.h"

namespace tritex {

Triplane Triplane::zeros(int64_t resolution, int64_t channels, double extent) {
  Triplane tp;
  tp.planes = Tensor::zeros({3, channels, resolution, resolution});
  tp.resolution = resolution;
  tp.channels = channels;
  tp.extent = extent;
  return tp;
}

Triplane Triplane::wrap(Tensor planes, double extent) {
  if (!planes.defined() || planes.rank() != 4 || planes.dim(0) != 3 ||
      planes.dim(2) != planes.dim(3))
    throw std::invalid_argument("Triplane::wrap: expected [3,C,R,R] tensor");
  Triplane tp;
  tp.resolution = planes.dim(2);
  tp.channels = planes.dim(1);
  tp.extent = extent;
  tp.planes = std::move(planes);
  return tp;
}

bool Triplane::valid() const {
  return planes.defined() && planes.rank() == 4 && planes.dim(0) == 3 &&
         planes.dim(1) == channels && planes.dim(2) == resolution &&
         planes.dim(3) == resolution && extent > 0.0 && planes.all_finite();
}

void Triplane::check_valid(const char* op) const {
  if (!valid()) throw std::invalid_argument(std::string(op) + ": invalid triplane");
}

FieldQuery FieldQuery::of(std::vector<double> pts) {
  if (pts.size() % 3 != 0) throw std::invalid_argument("FieldQuery: size not divisible by 3");
  FieldQuery q;
  q.points = std::move(pts);
  return q;
}

void FieldQuery::check_finite(const char* op) const {
  for (double v : points)
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite query coordinate");
}

namespace {

// Plane-projection conventions: (col_axis, row_axis) per plane.
constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};

struct BilinearTap {
  int64_t c00, c01, c10, c11;  // row-major pixel ids
  double w00, w01, w10, w11;
};

// Pixel-center aligned continuous coordinate, clamped to the grid.
inline double to_pixel_coord(double world, double extent, int64_t r) {
  double u = (world / extent * 0.5 + 0.5) * static_cast<double>(r) - 0.5;
  if (u < 0.0) u = 0.0;
  const double umax = static_cast<double>(r - 1);
  if (u > umax) u = umax;
  return u;
}

inline BilinearTap bilinear_tap(double col, double row, int64_t r) {
  const int64_t c0 = static_cast<int64_t>(col);
  const int64_t r0 = static_cast<int64_t>(row);
  const int64_t c1 = std::min(c0 + 1, r - 1);
  const int64_t r1 = std::min(r0 + 1, r - 1);
  const double fc = col - static_cast<double>(c0);
  const double fr = row - static_cast<double>(r0);
  BilinearTap t;
  t.c00 = r0 * r + c0;
  t.c01 = r0 * r + c1;
  t.c10 = r1 * r + c0;
  t.c11 = r1 * r + c1;
  t.w00 = (1.0 - fr) * (1.0 - fc);
  t.w01 = (1.0 - fr) * fc;
  t.w10 = fr * (1.0 - fc);
  t.w11 = fr * fc;
  return t;
}

inline BilinearTap plane_tap(const double* pt, int plane, double extent, int64_t r) {
  const double col = to_pixel_coord(pt[kPlaneAxes[plane][0]], extent, r);
  const double row = to_pixel_coord(pt[kPlaneAxes[plane][1]], extent, r);
  return bilinear_tap(col, row, r);
}

inline int64_t nearest_pixel(const double* pt, int plane, double extent, int64_t r) {
  const double col = to_pixel_coord(pt[kPlaneAxes[plane][0]], extent, r);
  const double row = to_pixel_coord(pt[kPlaneAxes[plane][1]], extent, r);
  const int64_t ci = std::min<int64_t>(r - 1, static_cast<int64_t>(std::llround(col)));
  const int64_t ri = std::min<int64_t>(r - 1, static_cast<int64_t>(std::llround(row)));
  return ri * r + ci;
}

}  // namespace

Tensor sample_triplane(const Triplane& tp, const FieldQuery& q) {
  tp.check_valid("sample_triplane");
  q.check_finite("sample_triplane");
  const int64_t n = q.count();
  const int64_t c = tp.channels;
  const int64_t r = tp.resolution;
  const int64_t rr = r * r;
  const double extent = tp.extent;
  const auto pts = q.points;  // copied into the closure below

  Tensor out = make_op({n, c}, {tp.planes}, [pts, n, c, r, rr, extent](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t i = 0; i < n; ++i) {
      for (int plane = 0; plane < 3; ++plane) {
        const BilinearTap t = plane_tap(&pts[i * 3], plane, extent, r);
        double* gp = p->grad.data() + plane * c * rr;
        for (int64_t ch = 0; ch < c; ++ch) {
          const double gv = g[i * c + ch];
          double* gc = gp + ch * rr;
          gc[t.c00] += gv * t.w00;
          gc[t.c01] += gv * t.w01;
          gc[t.c10] += gv * t.w10;
          gc[t.c11] += gv * t.w11;
        }
      }
    }
  });
  const double* pl = tp.planes.data();
  double* y = out.data();
  std::fill(y, y + n * c, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int plane = 0; plane < 3; ++plane) {
      const BilinearTap t = plane_tap(&q.points[i * 3], plane, extent, r);
      const double* pp = pl + plane * c * rr;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double* pc = pp + ch * rr;
        y[i * c + ch] +=
            pc[t.c00] * t.w00 + pc[t.c01] * t.w01 + pc[t.c10] * t.w10 + pc[t.c11] * t.w11;
      }
    }
  }
  return out;
}

Tensor sample_plane(const Triplane& tp, int plane, const FieldQuery& q) {
  tp.check_valid("sample_plane");
  q.check_finite("sample_plane");
  if (plane < 0 || plane > 2) throw std::invalid_argument("sample_plane: plane index");
  const int64_t n = q.count();
  const int64_t c = tp.channels;
  const int64_t r = tp.resolution;
  const int64_t rr = r * r;
  const double extent = tp.extent;
  const auto pts = q.points;

  Tensor out = make_op({n, c}, {tp.planes}, [pts, plane, n, c, r, rr, extent](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t i = 0; i < n; ++i) {
      const BilinearTap t = plane_tap(&pts[i * 3], plane, extent, r);
      double* gp = p->grad.data() + plane * c * rr;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double gv = g[i * c + ch];
        double* gc = gp + ch * rr;
        gc[t.c00] += gv * t.w00;
        gc[t.c01] += gv * t.w01;
        gc[t.c10] += gv * t.w10;
        gc[t.c11] += gv * t.w11;
      }
    }
  });
  const double* pp = tp.planes.data() + plane * c * rr;
  double* y = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const BilinearTap t = plane_tap(&q.points[i * 3], plane, extent, r);
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* pc = pp + ch * rr;
      y[i * c + ch] =
          pc[t.c00] * t.w00 + pc[t.c01] * t.w01 + pc[t.c10] * t.w10 + pc[t.c11] * t.w11;
    }
  }
  return out;
}

Triplane scatter_to_triplane(const FieldQuery& q, const Tensor& feats, int64_t resolution,
                             double extent) {
  q.check_finite("scatter_to_triplane");
  const int64_t n = q.count();
  if (!feats.defined() || feats.rank() != 2 || feats.dim(0) != n)
    throw std::invalid_argument("scatter_to_triplane: one feature row per point required");
  const int64_t c = feats.dim(1);
  const int64_t r = resolution;
  const int64_t rr = r * r;

  // Pixel assignments and occupancy counts are a pure function of the points.
  std::vector<int64_t> pix(3 * std::max<int64_t>(n, 1));
  std::vector<double> inv_count(3 * rr, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int plane = 0; plane < 3; ++plane) {
      const int64_t id = nearest_pixel(&q.points[i * 3], plane, extent, r);
      pix[plane * n + i] = id;
      inv_count[plane * rr + id] += 1.0;
    }
  for (double& v : inv_count) v = v > 0.0 ? 1.0 / v : 0.0;

  Tensor planes = make_op({3, c, r, r}, {feats}, [pix, inv_count, n, c, rr](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t i = 0; i < n; ++i)
      for (int plane = 0; plane < 3; ++plane) {
        const int64_t id = pix[plane * n + i];
        const double w = inv_count[plane * rr + id];
        const double* gp = g + plane * c * rr;
        for (int64_t ch = 0; ch < c; ++ch) p->grad[i * c + ch] += gp[ch * rr + id] * w;
      }
  });
  double* y = planes.data();
  std::fill(y, y + 3 * c * rr, 0.0);
  const double* f = feats.data();
  for (int64_t i = 0; i < n; ++i)
    for (int plane = 0; plane < 3; ++plane) {
      const int64_t id = pix[plane * n + i];
      const double w = inv_count[plane * rr + id];
      double* yp = y + plane * c * rr;
      for (int64_t ch = 0; ch < c; ++ch) yp[ch * rr + id] += f[i * c + ch] * w;
    }

  Triplane tp;
  tp.planes = std::move(planes);
  tp.resolution = r;
  tp.channels = c;
  tp.extent = extent;
  return tp;
}

double sphere_sdf(const Vec3& p, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("sphere_sdf: radius must be positive");
  return p.norm() - radius;
}

double offset_sdf(double raw, const Vec3& p, double radius) {
  return raw + sphere_sdf(p, radius);
}

Tensor offset_sdf(const Tensor& raw, const FieldQuery& q, double radius) {
  const int64_t n = q.count();
  if (!raw.defined() || raw.numel() != n)
    throw std::invalid_argument("offset_sdf: raw/query size mismatch");
  std::vector<double> sphere(n);
  for (int64_t i = 0; i < n; ++i) {
    const Vec3 p{q.points[i * 3], q.points[i * 3 + 1], q.points[i * 3 + 2]};
    sphere[i] = sphere_sdf(p, radius);
  }
  return add(raw, Tensor::from(raw.shape(), std::move(sphere)));
}

double sdf_to_density(double s, const DensityParams& dp) {
  if (!dp.valid()) throw std::invalid_argument("sdf_to_density: invalid params");
  // alpha_vs * LaplaceCDF_beta(-s)
  const double x = -s;
  const double psi = x <= 0.0 ? 0.5 * std::exp(x / dp.beta) : 1.0 - 0.5 * std::exp(-x / dp.beta);
  return dp.alpha_vs * psi;
}

Tensor sdf_to_density(const Tensor& s, const DensityParams& dp) {
  if (!dp.valid()) throw std::invalid_argument("sdf_to_density: invalid params");
  const double beta = dp.beta;
  const double alpha = dp.alpha_vs;
  Tensor out = make_op(s.shape(), {s}, [beta, alpha](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* sv = p->vdata();
    const double* g = self.grad.data();
    const double k = -alpha / (2.0 * beta);
    for (int64_t i = 0; i < self.numel(); ++i)
      p->grad[i] += g[i] * k * std::exp(-std::abs(sv[i]) / beta);
  });
  const double* sv = s.data();
  double* y = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double x = -sv[i];
    const double psi = x <= 0.0 ? 0.5 * std::exp(x / beta) : 1.0 - 0.5 * std::exp(-x / beta);
    y[i] = alpha * psi;
  }
  return out;
}

void save_triplane(const std::string& path, const Triplane& tp) {
  tp.check_valid("save_triplane");
  AtomicFileWriter w(path);
  auto& os = w.stream();
  write_magic(os, "TPL1");
  write_u32(os, static_cast<uint32_t>(tp.resolution));
  write_u32(os, static_cast<uint32_t>(tp.channels));
  write_f32(os, static_cast<float>(tp.extent));
  const double* d = tp.planes.data();
  for (int64_t i = 0; i < tp.planes.numel(); ++i) write_f32(os, static_cast<float>(d[i]));
  w.commit();
}

Triplane load_triplane(const std::string& path) {
  auto is = open_in_binary(path);
  expect_magic(is, "TPL1", "triplane blob");
  const int64_t r = read_u32(is);
  const int64_t c = read_u32(is);
  const double extent = read_f32(is);
  Triplane tp = Triplane::zeros(r, c, extent);
  double* d = tp.planes.data();
  for (int64_t i = 0; i < tp.planes.numel(); ++i) d[i] = read_f32(is);
  tp.check_valid("load_triplane");
  return tp;
}

}  // namespace tritex
