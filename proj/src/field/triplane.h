#pragma once

#include <string>
#include <vector>

#include "core/geometry.h"
#include "core/tensor.h"

namespace tritex {

// Three axis-aligned feature planes, the latent 3D representation.
// Storage layout is [3, C, R, R] with planes indexed XY, XZ, YZ and
// image layout [channel, row, col]:
//   plane 0 (XY): col <- x, row <- y
//   plane 1 (XZ): col <- x, row <- z
//   plane 2 (YZ): col <- y, row <- z
// World [-extent, extent] maps linearly to pixel coordinates with
// pixel-center alignment; out-of-range queries clamp to the boundary.
struct Triplane {
  Tensor planes;  // [3, C, R, R]
  int64_t resolution = 0;
  int64_t channels = 0;
  double extent = 1.0;

  static Triplane zeros(int64_t resolution, int64_t channels, double extent = 1.0);
  static Triplane wrap(Tensor planes, double extent = 1.0);

  bool valid() const;
  void check_valid(const char* op) const;
};

// N x 3 world-coordinate query points.
struct FieldQuery {
  std::vector<double> points;  // flattened N x 3
  int64_t count() const { return static_cast<int64_t>(points.size()) / 3; }

  static FieldQuery of(std::vector<double> pts);
  void check_finite(const char* op) const;
};

// Laplace-CDF density parameterization of an approximate SDF.
struct DensityParams {
  double beta = 0.01;
  double alpha_vs = 100.0;

  bool valid() const { return beta > 0.0 && alpha_vs > 0.0; }
};

// Per point, sums the bilinearly interpolated feature over the three planes.
// Differentiable w.r.t. plane contents.
Tensor sample_triplane(const Triplane& tp, const FieldQuery& q);

// Single-plane variant (same indexing conventions).
Tensor sample_plane(const Triplane& tp, int plane, const FieldQuery& q);

// Mean of the features of all points projecting into each pixel; empty
// pixels hold zero. Differentiable w.r.t. feats.
Triplane scatter_to_triplane(const FieldQuery& q, const Tensor& feats, int64_t resolution,
                             double extent = 1.0);

double sphere_sdf(const Vec3& p, double radius);
double offset_sdf(double raw, const Vec3& p, double radius);
// Adds the sphere SDF of each query point to the raw per-point values.
Tensor offset_sdf(const Tensor& raw, const FieldQuery& q, double radius);

double sdf_to_density(double s, const DensityParams& dp);
Tensor sdf_to_density(const Tensor& s, const DensityParams& dp);

// Flat binary blob [3, C, R, R]: magic "TPL1", u32 resolution, u32 channels,
// f32 extent, then little-endian 32-bit floats.
void save_triplane(const std::string& path, const Triplane& tp);
Triplane load_triplane(const std::string& path);

}  // namespace tritex
