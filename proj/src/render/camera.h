#pragma once

#include <cstdint>

#include "core/geometry.h"
#include "core/rng.h"

namespace tritex {

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

struct Camera {
  Vec3 position;
  Vec3 look_at{0.0, 0.0, 0.0};
  Vec3 up{0.0, 0.0, 1.0};
  double fov_y = 0.6981317007977318;  // 40 degrees
  int64_t height = 64;
  int64_t width = 64;
  double radius = 0.0;  // distance to look_at

  void check_valid(const char* op) const;
  void basis(Vec3& fwd, Vec3& right, Vec3& cam_up) const;
  Ray pixel_ray(int64_t row, int64_t col) const;
  // Projects a world point to continuous pixel coordinates; depth is the
  // distance along the camera forward axis. Returns false behind the camera.
  bool project(const Vec3& p, double& col, double& row, double& depth) const;
};

Camera make_camera(const Vec3& position, const Vec3& look_at, double fov_y, int64_t height,
                   int64_t width);

// Position uniform on the sphere of the given radius (z >= 0 when
// upper_only), oriented toward the origin.
Camera sample_camera_sphere(Rng& rng, double radius, bool upper_only, double fov_y,
                            int64_t height, int64_t width);

// Ray / axis-aligned box intersection over [-1,1]^3. Returns false on miss;
// otherwise [t_near, t_far] with t_far > max(t_near, 0).
bool intersect_unit_box(const Ray& ray, double& t_near, double& t_far);

}  // namespace tritex
