#include "render/camera.h"

#include <cmath>
#include <stdexcept>

namespace tritex {

void Camera::check_valid(const char* op) const {
  if (!(fov_y > 0.0 && fov_y < M_PI))
    throw std::invalid_argument(std::string(op) + ": fov_y out of (0, pi)");
  if (height <= 0 || width <= 0)
    throw std::invalid_argument(std::string(op) + ": non-positive resolution");
  if (std::abs((position - look_at).norm() - radius) > 1e-6)
    throw std::invalid_argument(std::string(op) + ": radius does not match position");
}

void Camera::basis(Vec3& fwd, Vec3& right, Vec3& cam_up) const {
  fwd = (look_at - position).normalized();
  Vec3 u = up;
  if (std::abs(fwd.dot(u.normalized())) > 0.999) u = Vec3{0.0, 1.0, 0.0};
  right = fwd.cross(u).normalized();
  cam_up = right.cross(fwd);
}

Ray Camera::pixel_ray(int64_t row, int64_t col) const {
  Vec3 fwd, right, cup;
  basis(fwd, right, cup);
  const double tan_half = std::tan(fov_y / 2.0);
  const double aspect = static_cast<double>(width) / static_cast<double>(height);
  const double ndc_x = ((col + 0.5) / width) * 2.0 - 1.0;
  const double ndc_y = 1.0 - ((row + 0.5) / height) * 2.0;
  const Vec3 dir = (fwd + right * (ndc_x * tan_half * aspect) + cup * (ndc_y * tan_half));
  return Ray{position, dir.normalized()};
}

bool Camera::project(const Vec3& p, double& col, double& row, double& depth) const {
  Vec3 fwd, right, cup;
  basis(fwd, right, cup);
  const Vec3 v = p - position;
  depth = v.dot(fwd);
  if (depth <= 1e-9) return false;
  const double tan_half = std::tan(fov_y / 2.0);
  const double aspect = static_cast<double>(width) / static_cast<double>(height);
  const double ndc_x = v.dot(right) / (depth * tan_half * aspect);
  const double ndc_y = v.dot(cup) / (depth * tan_half);
  col = (ndc_x + 1.0) / 2.0 * width - 0.5;
  row = (1.0 - ndc_y) / 2.0 * height - 0.5;
  return true;
}

Camera make_camera(const Vec3& position, const Vec3& look_at, double fov_y, int64_t height,
                   int64_t width) {
  Camera c;
  c.position = position;
  c.look_at = look_at;
  c.fov_y = fov_y;
  c.height = height;
  c.width = width;
  c.radius = (position - look_at).norm();
  c.check_valid("make_camera");
  return c;
}

Camera sample_camera_sphere(Rng& rng, double radius, bool upper_only, double fov_y,
                            int64_t height, int64_t width) {
  // z uniform gives uniform area on the sphere
  const double z = upper_only ? rng.uniform() : rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vec3 dir{rxy * std::cos(phi), rxy * std::sin(phi), z};
  return make_camera(dir * radius, {0.0, 0.0, 0.0}, fov_y, height, width);
}

bool intersect_unit_box(const Ray& ray, double& t_near, double& t_far) {
  t_near = -1e30;
  t_far = 1e30;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.dir[a];
    if (std::abs(d) < 1e-12) {
      if (o < -1.0 || o > 1.0) return false;
      continue;
    }
    double t0 = (-1.0 - o) / d;
    double t1 = (1.0 - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  t_near = std::max(t_near, 0.0);
  return t_far > t_near;
}

}  // namespace tritex
