#pragma once

#include <vector>

#include "render/camera.h"
#include "render/mesh.h"
#include "render/view.h"

namespace tritex {

// Z-buffered coverage of a camera's pixel grid. Geometry only; no gradients
// flow through any of this.
struct RasterGeometry {
  int64_t height = 0, width = 0;
  std::vector<int64_t> pixels;   // covered pixel ids (row*W+col), ascending
  std::vector<Vec3> points;      // interpolated world surface point per pixel
  std::vector<double> ray_t;     // distance from the camera along the pixel ray
  std::vector<Vec3> colors;      // barycentric vertex colors (if the mesh has them)
  bool has_colors = false;
};

RasterGeometry rasterize_geometry(const TriMesh& mesh, const Camera& cam);

// Surface rendering of a neural texture: mask = coverage, rgb at covered
// pixels = rgb_field queried at the surface point. Gradients flow into the
// texture field only; the mesh is treated as constant.
RenderedView rasterize(const TriMesh& mesh, const RgbField& rgb, const Camera& cam,
                       const Color& background, bool with_depth = false);

// Same, but colors come from the mesh's vertex colors (reference baking).
RenderedView rasterize_vertex_colors(const TriMesh& mesh, const Camera& cam,
                                     const Color& background, bool with_depth = false);

// Fixed-seed sphere-surface sample with mid-gray colors; the dummy input is
// a constant of the model.
struct ColoredPointCloud;
ColoredPointCloud dummy_sphere_pointcloud(int64_t n_points, double radius);

}  // namespace tritex
