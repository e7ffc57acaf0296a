#pragma once

#include <cstdint>
#include <vector>

#include "core/geometry.h"
#include "render/mesh.h"

namespace tritex {

// Scalar grid sampled at n^3 points; grid[(ix*n + iy)*n + iz] holds the value
// at world position origin + cell * (ix, iy, iz).
struct ScalarGrid {
  int64_t n = 0;
  Vec3 origin{-1.0, -1.0, -1.0};
  double cell = 0.0;
  std::vector<double> values;

  static ScalarGrid unit_box(int64_t n);
  double& at(int64_t ix, int64_t iy, int64_t iz) { return values[(ix * n + iy) * n + iz]; }
  double at(int64_t ix, int64_t iy, int64_t iz) const { return values[(ix * n + iy) * n + iz]; }
  Vec3 position(int64_t ix, int64_t iy, int64_t iz) const {
    return {origin.x + cell * ix, origin.y + cell * iy, origin.z + cell * iz};
  }
};

// Standard marching-cubes triangulation with linear edge interpolation at the
// iso level. Vertices on shared cell edges are welded, so closed level sets
// come out watertight. All-positive or all-negative grids give an empty mesh.
TriMesh marching_cubes(const ScalarGrid& grid, double iso);

}  // namespace tritex
