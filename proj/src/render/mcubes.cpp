#include "render/mcubes.h"

#include <stdexcept>
#include <unordered_map>

#include "render/mc_tables.h"

namespace tritex {

ScalarGrid ScalarGrid::unit_box(int64_t n) {
  if (n < 2) throw std::invalid_argument("ScalarGrid: need at least 2 points per side");
  ScalarGrid g;
  g.n = n;
  g.origin = {-1.0, -1.0, -1.0};
  g.cell = 2.0 / static_cast<double>(n - 1);
  g.values.assign(n * n * n, 0.0);
  return g;
}

namespace {

// Canonical edge key: lower grid corner packed with the edge axis.
inline uint64_t edge_key(int64_t ix, int64_t iy, int64_t iz, int axis) {
  return (((static_cast<uint64_t>(ix) << 21 | static_cast<uint64_t>(iy)) << 21 |
           static_cast<uint64_t>(iz))
          << 2) |
         static_cast<uint64_t>(axis);
}

}  // namespace

TriMesh marching_cubes(const ScalarGrid& grid, double iso) {
  if (grid.n < 2) throw std::invalid_argument("marching_cubes: grid too small");
  const int64_t n = grid.n;
  TriMesh mesh;
  std::unordered_map<uint64_t, int64_t> edge_vertex;

  auto vertex_on_edge = [&](int64_t cx, int64_t cy, int64_t cz, int edge) -> int64_t {
    const int c0 = kMcEdgeCorners[edge][0];
    const int c1 = kMcEdgeCorners[edge][1];
    const int64_t ax = cx + kMcCornerOffset[c0][0];
    const int64_t ay = cy + kMcCornerOffset[c0][1];
    const int64_t az = cz + kMcCornerOffset[c0][2];
    const int64_t bx = cx + kMcCornerOffset[c1][0];
    const int64_t by = cy + kMcCornerOffset[c1][1];
    const int64_t bz = cz + kMcCornerOffset[c1][2];
    int axis = 0;
    if (ay != by) axis = 1;
    if (az != bz) axis = 2;
    // canonical lower corner of the edge
    const int64_t lx = std::min(ax, bx), ly = std::min(ay, by), lz = std::min(az, bz);
    const uint64_t key = edge_key(lx, ly, lz, axis);
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;

    const double va = grid.at(ax, ay, az);
    const double vb = grid.at(bx, by, bz);
    const double denom = vb - va;
    double t = std::abs(denom) < 1e-300 ? 0.5 : (iso - va) / denom;
    t = std::min(1.0, std::max(0.0, t));
    const Vec3 pa = grid.position(ax, ay, az);
    const Vec3 pb = grid.position(bx, by, bz);
    mesh.vertices.push_back(pa + (pb - pa) * t);
    const int64_t id = static_cast<int64_t>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int64_t cx = 0; cx + 1 < n; ++cx)
    for (int64_t cy = 0; cy + 1 < n; ++cy)
      for (int64_t cz = 0; cz + 1 < n; ++cz) {
        int cube_index = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = grid.at(cx + kMcCornerOffset[c][0], cy + kMcCornerOffset[c][1],
                                   cz + kMcCornerOffset[c][2]);
          if (v < iso) cube_index |= 1 << c;
        }
        const int* tris = kMcTriTable[cube_index];
        for (int t = 0; tris[t] != -1; t += 3) {
          const int64_t a = vertex_on_edge(cx, cy, cz, tris[t]);
          const int64_t b = vertex_on_edge(cx, cy, cz, tris[t + 1]);
          const int64_t c = vertex_on_edge(cx, cy, cz, tris[t + 2]);
          mesh.faces.push_back({a, b, c});
        }
      }
  return mesh;
}

}  // namespace tritex
