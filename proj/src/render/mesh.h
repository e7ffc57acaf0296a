#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/geometry.h"

namespace tritex {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int64_t, 3>> faces;   // indices into vertices
  std::vector<Vec3> vertex_colors;             // optional, same length as vertices

  bool has_colors() const { return vertex_colors.size() == vertices.size() && !vertices.empty(); }
  bool empty() const { return faces.empty(); }
  void check_valid(const char* op) const;  // index range + no degenerate faces

  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
};

// ASCII OBJ with optional per-vertex colors ("v x y z r g b").
void save_obj(const std::string& path, const TriMesh& mesh);
TriMesh load_obj(const std::string& path);

// Analytic primitives, all centered at the origin.
TriMesh make_icosphere(double radius, int subdivisions);
TriMesh make_box(double sx, double sy, double sz);
TriMesh make_torus(double major, double minor, int seg_major, int seg_minor);
TriMesh make_cylinder(double radius, double height, int segments);

}  // namespace tritex
