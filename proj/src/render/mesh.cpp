#include "render/mesh.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "core/serialize.h"

namespace tritex {

void TriMesh::check_valid(const char* op) const {
  const int64_t v = static_cast<int64_t>(vertices.size());
  for (const auto& f : faces) {
    for (int64_t idx : f)
      if (idx < 0 || idx >= v)
        throw std::invalid_argument(std::string(op) + ": face index out of range");
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw std::invalid_argument(std::string(op) + ": degenerate face");
  }
  if (!vertex_colors.empty() && vertex_colors.size() != vertices.size())
    throw std::invalid_argument(std::string(op) + ": vertex color count mismatch");
}

Vec3 TriMesh::bbox_min() const {
  Vec3 m{1e300, 1e300, 1e300};
  for (const auto& v : vertices) {
    m.x = std::min(m.x, v.x);
    m.y = std::min(m.y, v.y);
    m.z = std::min(m.z, v.z);
  }
  return m;
}

Vec3 TriMesh::bbox_max() const {
  Vec3 m{-1e300, -1e300, -1e300};
  for (const auto& v : vertices) {
    m.x = std::max(m.x, v.x);
    m.y = std::max(m.y, v.y);
    m.z = std::max(m.z, v.z);
  }
  return m;
}

void save_obj(const std::string& path, const TriMesh& mesh) {
  mesh.check_valid("save_obj");
  AtomicFileWriter w(path);
  auto& os = w.stream();
  os.precision(17);  // exact double round trip through the ASCII format
  const bool colors = mesh.has_colors();
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    os << "v " << v.x << " " << v.y << " " << v.z;
    if (colors) {
      const Vec3& c = mesh.vertex_colors[i];
      os << " " << c.x << " " << c.y << " " << c.z;
    }
    os << "\n";
  }
  for (const auto& f : mesh.faces)
    os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  w.commit();
}

TriMesh load_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_obj: cannot open " + path);
  TriMesh mesh;
  bool any_colors = false;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      ls >> x >> y >> z;
      mesh.vertices.push_back({x, y, z});
      double r, g, b;
      if (ls >> r >> g >> b) {
        mesh.vertex_colors.push_back({r, g, b});
        any_colors = true;
      } else {
        mesh.vertex_colors.push_back({0.5, 0.5, 0.5});
      }
    } else if (tag == "f") {
      std::array<int64_t, 3> f{};
      for (int i = 0; i < 3; ++i) {
        std::string tok;
        ls >> tok;
        f[i] = std::stoll(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(f);
    }
  }
  if (!any_colors) mesh.vertex_colors.clear();
  mesh.check_valid("load_obj");
  return mesh;
}

TriMesh make_icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int64_t, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& v : verts) v = v.normalized();

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int64_t, int64_t>, int64_t> midpoint;
    auto mid = [&](int64_t a, int64_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3 m = ((verts[a] + verts[b]) * 0.5).normalized();
      verts.push_back(m);
      const int64_t id = static_cast<int64_t>(verts.size()) - 1;
      midpoint[key] = id;
      return id;
    };
    std::vector<std::array<int64_t, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int64_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  TriMesh mesh;
  mesh.vertices.reserve(verts.size());
  for (const auto& v : verts) mesh.vertices.push_back(v * radius);
  mesh.faces = std::move(faces);
  return mesh;
}

TriMesh make_box(double sx, double sy, double sz) {
  const double hx = sx / 2, hy = sy / 2, hz = sz / 2;
  TriMesh m;
  m.vertices = {{-hx, -hy, -hz}, {hx, -hy, -hz}, {hx, hy, -hz}, {-hx, hy, -hz},
                {-hx, -hy, hz},  {hx, -hy, hz},  {hx, hy, hz},  {-hx, hy, hz}};
  m.faces = {{0, 2, 1}, {0, 3, 2},   // bottom (z-)
             {4, 5, 6}, {4, 6, 7},   // top (z+)
             {0, 1, 5}, {0, 5, 4},   // y-
             {2, 3, 7}, {2, 7, 6},   // y+
             {1, 2, 6}, {1, 6, 5},   // x+
             {3, 0, 4}, {3, 4, 7}};  // x-
  return m;
}

TriMesh make_torus(double major, double minor, int seg_major, int seg_minor) {
  TriMesh m;
  for (int i = 0; i < seg_major; ++i) {
    const double u = 2.0 * M_PI * i / seg_major;
    for (int j = 0; j < seg_minor; ++j) {
      const double v = 2.0 * M_PI * j / seg_minor;
      const double r = major + minor * std::cos(v);
      m.vertices.push_back({r * std::cos(u), r * std::sin(u), minor * std::sin(v)});
    }
  }
  auto vid = [&](int i, int j) {
    return static_cast<int64_t>((i % seg_major) * seg_minor + (j % seg_minor));
  };
  for (int i = 0; i < seg_major; ++i)
    for (int j = 0; j < seg_minor; ++j) {
      m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      m.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  return m;
}

TriMesh make_cylinder(double radius, double height, int segments) {
  TriMesh m;
  const double hz = height / 2;
  for (int i = 0; i < segments; ++i) {
    const double u = 2.0 * M_PI * i / segments;
    m.vertices.push_back({radius * std::cos(u), radius * std::sin(u), -hz});
    m.vertices.push_back({radius * std::cos(u), radius * std::sin(u), hz});
  }
  const int64_t bot_c = static_cast<int64_t>(m.vertices.size());
  m.vertices.push_back({0, 0, -hz});
  const int64_t top_c = bot_c + 1;
  m.vertices.push_back({0, 0, hz});
  for (int i = 0; i < segments; ++i) {
    const int64_t b0 = 2 * i, t0 = 2 * i + 1;
    const int64_t b1 = 2 * ((i + 1) % segments), t1 = b1 + 1;
    m.faces.push_back({b0, b1, t1});
    m.faces.push_back({b0, t1, t0});
    m.faces.push_back({bot_c, b1, b0});
    m.faces.push_back({top_c, t0, t1});
  }
  return m;
}

}  // namespace tritex
