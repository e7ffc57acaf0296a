#include "render/raster.h"

#include <cmath>
#include <limits>

#include "core/ops.h"
#include "core/pointcloud.h"

namespace tritex {

RasterGeometry rasterize_geometry(const TriMesh& mesh, const Camera& cam) {
  cam.check_valid("rasterize");
  mesh.check_valid("rasterize");
  const int64_t h = cam.height, w = cam.width;

  RasterGeometry out;
  out.height = h;
  out.width = w;
  out.has_colors = mesh.has_colors();

  std::vector<double> zbuf(h * w, std::numeric_limits<double>::infinity());
  std::vector<Vec3> pbuf(h * w);
  std::vector<Vec3> cbuf(out.has_colors ? h * w : 0);

  struct Projected {
    double col, row, depth;
  };
  std::vector<Projected> proj(mesh.vertices.size());
  std::vector<bool> in_front(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i)
    in_front[i] = cam.project(mesh.vertices[i], proj[i].col, proj[i].row, proj[i].depth);

  auto edge = [](double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  };

  for (const auto& f : mesh.faces) {
    if (!in_front[f[0]] || !in_front[f[1]] || !in_front[f[2]]) continue;  // near-plane reject
    const Projected& a = proj[f[0]];
    const Projected& b = proj[f[1]];
    const Projected& c = proj[f[2]];
    const double area = edge(a.col, a.row, b.col, b.row, c.col, c.row);
    if (std::abs(area) < 1e-12) continue;

    const int64_t c0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min({a.col, b.col, c.col}))));
    const int64_t c1 = std::min<int64_t>(w - 1, static_cast<int64_t>(std::ceil(std::max({a.col, b.col, c.col}))));
    const int64_t r0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min({a.row, b.row, c.row}))));
    const int64_t r1 = std::min<int64_t>(h - 1, static_cast<int64_t>(std::ceil(std::max({a.row, b.row, c.row}))));
    if (c0 > c1 || r0 > r1) continue;

    const double inv_area = 1.0 / area;
    for (int64_t row = r0; row <= r1; ++row)
      for (int64_t col = c0; col <= c1; ++col) {
        const double px = static_cast<double>(col), py = static_cast<double>(row);
        double w0 = edge(b.col, b.row, c.col, c.row, px, py) * inv_area;
        double w1 = edge(c.col, c.row, a.col, a.row, px, py) * inv_area;
        double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;  // two-sided via signed area

        // perspective-correct interpolation
        const double inv_z = w0 / a.depth + w1 / b.depth + w2 / c.depth;
        const double z = 1.0 / inv_z;
        const int64_t pid = row * w + col;
        if (z >= zbuf[pid]) continue;
        zbuf[pid] = z;
        const double k0 = w0 / a.depth * z, k1 = w1 / b.depth * z, k2 = w2 / c.depth * z;
        pbuf[pid] = mesh.vertices[f[0]] * k0 + mesh.vertices[f[1]] * k1 + mesh.vertices[f[2]] * k2;
        if (out.has_colors)
          cbuf[pid] = mesh.vertex_colors[f[0]] * k0 + mesh.vertex_colors[f[1]] * k1 +
                      mesh.vertex_colors[f[2]] * k2;
      }
  }

  for (int64_t pid = 0; pid < h * w; ++pid) {
    if (!std::isfinite(zbuf[pid])) continue;
    out.pixels.push_back(pid);
    out.points.push_back(pbuf[pid]);
    out.ray_t.push_back((pbuf[pid] - cam.position).norm());
    if (out.has_colors) out.colors.push_back(cbuf[pid]);
  }
  return out;
}

namespace {

RenderedView assemble_view(const RasterGeometry& geo, Tensor rgb_rows, const Color& background,
                           bool with_depth) {
  RenderedView view;
  view.height = geo.height;
  view.width = geo.width;
  const std::vector<double> bg(background.begin(), background.end());
  view.rgb = scatter_rows_to_image(rgb_rows, geo.pixels, geo.height, geo.width, bg);

  std::vector<double> mask(geo.height * geo.width, 0.0);
  for (int64_t pid : geo.pixels) mask[pid] = 1.0;
  view.opacity = Tensor::from({geo.height, geo.width}, std::move(mask));

  if (with_depth) {
    std::vector<double> depth(geo.height * geo.width, 0.0);
    for (size_t i = 0; i < geo.pixels.size(); ++i) depth[geo.pixels[i]] = geo.ray_t[i];
    view.depth = Tensor::from({geo.height, geo.width}, std::move(depth));
  }
  return view;
}

}  // namespace

RenderedView rasterize(const TriMesh& mesh, const RgbField& rgb, const Camera& cam,
                       const Color& background, bool with_depth) {
  RasterGeometry geo = rasterize_geometry(mesh, cam);
  Tensor rgb_rows;
  if (geo.pixels.empty()) {
    rgb_rows = Tensor::zeros({0, 3});
  } else {
    std::vector<double> pts;
    pts.reserve(geo.points.size() * 3);
    for (const auto& p : geo.points) {
      pts.push_back(p.x);
      pts.push_back(p.y);
      pts.push_back(p.z);
    }
    rgb_rows = rgb(FieldQuery::of(std::move(pts)));
  }
  return assemble_view(geo, rgb_rows, background, with_depth);
}

RenderedView rasterize_vertex_colors(const TriMesh& mesh, const Camera& cam,
                                     const Color& background, bool with_depth) {
  RasterGeometry geo = rasterize_geometry(mesh, cam);
  std::vector<double> colors;
  colors.reserve(geo.pixels.size() * 3);
  for (size_t i = 0; i < geo.pixels.size(); ++i) {
    const Vec3 c = geo.has_colors ? geo.colors[i] : Vec3{0.5, 0.5, 0.5};
    colors.push_back(std::min(1.0, std::max(0.0, c.x)));
    colors.push_back(std::min(1.0, std::max(0.0, c.y)));
    colors.push_back(std::min(1.0, std::max(0.0, c.z)));
  }
  Tensor rgb_rows = Tensor::from({static_cast<int64_t>(geo.pixels.size()), 3}, std::move(colors));
  return assemble_view(geo, rgb_rows, background, with_depth);
}

ColoredPointCloud dummy_sphere_pointcloud(int64_t n_points, double radius) {
  if (n_points <= 0) throw std::invalid_argument("dummy_sphere_pointcloud: need n_points >= 1");
  Rng rng(0x5da11b0b);  // fixed: the dummy is a model constant
  ColoredPointCloud pc;
  pc.positions.reserve(n_points * 3);
  pc.colors.assign(n_points * 3, 0.5);
  for (int64_t i = 0; i < n_points; ++i) {
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    pc.positions.push_back(radius * rxy * std::cos(phi));
    pc.positions.push_back(radius * rxy * std::sin(phi));
    pc.positions.push_back(radius * z);
  }
  return pc;
}

}  // namespace tritex
