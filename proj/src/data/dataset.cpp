#include "data/dataset.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/image.h"
#include "core/serialize.h"
#include "render/raster.h"

namespace fs = std::filesystem;

namespace tritex {

void ShapeRecord::check_valid(const char* op) const {
  if (id.empty()) throw std::invalid_argument(std::string(op) + ": empty shape id");
  mesh.check_valid(op);
  const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  const Vec3 center = (lo + hi) * 0.5;
  if (center.norm() > 1e-6)
    throw std::invalid_argument(std::string(op) + ": mesh not centered: " + id);
  const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  if (std::abs(extent - 0.8) > 1e-6)
    throw std::invalid_argument(std::string(op) + ": mesh max extent is not 0.8: " + id);
  pointcloud.check_valid(op);
  if (ref_views.size() != ref_cameras.size() || ref_views.size() != ref_masks.size())
    throw std::invalid_argument(std::string(op) + ": views/cameras/masks misaligned: " + id);
}

const ShapeRecord& Dataset::shape_by_id(const std::string& id) const {
  for (const auto& s : shapes)
    if (s.id == id) return s;
  throw std::runtime_error("dataset: unknown shape id '" + id + "'");
}

void Dataset::check_valid(const char* op) const {
  for (const auto& s : shapes) s.check_valid(op);
  for (const auto& e : manifest.entries) {
    if (e.prompt.empty()) throw std::invalid_argument(std::string(op) + ": empty prompt text");
    shape_by_id(e.shape_id);
  }
}

TriMesh normalize_shape(const TriMesh& mesh) {
  mesh.check_valid("normalize_shape");
  if (mesh.vertices.empty()) throw std::invalid_argument("normalize_shape: empty mesh");
  const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  const Vec3 center = (lo + hi) * 0.5;
  const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  if (extent <= 0.0) throw std::invalid_argument("normalize_shape: degenerate extent");
  const double scale = 0.8 / extent;
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = (v - center) * scale;
  return out;
}

namespace {

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Tensor quantize_u8(const Tensor& t) { return u8_to_tensor(tensor_to_u8(t)); }

}  // namespace

void bake_reference_views(ShapeRecord& rec, const BakeOptions& opts) {
  if (rec.mesh.faces.empty())
    throw std::invalid_argument("bake_reference_views: mesh has no faces: " + rec.id);
  rec.ref_views.clear();
  rec.ref_cameras.clear();
  rec.ref_masks.clear();

  Rng cam_rng(hash_combine(opts.seed, hash_str(rec.id + "/cameras")));
  struct Fg {
    Vec3 point;
    Vec3 color;
  };
  std::vector<Fg> foreground;

  for (int64_t vi = 0; vi < opts.n_cameras; ++vi) {
    Camera cam = sample_camera_sphere(cam_rng, opts.camera_radius, /*upper_only=*/true,
                                      opts.fov_y, opts.image_res, opts.image_res);
    RenderedView view = rasterize_vertex_colors(rec.mesh, cam, opts.background,
                                                /*with_depth=*/true);
    // unwarp depth pixels into world points carrying the pixel color
    const double* depth = view.depth.data();
    const double* rgb = view.rgb.data();
    for (int64_t pid = 0; pid < opts.image_res * opts.image_res; ++pid) {
      if (depth[pid] <= 0.0) continue;
      const Ray ray = cam.pixel_ray(pid / opts.image_res, pid % opts.image_res);
      const Vec3 p = ray.origin + ray.dir * depth[pid];
      foreground.push_back({p, {rgb[pid * 3], rgb[pid * 3 + 1], rgb[pid * 3 + 2]}});
    }

    RenderedView stored;
    stored.height = view.height;
    stored.width = view.width;
    stored.rgb = quantize_u8(view.rgb);
    stored.opacity = view.opacity;  // raster coverage is already exactly 0/1
    std::vector<double> mask(view.opacity.numel());
    for (int64_t i = 0; i < view.opacity.numel(); ++i)
      mask[i] = view.opacity.data()[i] > 0.5 ? 1.0 : 0.0;
    rec.ref_masks.push_back(Tensor::from({view.height, view.width}, std::move(mask)));
    rec.ref_views.push_back(std::move(stored));
    rec.ref_cameras.push_back(cam);
  }

  if (static_cast<int64_t>(foreground.size()) < opts.n_points)
    throw std::runtime_error("bake_reference_views: only " +
                             std::to_string(foreground.size()) + " foreground pixels for " +
                             std::to_string(opts.n_points) + " requested points (raise image_res)");

  // uniform subsample without replacement (partial Fisher-Yates)
  Rng pick(hash_combine(opts.seed, hash_str(rec.id + "/points")));
  std::vector<int64_t> idx(foreground.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  for (int64_t i = 0; i < opts.n_points; ++i) {
    const int64_t j = i + pick.uniform_int(static_cast<int64_t>(idx.size()) - i);
    std::swap(idx[i], idx[j]);
  }
  rec.pointcloud.positions.clear();
  rec.pointcloud.colors.clear();
  rec.pointcloud.positions.reserve(opts.n_points * 3);
  rec.pointcloud.colors.reserve(opts.n_points * 3);
  for (int64_t i = 0; i < opts.n_points; ++i) {
    const Fg& f = foreground[idx[i]];
    rec.pointcloud.positions.push_back(round_f32(f.point.x));
    rec.pointcloud.positions.push_back(round_f32(f.point.y));
    rec.pointcloud.positions.push_back(round_f32(f.point.z));
    rec.pointcloud.colors.push_back(round_f32(std::clamp(f.color.x, 0.0, 1.0)));
    rec.pointcloud.colors.push_back(round_f32(std::clamp(f.color.y, 0.0, 1.0)));
    rec.pointcloud.colors.push_back(round_f32(std::clamp(f.color.z, 0.0, 1.0)));
  }
}

PromptManifest expand_prompts_rulebased(
    const std::vector<std::pair<std::string, std::string>>& names_with_shape_ids,
    const std::vector<std::string>& styles, const std::vector<std::string>& activities,
    const std::vector<std::pair<std::string, std::string>>& held_out) {
  PromptManifest out;
  const std::vector<std::string> style_list = styles.empty() ? std::vector<std::string>{""} : styles;
  const std::vector<std::string> act_list =
      activities.empty() ? std::vector<std::string>{""} : activities;
  for (const auto& [name, shape_id] : names_with_shape_ids)
    for (const auto& style : style_list)
      for (const auto& act : act_list) {
        std::string text = name;
        if (!act.empty()) text += " " + act;
        if (!style.empty()) text += " in " + style + " style";
        const bool unseen =
            std::find(held_out.begin(), held_out.end(), std::make_pair(style, act)) !=
            held_out.end();
        out.entries.push_back({text, shape_id, unseen ? "unseen" : "seen"});
      }
  return out;
}

namespace {

void set_solid_color(TriMesh& mesh, const Vec3& c) {
  mesh.vertex_colors.assign(mesh.vertices.size(), c);
}

}  // namespace

std::vector<ShapeRecord> procedural_shapes(const BakeOptions& opts) {
  std::vector<ShapeRecord> out;
  auto add = [&](const std::string& id, TriMesh mesh, const Vec3& color) {
    ShapeRecord rec;
    rec.id = id;
    set_solid_color(mesh, color);
    rec.mesh = normalize_shape(mesh);
    bake_reference_views(rec, opts);
    rec.check_valid("procedural_shapes");
    out.push_back(std::move(rec));
  };
  add("sphere", make_icosphere(0.5, 3), {0.80, 0.20, 0.20});
  add("box", make_box(1.0, 0.70, 0.50), {0.20, 0.75, 0.25});
  add("torus", make_torus(0.32, 0.14, 48, 24), {0.25, 0.35, 0.85});
  add("cylinder", make_cylinder(0.30, 0.90, 48), {0.85, 0.80, 0.25});
  return out;
}

Dataset procedural_dataset(const BakeOptions& opts) {
  Dataset ds;
  ds.shapes = procedural_shapes(opts);
  std::vector<std::pair<std::string, std::string>> names;
  for (const auto& s : ds.shapes) names.emplace_back("a " + s.id, s.id);
  ds.manifest = expand_prompts_rulebased(names, {}, {});
  ds.check_valid("procedural_dataset");
  return ds;
}

namespace {

constexpr uint32_t kPointcloudVersion = 1;

void save_pointcloud(const std::string& path, const ColoredPointCloud& pc) {
  AtomicFileWriter w(path);
  auto& os = w.stream();
  write_magic(os, "PCL1");
  write_u32(os, kPointcloudVersion);
  write_u32(os, static_cast<uint32_t>(pc.count()));
  for (int64_t i = 0; i < pc.count(); ++i) {
    for (int k = 0; k < 3; ++k) write_f32(os, static_cast<float>(pc.positions[i * 3 + k]));
    for (int k = 0; k < 3; ++k) write_f32(os, static_cast<float>(pc.colors[i * 3 + k]));
  }
  w.commit();
}

ColoredPointCloud load_pointcloud(const std::string& path) {
  auto is = open_in_binary(path);
  expect_magic(is, "PCL1", "pointcloud blob");
  const uint32_t version = read_u32(is);
  if (version != kPointcloudVersion)
    throw std::runtime_error("pointcloud blob version mismatch in " + path + ": file has " +
                             std::to_string(version));
  const int64_t n = read_u32(is);
  ColoredPointCloud pc;
  pc.positions.resize(n * 3);
  pc.colors.resize(n * 3);
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pc.positions[i * 3 + k] = read_f32(is);
    for (int k = 0; k < 3; ++k) pc.colors[i * 3 + k] = read_f32(is);
  }
  return pc;
}

std::string view_name(int64_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", static_cast<int>(i));
  return buf;
}

void save_png_atomic(const std::string& path, const ImageU8& img) {
  const std::string tmp = path + ".tmp";
  save_png(tmp, img);
  fs::rename(tmp, path);
}

}  // namespace

void save_dataset(const std::string& root, const Dataset& ds) {
  ds.check_valid("save_dataset");
  fs::create_directories(root);
  {
    AtomicFileWriter w(root + "/manifest.tsv");
    for (const auto& e : ds.manifest.entries)
      w.stream() << e.prompt << "\t" << e.shape_id << "\t" << e.split << "\n";
    w.commit();
  }
  for (const auto& s : ds.shapes) {
    const fs::path dir = fs::path(root) / "shapes" / s.id;
    fs::create_directories(dir / "views");
    fs::create_directories(dir / "masks");
    save_obj((dir / "mesh.obj").string(), s.mesh);
    save_pointcloud((dir / "pointcloud.bin").string(), s.pointcloud);
    {
      AtomicFileWriter w((dir / "cameras.csv").string());
      auto& os = w.stream();
      os.precision(17);
      os << "index,px,py,pz,lx,ly,lz,ux,uy,uz,fov_y,H,W\n";
      for (size_t i = 0; i < s.ref_cameras.size(); ++i) {
        const Camera& c = s.ref_cameras[i];
        os << i << "," << c.position.x << "," << c.position.y << "," << c.position.z << ","
           << c.look_at.x << "," << c.look_at.y << "," << c.look_at.z << "," << c.up.x << ","
           << c.up.y << "," << c.up.z << "," << c.fov_y << "," << c.height << "," << c.width
           << "\n";
      }
      w.commit();
    }
    for (size_t i = 0; i < s.ref_views.size(); ++i) {
      save_png_atomic((dir / "views" / (view_name(i) + ".png")).string(),
                      tensor_to_u8(s.ref_views[i].rgb));
      save_png_atomic((dir / "masks" / (view_name(i) + ".png")).string(),
                      tensor_to_u8(s.ref_masks[i]));
    }
  }
}

Dataset load_dataset(const std::string& root) {
  Dataset ds;
  std::ifstream mf(root + "/manifest.tsv");
  if (!mf) throw std::runtime_error("load_dataset: missing manifest.tsv under " + root);
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    PromptEntry e;
    std::getline(ls, e.prompt, '\t');
    std::getline(ls, e.shape_id, '\t');
    std::getline(ls, e.split, '\t');
    ds.manifest.entries.push_back(std::move(e));
  }

  std::vector<std::string> ids;
  for (const auto& e : ds.manifest.entries)
    if (std::find(ids.begin(), ids.end(), e.shape_id) == ids.end()) ids.push_back(e.shape_id);

  for (const auto& id : ids) {
    const fs::path dir = fs::path(root) / "shapes" / id;
    if (!fs::exists(dir))
      throw std::runtime_error("load_dataset: manifest references shape '" + id +
                               "' but " + dir.string() + " does not exist");
    ShapeRecord rec;
    rec.id = id;
    rec.mesh = load_obj((dir / "mesh.obj").string());
    rec.pointcloud = load_pointcloud((dir / "pointcloud.bin").string());

    std::ifstream cf(dir / "cameras.csv");
    if (!cf) throw std::runtime_error("load_dataset: missing cameras.csv for shape " + id);
    std::getline(cf, line);  // header
    while (std::getline(cf, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::vector<double> v;
      std::string tok;
      while (std::getline(ls, tok, ',')) v.push_back(std::stod(tok));
      if (v.size() != 13) throw std::runtime_error("load_dataset: bad cameras.csv row for " + id);
      Camera c;
      c.position = {v[1], v[2], v[3]};
      c.look_at = {v[4], v[5], v[6]};
      c.up = {v[7], v[8], v[9]};
      c.fov_y = v[10];
      c.height = static_cast<int64_t>(v[11]);
      c.width = static_cast<int64_t>(v[12]);
      c.radius = (c.position - c.look_at).norm();
      rec.ref_cameras.push_back(c);
    }
    for (size_t i = 0; i < rec.ref_cameras.size(); ++i) {
      RenderedView view;
      view.rgb = u8_to_tensor(load_png((dir / "views" / (view_name(i) + ".png")).string()));
      Tensor mask = u8_to_tensor(load_png((dir / "masks" / (view_name(i) + ".png")).string()));
      view.height = view.rgb.dim(0);
      view.width = view.rgb.dim(1);
      view.opacity = mask;
      rec.ref_masks.push_back(mask);
      rec.ref_views.push_back(std::move(view));
    }
    ds.shapes.push_back(std::move(rec));
  }
  ds.check_valid("load_dataset");
  return ds;
}

}  // namespace tritex
