#pragma once

#include <string>
#include <vector>

#include "core/pointcloud.h"
#include "render/camera.h"
#include "render/mesh.h"
#include "render/view.h"

namespace tritex {

// One library shape: normalized mesh, on-surface colored point cloud, and the
// cached reference renders used for reconstruction and regularization.
struct ShapeRecord {
  std::string id;
  TriMesh mesh;
  ColoredPointCloud pointcloud;
  std::vector<RenderedView> ref_views;
  std::vector<Camera> ref_cameras;
  std::vector<Tensor> ref_masks;  // [H,W] binary

  void check_valid(const char* op) const;
};

struct PromptEntry {
  std::string prompt;
  std::string shape_id;
  std::string split;  // "seen" | "unseen"
};

struct PromptManifest {
  std::vector<PromptEntry> entries;
};

struct Dataset {
  std::vector<ShapeRecord> shapes;
  PromptManifest manifest;

  const ShapeRecord& shape_by_id(const std::string& id) const;
  void check_valid(const char* op) const;  // manifest ids resolve, prompts non-empty
};

// Translate the bbox center to the origin and uniformly scale so the maximum
// axis-aligned extent is exactly 0.8.
TriMesh normalize_shape(const TriMesh& mesh);

struct BakeOptions {
  int64_t n_cameras = 32;
  int64_t image_res = 64;
  double camera_radius = 3.0;
  double fov_y = 0.6981317007977318;
  int64_t n_points = 2048;
  uint64_t seed = 0;
  Color background{1.0, 1.0, 1.0};
};

// Renders RGB+depth+mask from cameras on the upper sphere, unprojects the
// depth pixels into a colored point cloud, and uniformly subsamples it to
// n_points without replacement. Tensor payloads are rounded to their storage
// precision (8-bit images, 32-bit point coordinates), so saving and loading
// reproduces the record exactly.
void bake_reference_views(ShapeRecord& rec, const BakeOptions& opts);

// Cartesian prompt expansion "<name> <activity> in <style> style" over a
// name->shape pairing; (style, activity) combinations listed in held_out are
// tagged "unseen". Empty style/activity lists drop the clause.
PromptManifest expand_prompts_rulebased(
    const std::vector<std::pair<std::string, std::string>>& names_with_shape_ids,
    const std::vector<std::string>& styles, const std::vector<std::string>& activities,
    const std::vector<std::pair<std::string, std::string>>& held_out = {});

// Parameterized sphere/box/torus/cylinder with distinct solid colors, fully
// normalized and baked.
std::vector<ShapeRecord> procedural_shapes(const BakeOptions& opts);

// Desk-scale dataset: procedural shapes plus a small rule-based manifest.
Dataset procedural_dataset(const BakeOptions& opts);

void save_dataset(const std::string& root, const Dataset& ds);
Dataset load_dataset(const std::string& root);

}  // namespace tritex
