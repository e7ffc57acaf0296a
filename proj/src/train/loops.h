#pragma once

#include <functional>
#include <memory>
#include <string>

#include "data/dataset.h"
#include "guidance/guidance.h"
#include "nets/model.h"
#include "render/mcubes.h"
#include "render/raster.h"
#include "render/volume.h"
#include "train/config.h"
#include "train/losses.h"

namespace tritex {

struct LoopStats {
  int64_t steps = 0;
  double final_loss = 0.0;
  int64_t mesh_cache_builds = 0;  // stage-2: distinct items whose mesh was extracted
};

using ShapeGuidanceFactory =
    std::function<std::shared_ptr<GuidanceModel>(const ShapeRecord& shape, int64_t res)>;

// "mock" builds a target-image oracle whose targets are the shape's own
// reference renders, rasterized at the requested resolution; reserved adapter
// names ("mvdream", "sd-depth") raise because no diffusion model is bundled.
ShapeGuidanceFactory default_guidance_factory(const RunConfig& cfg);

VolumeRenderOptions volume_opts(const RunConfig& cfg, uint64_t jitter_seed);
Camera sample_train_camera(Rng& rng, const RunConfig& cfg, int64_t res);
// Takes k cameras from the adapter's preferred set (re-targeted to res),
// falling back to random sphere cameras when the set is empty.
std::vector<Camera> pick_view_cameras(const std::vector<Camera>& preferred, int64_t k, Rng& rng,
                                      const RunConfig& cfg, int64_t res);
std::vector<Camera> turntable_cameras(int64_t k, double radius, double elevation, double fov_y,
                                      int64_t res);

// Marching cubes over the SDF field on an n^3 grid spanning the unit box.
TriMesh extract_mesh(const SdfField& sdf, int64_t grid_n, double iso = 0.0);

// Reconstruction pretraining (prompts unused, surface-rendered references).
LoopStats pretrain_loop(Model& model, const Dataset& ds, const RunConfig& cfg,
                        const std::string& csv_path);

// Amortized stage-1: blended SDS + mask regularization with input annealing.
LoopStats stage1_loop(Model& model, const Dataset& ds, const RunConfig& cfg,
                      const ShapeGuidanceFactory& guidance, const std::string& csv_path);

// Frozen-geometry texture refinement through the upsampled texture path.
LoopStats stage2_loop(Model& model, const Dataset& ds, const RunConfig& cfg,
                      const ShapeGuidanceFactory& guidance, const std::string& csv_path);

// Per-prompt refinement from a stage-2-shaped checkpoint with the dummy
// point cloud.
LoopStats test_time_optimize(Model& model, const std::string& prompt_text, const RunConfig& cfg,
                             std::shared_ptr<GuidanceModel> guidance,
                             const std::string& csv_path);

// Deterministic eval helpers (unjittered rays, fixed cameras).
double eval_recon_l2(const Model& model, const ShapeRecord& shape, const ColoredPointCloud& pc,
                     const PromptRecord* prompt, double alpha, const RunConfig& cfg,
                     int64_t n_views);
double eval_mask_iou_vs_ref(const Model& model, const ShapeRecord& shape,
                            const ColoredPointCloud& pc, const PromptRecord* prompt, double alpha,
                            const RunConfig& cfg);

std::shared_ptr<PromptEmbedder> make_embedder(const RunConfig& cfg);

struct GeneratedAsset {
  TriMesh mesh;       // vertex colors sampled from the texture field
  Triplane geometry;  // decoded geometry triplane
  Triplane texture;   // decoded texture triplane (stage-2 path when present)
  int stage = 1;
};

GeneratedAsset generate_asset(const Model& model, const PromptRecord& prompt,
                              const ColoredPointCloud& pc, double alpha, const RunConfig& cfg);
RgbField texture_field_of(const Model& model, const Triplane& texture);
std::vector<RenderedView> render_turntable(const Model& model, const GeneratedAsset& asset,
                                           int64_t n_views, const RunConfig& cfg);

}  // namespace tritex
