#pragma once

#include <array>
#include <string>

#include "guidance/guidance.h"
#include "nets/model.h"
#include "render/view.h"

namespace tritex {

// Every knob of the pipeline, addressable as dotted key = value text. The
// "desk" profile is sized for a single CPU; "paper" preserves the full-scale
// architecture and rendering numbers.
struct RunConfig {
  std::string profile = "desk";
  uint64_t seed = 0;

  ModelConfig model;

  // data
  int64_t data_points_per_shape = 2048;
  int64_t data_bake_views = 32;
  int64_t data_bake_res = 64;
  double data_camera_radius = 3.0;

  // render
  int64_t render_res = 64;       // stage-1 volume renders
  int64_t render_samples = 32;   // samples per ray
  int64_t mc_grid = 64;          // marching-cubes grid per side
  int64_t raster_res = 256;      // stage-2 rasters
  double density_beta = 0.01;
  double density_alpha = 100.0;
  double mask_density_beta = 0.002;  // sharp density for mask-vs-surface comparisons
  double mask_density_alpha = 500.0;
  double camera_radius_min = 2.5;
  double camera_radius_max = 3.5;
  double fov_y = 0.6981317007977318;  // 40 degrees
  std::array<double, 3> background{1.0, 1.0, 1.0};
  bool cameras_upper_only = true;

  // training
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;
  double sds_multiplier = 0.001;
  std::string alpha_mode = "fixed";  // "fixed" | "amortized"
  double alpha_fixed = 0.2;
  double alpha_lo = 0.0;
  double alpha_hi = 0.3;
  int64_t views_sds = 4;
  int64_t views_reg = 1;
  int64_t views_stage2 = 10;
  int64_t views_tto = 8;
  int64_t pretrain_iters = 2000;
  int64_t stage1_iters = 3000;
  int64_t anneal_window = 500;
  int64_t stage2_iters = 600;
  int64_t tto_iters = 600;
  double tto_lr = 1e-4;
  int64_t timestep_anneal_iters = 400;
  double t_lo_stage1 = 0.1, t_hi_stage1 = 0.9;
  double t_lo_start = 0.5, t_hi_start = 0.9;
  double t_lo_end = 0.1, t_hi_end = 0.5;
  int64_t noise_timesteps = 1000;
  bool stylization_mode = false;
  bool stylization_rgb_loss = false;
  int64_t batch_shapes_pretrain = 1;
  int64_t batch_views_pretrain = 2;
  int64_t batch_shapes_stage1 = 1;
  int64_t rays_per_view = 1024;  // pretraining pixel subsample; 0 = all rays
  int64_t dummy_points = 2048;
  double dummy_radius = 0.35;
  std::string guidance = "mock";
  std::string embedder = "hash";
  int64_t infer_views = 8;
  int64_t eval_views = 4;
  double eval_elevation = 0.35;  // radians, for the fixed turntable cameras

  static RunConfig desk();
  static RunConfig paper();
  static RunConfig from_profile(const std::string& name);

  DensityParams density() const { return {density_beta, density_alpha}; }
  DensityParams mask_density() const { return {mask_density_beta, mask_density_alpha}; }
  TimestepRange stage1_range() const { return {t_lo_stage1, t_hi_stage1}; }
  TimestepRange anneal_start() const { return {t_lo_start, t_hi_start}; }
  TimestepRange anneal_end() const { return {t_lo_end, t_hi_end}; }

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::vector<std::string> keys() const;
  void load_file(const std::string& path);
  void save_file(const std::string& path) const;
  void validate() const;
};

}  // namespace tritex
