#include "train/loops.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "core/ops.h"
#include "train/optimizer.h"

namespace tritex {

namespace {

class CsvLogger {
 public:
  explicit CsvLogger(const std::string& path) {
    if (path.empty()) return;
    os_.open(path, std::ios::trunc);
    if (!os_) throw std::runtime_error("cannot open metrics log: " + path);
    os_ << "step,loss,l_sds,l_reg,alpha,anneal_p\n";
  }
  void log(int64_t step, double loss, double l_sds, double l_reg, double alpha, double p) {
    if (!os_.is_open()) return;
    char buf[224];
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(step), loss, l_sds, l_reg, alpha, p);
    os_ << buf;
    os_.flush();
  }

 private:
  std::ofstream os_;
};

void require_finite(double v, const char* loop, int64_t step, const std::string& batch_desc) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string(loop) + ": non-finite loss at step " +
                             std::to_string(step) + "; offending batch: " + batch_desc);
}

std::vector<int64_t> sample_pixels(Rng& rng, int64_t total, int64_t k) {
  std::vector<int64_t> ids(total);
  std::iota(ids.begin(), ids.end(), 0);
  if (k <= 0 || k >= total) return ids;
  for (int64_t i = 0; i < k; ++i) {
    const int64_t j = i + rng.uniform_int(total - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  return ids;
}

// Snapshot/restore of requires_grad flags for no-grad eval sections.
class FlagGuard {
 public:
  explicit FlagGuard(const ParamStore& ps) : ps_(const_cast<ParamStore&>(ps)) {
    for (auto& [name, t] : ps_.items()) {
      saved_.push_back(t.requires_grad());
      t.set_requires_grad(false);
    }
  }
  ~FlagGuard() {
    size_t i = 0;
    for (auto& [name, t] : ps_.items()) t.set_requires_grad(saved_[i++]);
  }

 private:
  ParamStore& ps_;
  std::vector<bool> saved_;
};

}  // namespace

ShapeGuidanceFactory default_guidance_factory(const RunConfig& cfg) {
  const GuidanceSpec spec = lookup_guidance(cfg.guidance);
  if (!spec.available)
    throw std::runtime_error("guidance adapter '" + cfg.guidance +
                             "' is a registered extension point, but no diffusion model is "
                             "bundled; use 'mock'");
  const Color bg{cfg.background[0], cfg.background[1], cfg.background[2]};
  return [bg](const ShapeRecord& shape, int64_t res) {
    std::vector<Tensor> targets;
    std::vector<Camera> cams;
    targets.reserve(shape.ref_cameras.size());
    for (Camera cam : shape.ref_cameras) {
      cam.height = res;
      cam.width = res;
      targets.push_back(rasterize_vertex_colors(shape.mesh, cam, bg).rgb);
      cams.push_back(cam);
    }
    return mock_target_guidance(std::move(targets), std::move(cams));
  };
}

VolumeRenderOptions volume_opts(const RunConfig& cfg, uint64_t jitter_seed) {
  VolumeRenderOptions o;
  o.n_samples = static_cast<int>(cfg.render_samples);
  o.density = cfg.density();
  o.background = {cfg.background[0], cfg.background[1], cfg.background[2]};
  o.jitter = true;
  o.jitter_seed = jitter_seed;
  return o;
}

Camera sample_train_camera(Rng& rng, const RunConfig& cfg, int64_t res) {
  const double radius = rng.uniform(cfg.camera_radius_min, cfg.camera_radius_max);
  return sample_camera_sphere(rng, radius, cfg.cameras_upper_only, cfg.fov_y, res, res);
}

std::vector<Camera> pick_view_cameras(const std::vector<Camera>& preferred, int64_t k, Rng& rng,
                                      const RunConfig& cfg, int64_t res) {
  std::vector<Camera> out;
  out.reserve(k);
  if (preferred.empty()) {
    for (int64_t i = 0; i < k; ++i) out.push_back(sample_train_camera(rng, cfg, res));
    return out;
  }
  const int64_t n = static_cast<int64_t>(preferred.size());
  std::vector<int64_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  for (int64_t i = 0; i < std::min(k, n); ++i) {
    const int64_t j = i + rng.uniform_int(n - i);
    std::swap(ids[i], ids[j]);
  }
  for (int64_t i = 0; i < k; ++i) {
    Camera c = preferred[ids[i % n]];
    c.height = res;
    c.width = res;
    out.push_back(c);
  }
  return out;
}

std::vector<Camera> turntable_cameras(int64_t k, double radius, double elevation, double fov_y,
                                      int64_t res) {
  std::vector<Camera> out;
  for (int64_t i = 0; i < k; ++i) {
    const double az = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(k);
    const Vec3 pos{radius * std::cos(elevation) * std::cos(az),
                   radius * std::cos(elevation) * std::sin(az), radius * std::sin(elevation)};
    out.push_back(make_camera(pos, {0, 0, 0}, fov_y, res, res));
  }
  return out;
}

TriMesh extract_mesh(const SdfField& sdf, int64_t grid_n, double iso) {
  ScalarGrid grid = ScalarGrid::unit_box(grid_n);
  const int64_t total = grid_n * grid_n * grid_n;
  const int64_t chunk = 32768;
  for (int64_t start = 0; start < total; start += chunk) {
    const int64_t end = std::min(total, start + chunk);
    std::vector<double> pts;
    pts.reserve((end - start) * 3);
    for (int64_t id = start; id < end; ++id) {
      const int64_t iz = id % grid_n;
      const int64_t iy = (id / grid_n) % grid_n;
      const int64_t ix = id / (grid_n * grid_n);
      const Vec3 p = grid.position(ix, iy, iz);
      pts.push_back(p.x);
      pts.push_back(p.y);
      pts.push_back(p.z);
    }
    Tensor v = sdf(FieldQuery::of(std::move(pts)));
    std::copy(v.data(), v.data() + (end - start), grid.values.begin() + start);
  }
  return marching_cubes(grid, iso);
}

std::shared_ptr<PromptEmbedder> make_embedder(const RunConfig& cfg) {
  // seeded by the embedder name only: prompt records must agree across
  // stages and runs regardless of the training seed
  return create_embedder(cfg.embedder, cfg.model.prompt_dim, hash_str(cfg.embedder));
}

LoopStats pretrain_loop(Model& model, const Dataset& ds, const RunConfig& cfg,
                        const std::string& csv_path) {
  if (ds.shapes.empty()) throw std::invalid_argument("pretrain_loop: empty dataset");
  model.apply_stage_flags(StageTag::kPretrain, false);
  AdamOptimizer opt(model.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps, cfg.grad_clip);
  CsvLogger csv(csv_path);
  Rng root(hash_combine(cfg.seed, hash_str("pretrain")));
  LoopStats stats;
  const Color bg{cfg.background[0], cfg.background[1], cfg.background[2]};
  const int64_t n_px = cfg.render_res * cfg.render_res;
  const double item_scale =
      1.0 / static_cast<double>(cfg.batch_shapes_pretrain * cfg.batch_views_pretrain);

  for (int64_t step = 0; step < cfg.pretrain_iters; ++step) {
    opt.zero_grad();
    Rng srng = root.split(static_cast<uint64_t>(step));
    double loss_val = 0.0;
    std::string batch_desc;
    for (int64_t b = 0; b < cfg.batch_shapes_pretrain; ++b) {
      Rng brng = srng.split(static_cast<uint64_t>(b));
      const ShapeRecord& shape =
          ds.shapes[brng.uniform_int(static_cast<int64_t>(ds.shapes.size()))];
      batch_desc += shape.id + " ";
      auto fields = model.forward_fields(nullptr, shape.pointcloud, 1.0, 1);
      for (int64_t v = 0; v < cfg.batch_views_pretrain; ++v) {
        Rng vrng = brng.split(hash_combine(hash_str("view"), static_cast<uint64_t>(v)));
        Camera cam = sample_train_camera(vrng, cfg, cfg.render_res);
        Rng prng = vrng.split("pixels");
        const std::vector<int64_t> pixels = sample_pixels(prng, n_px, cfg.rays_per_view);
        RayBatch rays = volume_render_rays(fields.sdf, fields.rgb, cam,
                                           volume_opts(cfg, vrng.split("jitter").seed()), pixels);
        RenderedView ref = rasterize_vertex_colors(shape.mesh, cam, bg);
        Tensor lv = recon_loss_rays(rays, ref, static_cast<int64_t>(pixels.size()));
        loss_val += lv.item() * item_scale;
        backward(scale(lv, item_scale));  // frees this view's graph before the next
      }
    }
    require_finite(loss_val, "pretrain_loop", step, batch_desc);
    opt.step();
    csv.log(step, loss_val, 0.0, 0.0, 1.0, 0.0);
    stats.steps = step + 1;
    stats.final_loss = loss_val;
  }
  return stats;
}

LoopStats stage1_loop(Model& model, const Dataset& ds, const RunConfig& cfg,
                      const ShapeGuidanceFactory& guidance, const std::string& csv_path) {
  if (ds.manifest.entries.empty()) throw std::invalid_argument("stage1_loop: empty manifest");
  model.apply_stage_flags(StageTag::kStage1, false);
  bool frozen_now = false;
  AdamOptimizer opt(model.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps, cfg.grad_clip);
  CsvLogger csv(csv_path);
  const NoiseSchedule sched = default_schedule(cfg.noise_timesteps);
  const auto embedder = make_embedder(cfg);
  const ColoredPointCloud dummy = dummy_sphere_pointcloud(cfg.dummy_points, cfg.dummy_radius);
  std::map<std::string, std::shared_ptr<GuidanceModel>> guide_cache;
  Rng root(hash_combine(cfg.seed, hash_str("stage1")));
  LoopStats stats;
  const Color bg{cfg.background[0], cfg.background[1], cfg.background[2]};

  for (int64_t step = 0; step < cfg.stage1_iters; ++step) {
    const double p_anneal =
        cfg.stylization_mode ? 0.0
                             : anneal_probability(step, cfg.stage1_iters, cfg.anneal_window);
    const bool annealing = p_anneal > 0.0;
    if (annealing != frozen_now) {
      model.apply_stage_flags(StageTag::kStage1, annealing);
      frozen_now = annealing;
    }
    opt.zero_grad();
    Rng srng = root.split(static_cast<uint64_t>(step));
    double loss_val = 0.0, sds_val = 0.0, reg_val = 0.0, alpha_last = 0.0;
    std::string batch_desc;
    const double item_scale = 1.0 / static_cast<double>(cfg.batch_shapes_stage1);

    for (int64_t b = 0; b < cfg.batch_shapes_stage1; ++b) {
      Rng brng = srng.split(static_cast<uint64_t>(b));
      const PromptEntry& entry =
          ds.manifest.entries[brng.uniform_int(static_cast<int64_t>(ds.manifest.entries.size()))];
      const ShapeRecord& shape = ds.shape_by_id(entry.shape_id);
      batch_desc += entry.shape_id + "/'" + entry.prompt + "' ";
      const double alpha = sample_blend_factor(cfg, brng);
      alpha_last = alpha;
      PromptRecord prompt = embedder->embed(entry.prompt);
      Rng mix_rng = brng.split("mix");
      const ColoredPointCloud pc = mix_pointclouds(shape.pointcloud, dummy, p_anneal, mix_rng);
      auto fields = model.forward_fields(&prompt, pc, alpha, 1);

      auto git = guide_cache.find(entry.shape_id);
      if (git == guide_cache.end())
        git = guide_cache.emplace(entry.shape_id, guidance(shape, cfg.render_res)).first;
      const GuidanceModel& gm = *git->second;

      // 3D-aware multi-view SDS on views_sds views
      const double sds_coeff = (1.0 - alpha) * cfg.sds_multiplier * item_scale;
      if (sds_coeff != 0.0) {
        Rng cam_rng = brng.split("sds-cams");
        const std::vector<Camera> cams =
            pick_view_cameras(gm.preferred_cameras(), cfg.views_sds, cam_rng, cfg, cfg.render_res);
        GuidanceContext ctx;
        ctx.prompt = prompt;
        ctx.cameras = cams;
        std::vector<RenderedView> views;
        for (size_t v = 0; v < cams.size(); ++v) {
          Rng vrng = brng.split(hash_combine(hash_str("sds-view"), v));
          views.push_back(volume_render(fields.sdf, fields.rgb, cams[v],
                                        volume_opts(cfg, vrng.seed())));
          ctx.views.push_back(views.back().rgb);
        }
        Rng trng = brng.split("timestep");
        const int64_t t = sample_timestep(sched, cfg.stage1_range(), trng);
        std::vector<Tensor> eps;
        Rng erng = brng.split("eps");
        for (const auto& v : ctx.views) eps.push_back(Tensor::randn(v.shape(), erng));
        const std::vector<Tensor> grads = sds_gradient(gm, ctx, t, eps, sched);
        Tensor l_sds = sds_surrogate(grads, ctx.views);
        sds_val += l_sds.item() * item_scale;
        loss_val += (1.0 - alpha) * cfg.sds_multiplier * l_sds.item() * item_scale;
        backward(scale(l_sds, sds_coeff));
      }

      // shape regularization on an independently sampled view
      if (alpha != 0.0) {
        Rng rrng = brng.split("reg-cam");
        for (int64_t rv = 0; rv < cfg.views_reg; ++rv) {
          Camera reg_cam = sample_train_camera(rrng, cfg, cfg.render_res);
          RenderedView pred = volume_render(fields.sdf, fields.rgb, reg_cam,
                                            volume_opts(cfg, rrng.split("jitter").seed()));
          RenderedView ref = rasterize_vertex_colors(shape.mesh, reg_cam, bg);
          Tensor l_reg = reg_loss(pred.opacity, ref.opacity);
          if (cfg.stylization_mode && cfg.stylization_rgb_loss)
            l_reg = add(l_reg, mse(pred.rgb, ref.rgb));
          const double reg_scale = item_scale / static_cast<double>(cfg.views_reg);
          reg_val += l_reg.item() * reg_scale;
          loss_val += alpha * l_reg.item() * reg_scale;
          backward(scale(l_reg, alpha * reg_scale));
        }
      }
    }
    require_finite(loss_val, "stage1_loop", step, batch_desc);
    opt.step();
    csv.log(step, loss_val, sds_val, reg_val, alpha_last, p_anneal);
    stats.steps = step + 1;
    stats.final_loss = loss_val;
  }
  return stats;
}

namespace {

struct TextureItem {
  TriMesh mesh;
  Tensor encoded;  // detached encoder-U-Net output
  PromptRecord prompt;
  std::shared_ptr<GuidanceModel> guidance;
  double alpha = 0.0;
  int64_t mesh_uses = 0;
};

// One frozen-geometry texture step over a single item; used by stage-2
// training and test-time optimization.
struct TextureLoopCtx {
  Model& model;
  const RunConfig& cfg;
  const NoiseSchedule& sched;
  AdamOptimizer& opt;
  CsvLogger& csv;
  int64_t views_per_iter;
};

double texture_step(TextureLoopCtx& lc, TextureItem& item, int64_t step, Rng& srng,
                    double* sds_out) {
  const RunConfig& cfg = lc.cfg;
  item.mesh_uses += 1;

  Triplane enc = Triplane::wrap(item.encoded, cfg.model.triplane_extent);
  Triplane tex = lc.model.unet_decode_stage2(lc.model.upsample_triplane(enc, item.prompt));
  RgbField rgb = texture_field_of(lc.model, tex);

  Rng cam_rng = srng.split("cams");
  const std::vector<Camera> cams = pick_view_cameras(
      item.guidance->preferred_cameras(), lc.views_per_iter, cam_rng, cfg, cfg.raster_res);
  GuidanceContext ctx;
  ctx.prompt = item.prompt;
  ctx.cameras = cams;
  const Color bg{cfg.background[0], cfg.background[1], cfg.background[2]};
  for (const Camera& cam : cams) {
    RenderedView v = rasterize(item.mesh, rgb, cam, bg, /*with_depth=*/true);
    ctx.views.push_back(v.rgb);
    ctx.depths.push_back(v.depth);  // depth-conditioned adapters read these
  }

  const TimestepRange range = anneal_timestep_range(step, cfg.timestep_anneal_iters,
                                                    cfg.anneal_start(), cfg.anneal_end());
  Rng trng = srng.split("timestep");
  const int64_t t = sample_timestep(lc.sched, range, trng);
  std::vector<Tensor> eps;
  Rng erng = srng.split("eps");
  for (const auto& v : ctx.views) eps.push_back(Tensor::randn(v.shape(), erng));
  const std::vector<Tensor> grads = sds_gradient(*item.guidance, ctx, t, eps, lc.sched);
  Tensor l_sds = sds_surrogate(grads, ctx.views);
  const double sval = l_sds.item();
  if (sds_out) *sds_out = sval;
  backward(scale(l_sds, cfg.sds_multiplier));
  return cfg.sds_multiplier * sval;
}

TextureItem build_texture_item(Model& model, const RunConfig& cfg, const ShapeRecord* shape,
                               const ColoredPointCloud& pc, const PromptRecord& prompt,
                               double alpha, std::shared_ptr<GuidanceModel> guidance) {
  TextureItem item;
  item.prompt = prompt;
  item.alpha = alpha;
  item.guidance = std::move(guidance);
  (void)shape;
  // geometry is frozen: run the shared path once, keep the results
  FlagGuard guard(model.params());
  Triplane enc_in = model.encode_points(pc);
  Triplane encoded = model.unet_encode(enc_in, &prompt, alpha);
  item.encoded = encoded.planes.detach();
  Triplane geo = model.unet_decode(encoded);
  SdfField sdf = [&model, geo](const FieldQuery& q) {
    return model.sdf_head(sample_triplane(geo, q), q);
  };
  item.mesh = extract_mesh(sdf, cfg.mc_grid);
  return item;
}

}  // namespace

RgbField texture_field_of(const Model& model, const Triplane& texture) {
  return [&model, texture](const FieldQuery& q) {
    return model.rgb_head(sample_triplane(texture, q), q);
  };
}

LoopStats stage2_loop(Model& model, const Dataset& ds, const RunConfig& cfg,
                      const ShapeGuidanceFactory& guidance, const std::string& csv_path) {
  if (ds.manifest.entries.empty()) throw std::invalid_argument("stage2_loop: empty manifest");
  model.ensure_stage2_params();
  model.apply_stage_flags(StageTag::kStage2, false);
  AdamOptimizer opt(model.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps, cfg.grad_clip);
  CsvLogger csv(csv_path);
  const NoiseSchedule sched = default_schedule(cfg.noise_timesteps);
  const auto embedder = make_embedder(cfg);
  Rng root(hash_combine(cfg.seed, hash_str("stage2")));
  std::map<std::string, TextureItem> cache;
  TextureLoopCtx lc{model, cfg, sched, opt, csv, cfg.views_stage2};
  LoopStats stats;

  for (int64_t step = 0; step < cfg.stage2_iters; ++step) {
    opt.zero_grad();
    Rng srng = root.split(static_cast<uint64_t>(step));
    const PromptEntry& entry =
        ds.manifest.entries[srng.uniform_int(static_cast<int64_t>(ds.manifest.entries.size()))];
    const std::string key = entry.shape_id + "\n" + entry.prompt;
    auto it = cache.find(key);
    if (it == cache.end()) {
      const ShapeRecord& shape = ds.shape_by_id(entry.shape_id);
      Rng arng(hash_combine(cfg.seed, hash_str(key)));
      const double alpha = sample_blend_factor(cfg, arng);
      it = cache
               .emplace(key, build_texture_item(model, cfg, &shape, shape.pointcloud,
                                                embedder->embed(entry.prompt), alpha,
                                                guidance(shape, cfg.raster_res)))
               .first;
    }
    double sds_val = 0.0;
    const double loss = texture_step(lc, it->second, step, srng, &sds_val);
    require_finite(loss, "stage2_loop", step, key);
    opt.step();
    csv.log(step, loss, sds_val, 0.0, it->second.alpha, 0.0);
    stats.steps = step + 1;
    stats.final_loss = loss;
  }
  stats.mesh_cache_builds = static_cast<int64_t>(cache.size());
  return stats;
}

LoopStats test_time_optimize(Model& model, const std::string& prompt_text, const RunConfig& cfg,
                             std::shared_ptr<GuidanceModel> guidance,
                             const std::string& csv_path) {
  model.ensure_stage2_params();
  model.apply_stage_flags(StageTag::kTto, false);
  AdamOptimizer opt(model.params(), cfg.tto_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                    cfg.grad_clip);
  CsvLogger csv(csv_path);
  const NoiseSchedule sched = default_schedule(cfg.noise_timesteps);
  const auto embedder = make_embedder(cfg);
  const ColoredPointCloud dummy = dummy_sphere_pointcloud(cfg.dummy_points, cfg.dummy_radius);
  Rng root(hash_combine(cfg.seed, hash_str("tto")));

  TextureItem item = build_texture_item(model, cfg, nullptr, dummy, embedder->embed(prompt_text),
                                        cfg.alpha_fixed, std::move(guidance));
  TextureLoopCtx lc{model, cfg, sched, opt, csv, cfg.views_tto};
  LoopStats stats;
  for (int64_t step = 0; step < cfg.tto_iters; ++step) {
    opt.zero_grad();
    Rng srng = root.split(static_cast<uint64_t>(step));
    double sds_val = 0.0;
    const double loss = texture_step(lc, item, step, srng, &sds_val);
    require_finite(loss, "test_time_optimize", step, prompt_text);
    opt.step();
    csv.log(step, loss, sds_val, 0.0, item.alpha, 0.0);
    stats.steps = step + 1;
    stats.final_loss = loss;
  }
  return stats;
}

double eval_recon_l2(const Model& model, const ShapeRecord& shape, const ColoredPointCloud& pc,
                     const PromptRecord* prompt, double alpha, const RunConfig& cfg,
                     int64_t n_views) {
  FlagGuard guard(model.params());
  auto fields = model.forward_fields(prompt, pc, alpha, 1);
  const int64_t k = std::min<int64_t>(n_views, static_cast<int64_t>(shape.ref_views.size()));
  if (k == 0) throw std::invalid_argument("eval_recon_l2: shape has no reference views");
  double acc = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    VolumeRenderOptions opts = volume_opts(cfg, 0);
    opts.jitter = false;
    RenderedView pred = volume_render(fields.sdf, fields.rgb, shape.ref_cameras[i], opts);
    acc += recon_loss({pred}, {shape.ref_views[i]}).item();
  }
  return acc / static_cast<double>(k);
}

double eval_mask_iou_vs_ref(const Model& model, const ShapeRecord& shape,
                            const ColoredPointCloud& pc, const PromptRecord* prompt, double alpha,
                            const RunConfig& cfg) {
  FlagGuard guard(model.params());
  auto fields = model.forward_fields(prompt, pc, alpha, 1);
  const auto cams = turntable_cameras(cfg.eval_views, cfg.data_camera_radius,
                                      cfg.eval_elevation, cfg.fov_y, cfg.render_res);
  const Color bg{cfg.background[0], cfg.background[1], cfg.background[2]};
  double acc = 0.0;
  for (const Camera& cam : cams) {
    VolumeRenderOptions opts = volume_opts(cfg, 0);
    opts.jitter = false;
    RenderedView pred = volume_render(fields.sdf, fields.rgb, cam, opts);
    RenderedView ref = rasterize_vertex_colors(shape.mesh, cam, bg);
    double inter = 0.0, uni = 0.0;
    for (int64_t i = 0; i < pred.opacity.numel(); ++i) {
      const bool a = pred.opacity.data()[i] > 0.5;
      const bool b = ref.opacity.data()[i] > 0.5;
      inter += (a && b) ? 1.0 : 0.0;
      uni += (a || b) ? 1.0 : 0.0;
    }
    acc += uni == 0.0 ? 1.0 : inter / uni;
  }
  return acc / static_cast<double>(cams.size());
}

GeneratedAsset generate_asset(const Model& model, const PromptRecord& prompt,
                              const ColoredPointCloud& pc, double alpha, const RunConfig& cfg) {
  FlagGuard guard(model.params());
  GeneratedAsset asset;
  asset.stage = model.has_stage2_params() ? 2 : 1;
  auto fields = model.forward_fields(&prompt, pc, alpha, asset.stage);
  asset.geometry = Triplane::wrap(fields.geo_decoded.planes.detach(), cfg.model.triplane_extent);
  asset.texture = Triplane::wrap(fields.tex_decoded.planes.detach(), cfg.model.triplane_extent);
  asset.mesh = extract_mesh(fields.sdf, cfg.mc_grid);
  if (!asset.mesh.vertices.empty()) {
    std::vector<double> pts;
    pts.reserve(asset.mesh.vertices.size() * 3);
    for (const auto& v : asset.mesh.vertices) {
      pts.push_back(v.x);
      pts.push_back(v.y);
      pts.push_back(v.z);
    }
    Tensor colors = fields.rgb(FieldQuery::of(std::move(pts)));
    asset.mesh.vertex_colors.resize(asset.mesh.vertices.size());
    for (size_t i = 0; i < asset.mesh.vertices.size(); ++i)
      asset.mesh.vertex_colors[i] = {colors.at({static_cast<int64_t>(i), 0}),
                                     colors.at({static_cast<int64_t>(i), 1}),
                                     colors.at({static_cast<int64_t>(i), 2})};
  }
  return asset;
}

std::vector<RenderedView> render_turntable(const Model& model, const GeneratedAsset& asset,
                                           int64_t n_views, const RunConfig& cfg) {
  FlagGuard guard(model.params());
  const RgbField rgb = texture_field_of(model, asset.texture);
  const Color bg{cfg.background[0], cfg.background[1], cfg.background[2]};
  std::vector<RenderedView> out;
  for (const Camera& cam : turntable_cameras(n_views, cfg.data_camera_radius, cfg.eval_elevation,
                                             cfg.fov_y, cfg.raster_res))
    out.push_back(rasterize(asset.mesh, rgb, cam, bg));
  return out;
}

}  // namespace tritex
