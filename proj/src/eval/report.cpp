#include "eval/report.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "core/image.h"
#include "core/serialize.h"
#include "render/raster.h"
#include "render/volume.h"
#include "train/loops.h"

namespace fs = std::filesystem;

namespace tritex {

namespace {

std::vector<std::vector<double>> load_reference_features(const std::string& dir,
                                                         const ImageEmbedder& embedder) {
  std::vector<std::vector<double>> feats;
  if (dir.empty()) return feats;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) feats.push_back(embedder.embed_image(u8_to_tensor(load_png(f.string()))));
  return feats;
}

}  // namespace

MetricReport evaluate_model(const Model& model, const Dataset& ds, const RunConfig& cfg,
                            const std::string& ref_image_dir) {
  if (ds.manifest.entries.empty()) throw std::invalid_argument("evaluate_model: empty manifest");
  const auto embedder = create_image_embedder("downsample8");
  const auto prompt_embedder = make_embedder(cfg);
  const ColoredPointCloud dummy = dummy_sphere_pointcloud(cfg.dummy_points, cfg.dummy_radius);
  const std::vector<std::vector<double>> ref_feats =
      load_reference_features(ref_image_dir, *embedder);
  const Color bg{cfg.background[0], cfg.background[1], cfg.background[2]};

  MetricReport report;
  for (const auto& entry : ds.manifest.entries) {
    const ShapeRecord& shape = ds.shape_by_id(entry.shape_id);
    const PromptRecord prompt = prompt_embedder->embed(entry.prompt);

    MetricRow row;
    row.prompt = entry.prompt;

    // volume masks vs the paired shape's silhouettes at matched cameras
    const auto cams = turntable_cameras(cfg.eval_views, cfg.data_camera_radius,
                                        cfg.eval_elevation, cfg.fov_y, cfg.render_res);
    GeneratedAsset asset = generate_asset(model, prompt, dummy, cfg.alpha_fixed, cfg);
    const SdfField sdf = [&](const FieldQuery& q) {
      return model.sdf_head(sample_triplane(asset.geometry, q), q);
    };
    const RgbField rgb = texture_field_of(model, asset.texture);

    std::vector<std::vector<double>> model_mask_feats, ref_mask_feats;
    double iou_acc = 0.0;
    for (const Camera& cam : cams) {
      VolumeRenderOptions opts = volume_opts(cfg, 0);
      opts.jitter = false;
      RenderedView pred = volume_render(sdf, rgb, cam, opts);
      Tensor model_mask = binarize_opacity(pred, 0.5);
      Tensor ref_mask = binarize_opacity(rasterize_vertex_colors(shape.mesh, cam, bg), 0.5);
      iou_acc += mask_iou(model_mask, ref_mask);
      model_mask_feats.push_back(embedder->embed_image(model_mask));
      ref_mask_feats.push_back(embedder->embed_image(ref_mask));
    }
    row.mask_iou = iou_acc / static_cast<double>(cams.size());
    if (model_mask_feats.size() >= 2)
      row.mask_fid = feature_fid(model_mask_feats, ref_mask_feats);

    const auto views = render_turntable(model, asset, cfg.eval_views, cfg);
    std::vector<Tensor> rgb_views;
    for (const auto& v : views) rgb_views.push_back(v.rgb);
    row.clip_score = clip_score(*embedder, entry.prompt, rgb_views);

    if (ref_feats.size() >= 2 && rgb_views.size() >= 2) {
      std::vector<std::vector<double>> rendered_feats;
      for (const auto& v : rgb_views) rendered_feats.push_back(embedder->embed_image(v));
      row.render_fid = feature_fid(rendered_feats, ref_feats);
    }
    report.rows.push_back(std::move(row));
  }

  // aggregate = mean of rows, null-aware per column
  MetricRow& agg = report.aggregate;
  agg.prompt = "aggregate";
  double iou = 0.0, mfid = 0.0, cs = 0.0, rfid = 0.0;
  int64_t n_mfid = 0, n_cs = 0, n_rfid = 0;
  for (const auto& r : report.rows) {
    iou += r.mask_iou;
    if (r.mask_fid) {
      mfid += *r.mask_fid;
      ++n_mfid;
    }
    if (r.clip_score) {
      cs += *r.clip_score;
      ++n_cs;
    }
    if (r.render_fid) {
      rfid += *r.render_fid;
      ++n_rfid;
    }
  }
  agg.mask_iou = iou / static_cast<double>(report.rows.size());
  if (n_mfid) agg.mask_fid = mfid / n_mfid;
  if (n_cs) agg.clip_score = cs / n_cs;
  if (n_rfid) agg.render_fid = rfid / n_rfid;

  report.metadata["profile"] = cfg.profile;
  report.metadata["seed"] = std::to_string(cfg.seed);
  return report;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "null";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::string fmt_val(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void save_report_csv(const std::string& path, const MetricReport& report) {
  AtomicFileWriter w(path);
  auto& os = w.stream();
  for (const auto& [k, v] : report.metadata) os << "# " << k << "=" << v << "\n";
  os << "prompt,mask_iou,mask_fid,clip_score,render_fid\n";
  auto write_row = [&](const MetricRow& r) {
    os << csv_quote(r.prompt) << "," << fmt_val(r.mask_iou) << "," << fmt_opt(r.mask_fid) << ","
       << fmt_opt(r.clip_score) << "," << fmt_opt(r.render_fid) << "\n";
  };
  for (const auto& r : report.rows) write_row(r);
  write_row(report.aggregate);
  w.commit();
}

}  // namespace tritex
