#include "train/config.h"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "core/serialize.h"

namespace tritex {

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = "paper";
  c.model = ModelConfig::paper();
  c.data_points_per_shape = 20480;
  c.data_bake_res = 256;
  c.render_res = 256;
  c.render_samples = 96;
  c.mc_grid = 256;
  c.raster_res = 1024;
  c.anneal_window = 5000;
  c.stage1_iters = 20000;
  c.rays_per_view = 0;
  c.dummy_points = 20480;
  c.batch_shapes_pretrain = 8;
  c.batch_shapes_stage1 = 8;
  return c;
}

RunConfig RunConfig::from_profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw std::invalid_argument("unknown profile '" + name + "' (expected desk or paper)");
}

namespace {

struct FieldBinding {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::vector<FieldBinding>& bindings() {
  static const std::vector<FieldBinding> b = [] {
    std::vector<FieldBinding> v;
    auto add_str = [&](const std::string& key, std::string RunConfig::* f) {
      v.push_back({key, [f](const RunConfig& c) { return c.*f; },
                   [f](RunConfig& c, const std::string& s) { c.*f = s; }});
    };
    auto add_i = [&](const std::string& key, int64_t RunConfig::* f) {
      v.push_back({key, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f](RunConfig& c, const std::string& s) { c.*f = std::stoll(s); }});
    };
    auto add_u = [&](const std::string& key, uint64_t RunConfig::* f) {
      v.push_back({key, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f](RunConfig& c, const std::string& s) { c.*f = std::stoull(s); }});
    };
    auto add_d = [&](const std::string& key, double RunConfig::* f) {
      v.push_back({key, [f](const RunConfig& c) { return fmt_double(c.*f); },
                   [f](RunConfig& c, const std::string& s) { c.*f = std::stod(s); }});
    };
    auto add_b = [&](const std::string& key, bool RunConfig::* f) {
      v.push_back({key, [f](const RunConfig& c) { return std::string(c.*f ? "true" : "false"); },
                   [f](RunConfig& c, const std::string& s) {
                     if (s == "true" || s == "1") c.*f = true;
                     else if (s == "false" || s == "0") c.*f = false;
                     else throw std::invalid_argument("bad boolean value '" + s + "'");
                   }});
    };
    auto add_mi = [&](const std::string& key, int64_t ModelConfig::* f) {
      v.push_back({key, [f](const RunConfig& c) { return std::to_string(c.model.*f); },
                   [f](RunConfig& c, const std::string& s) { c.model.*f = std::stoll(s); }});
    };
    auto add_md = [&](const std::string& key, double ModelConfig::* f) {
      v.push_back({key, [f](const RunConfig& c) { return fmt_double(c.model.*f); },
                   [f](RunConfig& c, const std::string& s) { c.model.*f = std::stod(s); }});
    };

    add_str("profile", &RunConfig::profile);
    add_u("seed", &RunConfig::seed);

    add_mi("model.prompt_dim", &ModelConfig::prompt_dim);
    add_mi("model.triplane_res", &ModelConfig::triplane_res);
    add_mi("model.triplane_ch", &ModelConfig::triplane_ch);
    add_md("model.triplane_extent", &ModelConfig::triplane_extent);
    add_mi("model.pe_blocks", &ModelConfig::pe_blocks);
    add_mi("model.pe_hidden", &ModelConfig::pe_hidden);
    add_mi("model.unet_depth", &ModelConfig::unet_depth);
    add_mi("model.unet_base", &ModelConfig::unet_base);
    add_mi("model.unet_max_mult", &ModelConfig::unet_max_mult);
    add_mi("model.gn_groups", &ModelConfig::gn_groups);
    add_mi("model.attn_heads", &ModelConfig::attn_heads);
    add_mi("model.attn_head_dim", &ModelConfig::attn_head_dim);
    add_mi("model.upsample_res", &ModelConfig::upsample_res);
    add_mi("model.head_hidden", &ModelConfig::head_hidden);
    add_md("model.sphere_radius", &ModelConfig::sphere_radius);

    add_i("data.points_per_shape", &RunConfig::data_points_per_shape);
    add_i("data.bake_views", &RunConfig::data_bake_views);
    add_i("data.bake_res", &RunConfig::data_bake_res);
    add_d("data.camera_radius", &RunConfig::data_camera_radius);

    add_i("render.res", &RunConfig::render_res);
    add_i("render.samples", &RunConfig::render_samples);
    add_i("render.mc_grid", &RunConfig::mc_grid);
    add_i("render.raster_res", &RunConfig::raster_res);
    add_d("render.density_beta", &RunConfig::density_beta);
    add_d("render.density_alpha", &RunConfig::density_alpha);
    add_d("render.mask_density_beta", &RunConfig::mask_density_beta);
    add_d("render.mask_density_alpha", &RunConfig::mask_density_alpha);
    add_d("render.camera_radius_min", &RunConfig::camera_radius_min);
    add_d("render.camera_radius_max", &RunConfig::camera_radius_max);
    add_d("render.fov_y", &RunConfig::fov_y);
    add_b("render.cameras_upper_only", &RunConfig::cameras_upper_only);

    add_d("train.learning_rate", &RunConfig::learning_rate);
    add_d("train.adam_beta1", &RunConfig::adam_beta1);
    add_d("train.adam_beta2", &RunConfig::adam_beta2);
    add_d("train.adam_eps", &RunConfig::adam_eps);
    add_d("train.grad_clip", &RunConfig::grad_clip);
    add_d("train.sds_multiplier", &RunConfig::sds_multiplier);
    add_str("train.alpha_mode", &RunConfig::alpha_mode);
    add_d("train.alpha_fixed", &RunConfig::alpha_fixed);
    add_d("train.alpha_lo", &RunConfig::alpha_lo);
    add_d("train.alpha_hi", &RunConfig::alpha_hi);
    add_i("train.views_sds", &RunConfig::views_sds);
    add_i("train.views_reg", &RunConfig::views_reg);
    add_i("train.views_stage2", &RunConfig::views_stage2);
    add_i("train.views_tto", &RunConfig::views_tto);
    add_i("train.pretrain_iters", &RunConfig::pretrain_iters);
    add_i("train.stage1_iters", &RunConfig::stage1_iters);
    add_i("train.anneal_window", &RunConfig::anneal_window);
    add_i("train.stage2_iters", &RunConfig::stage2_iters);
    add_i("train.tto_iters", &RunConfig::tto_iters);
    add_d("train.tto_lr", &RunConfig::tto_lr);
    add_i("train.timestep_anneal_iters", &RunConfig::timestep_anneal_iters);
    add_d("train.t_lo_stage1", &RunConfig::t_lo_stage1);
    add_d("train.t_hi_stage1", &RunConfig::t_hi_stage1);
    add_d("train.t_lo_start", &RunConfig::t_lo_start);
    add_d("train.t_hi_start", &RunConfig::t_hi_start);
    add_d("train.t_lo_end", &RunConfig::t_lo_end);
    add_d("train.t_hi_end", &RunConfig::t_hi_end);
    add_i("train.noise_timesteps", &RunConfig::noise_timesteps);
    add_b("train.stylization_mode", &RunConfig::stylization_mode);
    add_b("train.stylization_rgb_loss", &RunConfig::stylization_rgb_loss);
    add_i("train.batch_shapes_pretrain", &RunConfig::batch_shapes_pretrain);
    add_i("train.batch_views_pretrain", &RunConfig::batch_views_pretrain);
    add_i("train.batch_shapes_stage1", &RunConfig::batch_shapes_stage1);
    add_i("train.rays_per_view", &RunConfig::rays_per_view);
    add_i("train.dummy_points", &RunConfig::dummy_points);
    add_d("train.dummy_radius", &RunConfig::dummy_radius);
    add_str("train.guidance", &RunConfig::guidance);
    add_str("train.embedder", &RunConfig::embedder);

    add_i("eval.infer_views", &RunConfig::infer_views);
    add_i("eval.views", &RunConfig::eval_views);
    add_d("eval.elevation", &RunConfig::eval_elevation);
    return v;
  }();
  return b;
}

const FieldBinding& find_binding(const std::string& key) {
  for (const auto& b : bindings())
    if (b.key == key) return b;
  throw std::invalid_argument("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "profile" && value != profile) {
    // switching profile re-seats every profile-dependent default
    const uint64_t keep_seed = seed;
    *this = from_profile(value);
    seed = keep_seed;
    return;
  }
  find_binding(key).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const { return find_binding(key).get(*this); }

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& b : bindings()) out.push_back(b.key);
  return out;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate();
}

void RunConfig::save_file(const std::string& path) const {
  AtomicFileWriter w(path);
  for (const auto& b : bindings()) w.stream() << b.key << " = " << b.get(*this) << "\n";
  w.commit();
}

void RunConfig::validate() const {
  if (alpha_mode != "fixed" && alpha_mode != "amortized")
    throw std::invalid_argument("config: alpha_mode must be fixed|amortized");
  if (alpha_mode == "fixed" && (alpha_fixed < 0.0 || alpha_fixed > 1.0))
    throw std::invalid_argument("config: fixed alpha out of [0,1]");
  if (!(alpha_lo <= alpha_hi))
    throw std::invalid_argument("config: alpha range inverted");
  if (render_samples < 2) throw std::invalid_argument("config: render.samples must be >= 2");
  if (!(density_beta > 0.0) || !(density_alpha > 0.0))
    throw std::invalid_argument("config: density parameters must be positive");
  const GuidanceSpec spec = lookup_guidance(guidance);
  if (spec.required_views > 0 && views_sds != spec.required_views)
    throw std::invalid_argument("config: guidance adapter '" + guidance + "' requires " +
                                std::to_string(spec.required_views) + " SDS views");
}

}  // namespace tritex
