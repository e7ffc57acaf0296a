#include "nets/model.h"

#include <cmath>
#include <stdexcept>

#include "core/ops.h"

namespace tritex {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.prompt_dim = 1024;
  c.triplane_res = 128;
  c.triplane_ch = 32;
  c.pe_blocks = 5;
  c.pe_hidden = 32;
  c.unet_depth = 5;
  c.unet_base = 64;
  c.unet_max_mult = 8;
  c.gn_groups = 32;
  c.attn_heads = 4;
  c.attn_head_dim = 64;
  c.upsample_res = 480;
  return c;
}

int64_t ModelConfig::norm_groups(int64_t channels) const {
  int64_t g = std::min(gn_groups, channels);
  while (channels % g != 0) --g;
  return g;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"prompt_dim", std::to_string(prompt_dim)},
      {"triplane_res", std::to_string(triplane_res)},
      {"triplane_ch", std::to_string(triplane_ch)},
      {"triplane_extent", std::to_string(triplane_extent)},
      {"pe_blocks", std::to_string(pe_blocks)},
      {"pe_hidden", std::to_string(pe_hidden)},
      {"unet_depth", std::to_string(unet_depth)},
      {"unet_base", std::to_string(unet_base)},
      {"unet_max_mult", std::to_string(unet_max_mult)},
      {"gn_groups", std::to_string(gn_groups)},
      {"attn_heads", std::to_string(attn_heads)},
      {"attn_head_dim", std::to_string(attn_head_dim)},
      {"upsample_res", std::to_string(upsample_res)},
      {"head_hidden", std::to_string(head_hidden)},
      {"sphere_radius", std::to_string(sphere_radius)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& m) {
  ModelConfig c;
  auto geti = [&](const char* k, int64_t& dst) {
    const auto it = m.find(k);
    if (it != m.end()) dst = std::stoll(it->second);
  };
  auto getd = [&](const char* k, double& dst) {
    const auto it = m.find(k);
    if (it != m.end()) dst = std::stod(it->second);
  };
  geti("prompt_dim", c.prompt_dim);
  geti("triplane_res", c.triplane_res);
  geti("triplane_ch", c.triplane_ch);
  getd("triplane_extent", c.triplane_extent);
  geti("pe_blocks", c.pe_blocks);
  geti("pe_hidden", c.pe_hidden);
  geti("unet_depth", c.unet_depth);
  geti("unet_base", c.unet_base);
  geti("unet_max_mult", c.unet_max_mult);
  geti("gn_groups", c.gn_groups);
  geti("attn_heads", c.attn_heads);
  geti("attn_head_dim", c.attn_head_dim);
  geti("upsample_res", c.upsample_res);
  geti("head_hidden", c.head_hidden);
  getd("sphere_radius", c.sphere_radius);
  return c;
}

std::string stage_name(StageTag tag) {
  switch (tag) {
    case StageTag::kPretrain: return "pretrain";
    case StageTag::kStage1: return "stage1";
    case StageTag::kStage2: return "stage2";
    case StageTag::kTto: return "tto";
  }
  return "unknown";
}

StageTag stage_from_name(const std::string& name) {
  if (name == "pretrain") return StageTag::kPretrain;
  if (name == "stage1") return StageTag::kStage1;
  if (name == "stage2") return StageTag::kStage2;
  if (name == "tto") return StageTag::kTto;
  throw std::invalid_argument("unknown stage tag: " + name);
}

namespace {

// [3,C,R,R] planes <-> [C,3R,R] height-stacked image for rolled convolutions
Tensor stack_planes(const Tensor& planes) {
  const int64_t c = planes.dim(1), r = planes.dim(2);
  return reshape(permute(planes, {1, 0, 2, 3}), {c, 3 * r, r});
}

Tensor unstack_planes(const Tensor& stacked) {
  const int64_t c = stacked.dim(0), r = stacked.dim(2);
  return permute(reshape(stacked, {c, 3, r, r}), {1, 0, 2, 3});
}

Tensor plane_of(const Tensor& planes, int64_t idx) {
  const int64_t c = planes.dim(1), r = planes.dim(2);
  return reshape(slice_axis0(planes, idx, 1), {c, r, r});
}

}  // namespace

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) { build(seed); }

void Model::build(uint64_t seed) {
  Rng rng(hash_combine(seed, hash_str("model-init")));
  const ModelConfig& c = cfg_;

  // point encoder
  {
    Rng r = rng.split("pe");
    init_linear_weight(ps_, "pe.embed.w", 6, c.pe_hidden, r);
    init_zeros(ps_, "pe.embed.b", {c.pe_hidden});
    for (int64_t i = 0; i < c.pe_blocks; ++i) {
      const std::string p = "pe.block" + std::to_string(i);
      init_linear_weight(ps_, p + ".fc1.w", 2 * c.pe_hidden, c.pe_hidden, r);
      init_zeros(ps_, p + ".fc1.b", {c.pe_hidden});
      init_linear_weight(ps_, p + ".fc2.w", c.pe_hidden, c.pe_hidden, r);
      init_zeros(ps_, p + ".fc2.b", {c.pe_hidden});
    }
    init_conv1_weight(ps_, "pe.proj.w", c.triplane_ch, c.pe_hidden, r);
    init_zeros(ps_, "pe.proj.b", {c.triplane_ch});
  }

  // encoder and decoder U-Nets (identical except for cross-attention)
  auto build_resblock = [&](Rng& r, const std::string& p, int64_t in, int64_t out) {
    init_ones(ps_, p + ".gn1.g", {in});
    init_zeros(ps_, p + ".gn1.b", {in});
    init_conv3_weight(ps_, p + ".conv1.w", out, in, r);
    init_zeros(ps_, p + ".conv1.b", {out});
    init_ones(ps_, p + ".gn2.g", {out});
    init_zeros(ps_, p + ".gn2.b", {out});
    init_conv1_weight(ps_, p + ".aware.w", out, 3 * out, r);
    init_zeros(ps_, p + ".aware.b", {out});
    init_ones(ps_, p + ".gn3.g", {out});
    init_zeros(ps_, p + ".gn3.b", {out});
    init_conv3_weight(ps_, p + ".conv2.w", out, out, r);
    init_zeros(ps_, p + ".conv2.b", {out});
    if (in != out) init_conv1_weight(ps_, p + ".skip.w", out, in, r);
  };
  auto build_attn = [&](Rng& r, const std::string& p, int64_t ch) {
    const int64_t inner = c.attn_heads * c.attn_head_dim;
    init_ones(ps_, p + ".ln.g", {ch});
    init_zeros(ps_, p + ".ln.b", {ch});
    init_linear_weight(ps_, p + ".q.w", ch, inner, r);
    init_linear_weight(ps_, p + ".k.w", c.prompt_dim, inner, r);
    init_linear_weight(ps_, p + ".v.w", c.prompt_dim, inner, r);
    init_zeros(ps_, p + ".out.w", {inner, ch});  // residual starts silent
    init_zeros(ps_, p + ".out.b", {ch});
  };
  auto build_unet = [&](const std::string& prefix, bool with_attn) {
    Rng r = rng.split(prefix);
    const int64_t ch0 = c.unet_channels(0);
    init_conv3_weight(ps_, prefix + ".conv_in.w", ch0, c.triplane_ch, r);
    init_zeros(ps_, prefix + ".conv_in.b", {ch0});
    int64_t prev = ch0;
    for (int64_t d = 0; d < c.unet_depth; ++d) {
      const int64_t ch = c.unet_channels(d);
      build_resblock(r, prefix + ".down" + std::to_string(d), prev, ch);
      if (with_attn) build_attn(r, prefix + ".attnd" + std::to_string(d), ch);
      prev = ch;
    }
    for (int64_t d = c.unet_depth - 2; d >= 0; --d) {
      const int64_t ch = c.unet_channels(d);
      build_resblock(r, prefix + ".up" + std::to_string(d), c.unet_channels(d + 1) + ch, ch);
      if (with_attn) build_attn(r, prefix + ".attnu" + std::to_string(d), ch);
    }
    // zero-initialized output conv: the U-Net starts as the identity
    init_zeros(ps_, prefix + ".conv_out.w", {c.triplane_ch, ch0, 3, 3});
    init_zeros(ps_, prefix + ".conv_out.b", {c.triplane_ch});
  };
  build_unet("enc", true);
  build_unet("dec", false);

  // field heads: zero-initialized last layer -> sphere SDF / mid-gray at init
  {
    Rng r = rng.split("heads");
    const int64_t in = c.triplane_ch + 3;
    init_linear_weight(ps_, "sdf.fc1.w", in, c.head_hidden, r);
    init_zeros(ps_, "sdf.fc1.b", {c.head_hidden});
    init_zeros(ps_, "sdf.fc2.w", {c.head_hidden, 1});
    init_zeros(ps_, "sdf.fc2.b", {1});
    init_linear_weight(ps_, "rgb.fc1.w", in, c.head_hidden, r);
    init_zeros(ps_, "rgb.fc1.b", {c.head_hidden});
    init_zeros(ps_, "rgb.fc2.w", {c.head_hidden, 3});
    init_zeros(ps_, "rgb.fc2.b", {3});
  }
}

void Model::ensure_stage2_params() {
  if (has_stage2_params()) return;
  Rng rng(hash_combine(hash_str("stage2-init"), cfg_.prompt_dim));
  const int64_t flat = kPromptTokens * cfg_.prompt_dim;
  Rng mr = rng.split("map");
  init_linear_weight(ps_, "map.fc1.w", flat, 32, mr);
  init_zeros(ps_, "map.fc1.b", {32});
  // final layer uses no bias; zero start makes the upsampled path begin as a
  // plain nearest-neighbor upsample of the stage-1 triplane
  init_zeros(ps_, "map.fc2.w",
             {32, 3 * cfg_.triplane_ch * cfg_.upsample_res * cfg_.upsample_res});

  // texture decoder: same architecture as the shared decoder, initialized
  // from its weights (convolutions are resolution independent)
  for (const auto& name : ps_.names_with_prefix("dec.")) {
    const Tensor src = ps_.get(name);
    Tensor dst = ps_.add("dec2." + name.substr(4), src.shape());
    std::copy(src.data(), src.data() + src.numel(), dst.data());
  }
}

bool Model::has_stage2_params() const { return ps_.has("map.fc1.w"); }

const std::vector<std::string>& Model::geometry_prefixes() {
  static const std::vector<std::string> p = {"pe.", "enc.", "dec.", "sdf."};
  return p;
}

void Model::apply_stage_flags(StageTag stage, bool annealing_active) {
  const bool texture_only = stage == StageTag::kStage2 || stage == StageTag::kTto;
  if (texture_only && !has_stage2_params())
    throw std::invalid_argument("apply_stage_flags: stage-2 parameters not created yet");
  for (auto& [name, t] : ps_.items()) {
    bool trainable;
    if (texture_only) {
      trainable = name.rfind("map.", 0) == 0 || name.rfind("dec2.", 0) == 0 ||
                  name.rfind("rgb.", 0) == 0;
    } else {
      trainable = name.rfind("map.", 0) != 0 && name.rfind("dec2.", 0) != 0;
      if (annealing_active && stage == StageTag::kStage1 &&
          (name.rfind("dec.", 0) == 0 || name.rfind("sdf.", 0) == 0 ||
           name.rfind("rgb.", 0) == 0))
        trainable = false;
    }
    t.set_requires_grad(trainable);
  }
}

void Model::randomize_all(uint64_t seed) {
  for (auto& [name, t] : ps_.items()) {
    Rng r(hash_combine(seed, hash_str(name)));
    const bool is_gain = name.find(".gn") != std::string::npos && name.back() == 'g';
    for (int64_t i = 0; i < t.numel(); ++i)
      t.data()[i] = is_gain ? r.uniform(0.5, 1.5) : r.uniform(-0.3, 0.3);
  }
}

Triplane Model::encode_points(const ColoredPointCloud& pc) const {
  pc.check_valid("encode_points");
  const int64_t n = pc.count();
  const int64_t hdim = cfg_.pe_hidden;

  std::vector<double> in(n * 6);
  for (int64_t i = 0; i < n; ++i) {
    in[i * 6 + 0] = pc.positions[i * 3 + 0];
    in[i * 6 + 1] = pc.positions[i * 3 + 1];
    in[i * 6 + 2] = pc.positions[i * 3 + 2];
    in[i * 6 + 3] = pc.colors[i * 3 + 0];
    in[i * 6 + 4] = pc.colors[i * 3 + 1];
    in[i * 6 + 5] = pc.colors[i * 3 + 2];
  }
  Tensor x = Tensor::from({n, 6}, std::move(in));
  Tensor h = silu(linear(x, ps_.get("pe.embed.w"), ps_.get("pe.embed.b")));
  const FieldQuery q = FieldQuery::of(pc.positions);

  for (int64_t b = 0; b < cfg_.pe_blocks; ++b) {
    const std::string p = "pe.block" + std::to_string(b);
    Triplane pool = scatter_to_triplane(q, h, cfg_.triplane_res, cfg_.triplane_extent);
    Tensor gathered = sample_triplane(pool, q);
    Tensor z = concat({h, gathered}, 1);
    Tensor f = silu(linear(z, ps_.get(p + ".fc1.w"), ps_.get(p + ".fc1.b")));
    h = add(h, linear(f, ps_.get(p + ".fc2.w"), ps_.get(p + ".fc2.b")));
  }

  Triplane pooled = scatter_to_triplane(q, h, cfg_.triplane_res, cfg_.triplane_extent);
  Tensor stacked = stack_planes(pooled.planes);
  Tensor projected = conv2d_1x1(stacked, ps_.get("pe.proj.w"), ps_.get("pe.proj.b"));
  return Triplane::wrap(unstack_planes(projected), cfg_.triplane_extent);
}

namespace {

// 3D-aware 1x1 convolution: each plane sees its own features concatenated
// with the other two planes mean-pooled along the shared axis.
Tensor aware_conv(const ParamStore& ps, const std::string& p, const Tensor& stacked) {
  const int64_t c = stacked.dim(0), r = stacked.dim(2);
  Tensor planes = unstack_planes(stacked);
  Tensor xy = plane_of(planes, 0);  // [C, y, x]
  Tensor xz = plane_of(planes, 1);  // [C, z, x]
  Tensor yz = plane_of(planes, 2);  // [C, z, y]

  // pool the named axis away, leaving a vector broadcast along cols or rows
  auto pool_rows_as_cols = [&](const Tensor& t) { return reshape(mean_axis(t, 1), {c, 1, r}); };
  auto pool_rows_as_rows = [&](const Tensor& t) { return reshape(mean_axis(t, 1), {c, r, 1}); };
  auto pool_cols_as_rows = [&](const Tensor& t) { return reshape(mean_axis(t, 2), {c, r, 1}); };
  auto pool_cols_as_cols = [&](const Tensor& t) { return reshape(mean_axis(t, 2), {c, 1, r}); };
  const Shape full{c, r, r};

  // shared world axes: XY row=y col=x, XZ row=z col=x, YZ row=z col=y
  Tensor cat_xy = concat({xy, broadcast_to(pool_rows_as_cols(xz), full),
                          broadcast_to(pool_rows_as_rows(yz), full)}, 0);
  Tensor cat_xz = concat({xz, broadcast_to(pool_rows_as_cols(xy), full),
                          broadcast_to(pool_cols_as_rows(yz), full)}, 0);
  Tensor cat_yz = concat({yz, broadcast_to(pool_cols_as_cols(xy), full),
                          broadcast_to(pool_cols_as_rows(xz), full)}, 0);

  const Tensor w = ps.get(p + ".aware.w");
  const Tensor b = ps.get(p + ".aware.b");
  Tensor o0 = conv2d_1x1(cat_xy, w, b);
  Tensor o1 = conv2d_1x1(cat_xz, w, b);
  Tensor o2 = conv2d_1x1(cat_yz, w, b);
  return concat({o0, o1, o2}, 1);  // restack along height
}

Tensor resblock(const ModelConfig& cfg, const ParamStore& ps, const std::string& p,
                const Tensor& x) {
  const int64_t in = x.dim(0);
  const int64_t out = ps.get(p + ".conv1.w").dim(0);
  Tensor f = silu(groupnorm(x, cfg.norm_groups(in), ps.get(p + ".gn1.g"), ps.get(p + ".gn1.b")));
  f = conv2d_3x3(f, ps.get(p + ".conv1.w"), ps.get(p + ".conv1.b"));
  f = silu(groupnorm(f, cfg.norm_groups(out), ps.get(p + ".gn2.g"), ps.get(p + ".gn2.b")));
  f = aware_conv(ps, p, f);
  f = silu(groupnorm(f, cfg.norm_groups(out), ps.get(p + ".gn3.g"), ps.get(p + ".gn3.b")));
  f = conv2d_3x3(f, ps.get(p + ".conv2.w"), ps.get(p + ".conv2.b"));
  Tensor skip = in == out ? x : conv2d_1x1(x, ps.get(p + ".skip.w"), Tensor());
  return add(skip, f);
}

}  // namespace

Triplane Model::unet_encode(const Triplane& tp, const PromptRecord* prompt, double alpha) const {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("unet_encode: alpha out of [0,1]");
  if (prompt) prompt->check_valid("unet_encode");
  if (!prompt && alpha != 1.0)
    throw std::invalid_argument("unet_encode: prompt required unless alpha = 1");
  return run_unet("enc", tp, prompt, alpha);
}

Triplane Model::unet_decode(const Triplane& tp) const { return run_unet("dec", tp, nullptr, 1.0); }

Triplane Model::unet_decode_stage2(const Triplane& tp) const {
  if (!has_stage2_params())
    throw std::invalid_argument("unet_decode_stage2: stage-2 parameters not created");
  return run_unet("dec2", tp, nullptr, 1.0);
}

Triplane Model::run_unet(const std::string& prefix, const Triplane& tp,
                         const PromptRecord* prompt, double alpha) const {
  tp.check_valid("unet");
  if (tp.channels != cfg_.triplane_ch)
    throw std::invalid_argument("unet: triplane channel mismatch");
  const double attn_scale = 1.0 - alpha;
  int64_t attn_layer = 0;

  auto cross_attn = [&](const std::string& p, const Tensor& h) -> Tensor {
    const int64_t ch = h.dim(0), rows = h.dim(1), cols = h.dim(2);
    const int64_t ntok = rows * cols;
    const int64_t heads = cfg_.attn_heads, hd = cfg_.attn_head_dim;
    Tensor xt = permute(reshape(h, {ch, ntok}), {1, 0});  // [N, ch]
    Tensor xq = layernorm_lastdim(xt, ps_.get(p + ".ln.g"), ps_.get(p + ".ln.b"));
    Tensor q = permute(reshape(matmul(xq, ps_.get(p + ".q.w")), {ntok, heads, hd}), {1, 0, 2});
    const Tensor& tok = prompt->tokens;
    Tensor k = permute(reshape(matmul(tok, ps_.get(p + ".k.w")), {kPromptTokens, heads, hd}),
                       {1, 0, 2});
    Tensor v = permute(reshape(matmul(tok, ps_.get(p + ".v.w")), {kPromptTokens, heads, hd}),
                       {1, 0, 2});
    Tensor scores = scale(bmm(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(double(hd)));
    Tensor attnw = softmax_lastdim(scores);          // [H, N, 77]
    Tensor o = bmm(attnw, v);                        // [H, N, hd]
    Tensor flat = reshape(permute(o, {1, 0, 2}), {ntok, heads * hd});
    Tensor res = linear(flat, ps_.get(p + ".out.w"), ps_.get(p + ".out.b"));
    Tensor r = reshape(permute(res, {1, 0}), {ch, rows, cols});
    if (attn_residual_hook) r = attn_residual_hook(r, attn_layer);
    ++attn_layer;
    return r;
  };
  // the residual is skipped entirely at alpha = 1: no prompt dependence
  auto maybe_attend = [&](const std::string& p, Tensor h) -> Tensor {
    if (prefix != "enc" || !prompt || attn_scale == 0.0) return h;
    return add(h, scale(cross_attn(p, h), attn_scale));
  };

  Tensor x0 = stack_planes(tp.planes);
  Tensor h = conv2d_3x3(x0, ps_.get(prefix + ".conv_in.w"), ps_.get(prefix + ".conv_in.b"));
  std::vector<Tensor> skips;
  for (int64_t d = 0; d < cfg_.unet_depth; ++d) {
    h = resblock(cfg_, ps_, prefix + ".down" + std::to_string(d), h);
    h = maybe_attend(prefix + ".attnd" + std::to_string(d), h);
    skips.push_back(h);
    if (d + 1 < cfg_.unet_depth) h = avgpool2x2(h);
  }
  for (int64_t d = cfg_.unet_depth - 2; d >= 0; --d) {
    h = upsample_nearest(h, h.dim(1) * 2, h.dim(2) * 2);
    h = concat({h, skips[d]}, 0);
    h = resblock(cfg_, ps_, prefix + ".up" + std::to_string(d), h);
    h = maybe_attend(prefix + ".attnu" + std::to_string(d), h);
  }
  Tensor out =
      add(x0, conv2d_3x3(h, ps_.get(prefix + ".conv_out.w"), ps_.get(prefix + ".conv_out.b")));
  return Triplane::wrap(unstack_planes(out), tp.extent);
}

namespace {

Tensor head_input(const Tensor& feats, const FieldQuery& q) {
  const int64_t n = q.count();
  if (feats.dim(0) != n) throw std::invalid_argument("field head: feats/query size mismatch");
  return concat({feats, Tensor::from({n, 3}, q.points)}, 1);
}

}  // namespace

Tensor Model::sdf_head(const Tensor& feats, const FieldQuery& q) const {
  Tensor x = head_input(feats, q);
  Tensor hdn = silu(linear(x, ps_.get("sdf.fc1.w"), ps_.get("sdf.fc1.b")));
  Tensor raw = reshape(linear(hdn, ps_.get("sdf.fc2.w"), ps_.get("sdf.fc2.b")), {q.count()});
  return offset_sdf(raw, q, cfg_.sphere_radius);
}

Tensor Model::rgb_head(const Tensor& feats, const FieldQuery& q) const {
  Tensor x = head_input(feats, q);
  Tensor hdn = silu(linear(x, ps_.get("rgb.fc1.w"), ps_.get("rgb.fc1.b")));
  return sigmoid(linear(hdn, ps_.get("rgb.fc2.w"), ps_.get("rgb.fc2.b")));
}

Tensor Model::mapping_network(const PromptRecord& prompt) const {
  if (!has_stage2_params())
    throw std::invalid_argument("mapping_network: stage-2 parameters not created");
  prompt.check_valid("mapping_network");
  Tensor flat = reshape(prompt.tokens, {1, kPromptTokens * cfg_.prompt_dim});
  Tensor t = tanh_(scale(flat, 0.1));
  // standardize activation components; epsilon guards the constant vector
  Tensor centered = sub(t, mean_axis(t, 1, true));
  Tensor std_dev = add_const(sqrt_(mean_axis(square(centered), 1, true)), 1e-8);
  Tensor normed = div(centered, std_dev);
  Tensor v = linear(normed, ps_.get("map.fc1.w"), ps_.get("map.fc1.b"));
  Tensor h = matmul(v, ps_.get("map.fc2.w"));  // no bias
  return reshape(h, {3, cfg_.triplane_ch, cfg_.upsample_res, cfg_.upsample_res});
}

Triplane Model::upsample_triplane(const Triplane& tp, const PromptRecord& prompt) const {
  tp.check_valid("upsample_triplane");
  const int64_t up = cfg_.upsample_res;
  Tensor stacked = stack_planes(tp.planes);
  Tensor upsampled = upsample_nearest(stacked, 3 * up, up);  // row blocks stay per-plane
  Tensor residual = stack_planes(mapping_network(prompt));
  return Triplane::wrap(unstack_planes(add(upsampled, residual)), tp.extent);
}

Model::ForwardResult Model::forward_fields(const PromptRecord* prompt,
                                           const ColoredPointCloud& pc, double alpha,
                                           int stage) const {
  if (stage != 1 && stage != 2) throw std::invalid_argument("forward_fields: stage must be 1|2");
  if (stage == 2 && !prompt) throw std::invalid_argument("forward_fields: stage 2 needs a prompt");
  ForwardResult out;
  Triplane enc_in = encode_points(pc);
  out.encoded = unet_encode(enc_in, prompt, alpha);
  out.geo_decoded = unet_decode(out.encoded);
  if (stage == 1) {
    out.tex_decoded = out.geo_decoded;
  } else {
    out.tex_decoded = unet_decode_stage2(upsample_triplane(out.encoded, *prompt));
  }

  const Triplane geo = out.geo_decoded;
  out.sdf = [this, geo](const FieldQuery& q) { return sdf_head(sample_triplane(geo, q), q); };
  const Triplane tex = out.tex_decoded;
  out.rgb = [this, tex](const FieldQuery& q) { return rgb_head(sample_triplane(tex, q), q); };
  return out;
}

SdfField Model::geometry_forward(const PromptRecord* prompt, const ColoredPointCloud& pc,
                                 double alpha) const {
  return forward_fields(prompt, pc, alpha, 1).sdf;
}

RgbField Model::texture_forward(const PromptRecord* prompt, const ColoredPointCloud& pc,
                                double alpha, int stage) const {
  return forward_fields(prompt, pc, alpha, stage).rgb;
}

void Model::save(const std::string& path,
                 const std::map<std::string, std::string>& extra_meta) const {
  std::map<std::string, std::string> meta = cfg_.to_map();
  meta["has_stage2"] = has_stage2_params() ? "1" : "0";
  for (const auto& [k, v] : extra_meta) meta[k] = v;
  save_checkpoint(path, ps_, meta);
}

Model Model::load(const std::string& path) {
  const auto meta = peek_checkpoint_metadata(path);
  Model m(ModelConfig::from_map(meta), 0);
  const auto it = meta.find("has_stage2");
  if (it != meta.end() && it->second == "1") m.ensure_stage2_params();
  load_checkpoint(path, m.ps_);
  return m;
}

}  // namespace tritex
