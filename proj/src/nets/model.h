#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "core/pointcloud.h"
#include "field/triplane.h"
#include "nets/embedder.h"
#include "nets/params.h"
#include "render/view.h"

namespace tritex {

struct ModelConfig {
  int64_t prompt_dim = 32;
  int64_t triplane_res = 32;
  int64_t triplane_ch = 8;
  double triplane_extent = 1.0;
  int64_t pe_blocks = 5;
  int64_t pe_hidden = 16;
  int64_t unet_depth = 3;
  int64_t unet_base = 16;
  int64_t unet_max_mult = 4;
  int64_t gn_groups = 8;
  int64_t attn_heads = 2;
  int64_t attn_head_dim = 16;
  int64_t upsample_res = 96;
  int64_t head_hidden = 32;
  double sphere_radius = 0.35;

  static ModelConfig desk();
  static ModelConfig paper();

  int64_t unet_channels(int64_t d) const {
    return unet_base * std::min<int64_t>(int64_t{1} << d, unet_max_mult);
  }
  int64_t norm_groups(int64_t channels) const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& m);
};

enum class StageTag { kPretrain, kStage1, kStage2, kTto };
std::string stage_name(StageTag tag);
StageTag stage_from_name(const std::string& name);

// The conditioned generator: geometry network G and texture network T with a
// shared point encoder and encoder/decoder U-Nets (stage 1), plus the
// upsampling path with its mapping network (stage 2).
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  // Point-MLP residual stream with per-block scatter/gather pooling against a
  // triplane, then a final projection to the latent triplane.
  Triplane encode_points(const ColoredPointCloud& pc) const;

  // Text-conditioned encoder U-Net; the cross-attention residual after every
  // residual block is scaled by (1 - alpha). prompt may be null iff alpha=1.
  Triplane unet_encode(const Triplane& tp, const PromptRecord* prompt, double alpha) const;
  Triplane unet_decode(const Triplane& tp) const;
  Triplane unet_decode_stage2(const Triplane& tp) const;

  Tensor sdf_head(const Tensor& feats, const FieldQuery& q) const;  // sphere offset included
  Tensor rgb_head(const Tensor& feats, const FieldQuery& q) const;  // squashed to [0,1]

  Tensor mapping_network(const PromptRecord& prompt) const;  // [3,C,up,up] residual
  Triplane upsample_triplane(const Triplane& tp, const PromptRecord& prompt) const;

  struct ForwardResult {
    Triplane encoded;      // encoder U-Net output
    Triplane geo_decoded;  // shared stage-1 decoder output
    Triplane tex_decoded;  // stage 1: same tensor as geo_decoded; stage 2: upsampled path
    SdfField sdf;
    RgbField rgb;
  };
  ForwardResult forward_fields(const PromptRecord* prompt, const ColoredPointCloud& pc,
                               double alpha, int stage) const;
  SdfField geometry_forward(const PromptRecord* prompt, const ColoredPointCloud& pc,
                            double alpha) const;
  RgbField texture_forward(const PromptRecord* prompt, const ColoredPointCloud& pc, double alpha,
                           int stage) const;

  // Stage-2-only parameter groups (mapping network + texture decoder copy).
  void ensure_stage2_params();
  bool has_stage2_params() const;

  // Maps the stage to trainable parameter groups via requires_grad. During
  // the stage-1 annealing window the decoder and both heads are frozen; in
  // stage 2 and test-time optimization every geometry-path parameter is
  // frozen.
  void apply_stage_flags(StageTag stage, bool annealing_active);
  static const std::vector<std::string>& geometry_prefixes();

  void randomize_all(uint64_t seed);  // test helper: no zero-initialized layers

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }
  const ModelConfig& config() const { return cfg_; }

  // Test-only instrumentation: post-multiplies each cross-attention residual
  // (before the alpha scaling) with the hook's result.
  mutable std::function<Tensor(const Tensor&, int64_t layer)> attn_residual_hook;

  void save(const std::string& path, const std::map<std::string, std::string>& extra_meta) const;
  static Model load(const std::string& path);

 private:
  void build(uint64_t seed);
  Triplane run_unet(const std::string& prefix, const Triplane& tp, const PromptRecord* prompt,
                    double alpha) const;

  ModelConfig cfg_;
  ParamStore ps_;
};

}  // namespace tritex
