#include "train/losses.h"

#include <stdexcept>

#include "core/ops.h"

namespace tritex {

Tensor recon_loss(const std::vector<RenderedView>& pred, const std::vector<RenderedView>& ref) {
  if (pred.empty() || pred.size() != ref.size())
    throw std::invalid_argument("recon_loss: view lists must align");
  Tensor acc;
  for (size_t i = 0; i < pred.size(); ++i) {
    Tensor term = add(mse(pred[i].opacity, ref[i].opacity), mse(pred[i].rgb, ref[i].rgb));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 1.0 / static_cast<double>(pred.size()));
}

Tensor recon_loss_rays(const RayBatch& pred, const RenderedView& ref, int64_t n_sampled) {
  if (n_sampled <= 0) throw std::invalid_argument("recon_loss_rays: no rays sampled");
  const int64_t m = static_cast<int64_t>(pred.pixels.size());
  if (m == 0) return Tensor::scalar(0.0);
  std::vector<double> ref_op(m), ref_rgb(m * 3);
  const double* op = ref.opacity.data();
  const double* rgb = ref.rgb.data();
  for (int64_t i = 0; i < m; ++i) {
    const int64_t pid = pred.pixels[i];
    ref_op[i] = op[pid];
    for (int k = 0; k < 3; ++k) ref_rgb[i * 3 + k] = rgb[pid * 3 + k];
  }
  Tensor t_op = Tensor::from({m}, std::move(ref_op));
  Tensor t_rgb = Tensor::from({m, 3}, std::move(ref_rgb));
  Tensor op_term = scale(sum_all(square(sub(pred.opacity, t_op))), 1.0 / n_sampled);
  Tensor rgb_term = scale(sum_all(square(sub(pred.rgb, t_rgb))), 1.0 / (n_sampled * 3.0));
  return add(op_term, rgb_term);
}

Tensor reg_loss(const Tensor& pred_opacity, const Tensor& ref_mask) {
  if (pred_opacity.shape() != ref_mask.shape())
    throw std::invalid_argument("reg_loss: mask shape mismatch");
  return mse(pred_opacity, ref_mask);
}

Tensor blend_losses(const Tensor& l_sds, const Tensor& l_reg, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("blend_losses: alpha out of [0,1]");
  return add(scale(l_sds, 1.0 - alpha), scale(l_reg, alpha));
}

double blend_losses(double l_sds, double l_reg, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("blend_losses: alpha out of [0,1]");
  return (1.0 - alpha) * l_sds + alpha * l_reg;
}

Tensor sds_surrogate(const std::vector<Tensor>& grads, const std::vector<Tensor>& views) {
  if (grads.empty() || grads.size() != views.size())
    throw std::invalid_argument("sds_surrogate: gradient/view lists must align");
  Tensor acc;
  for (size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].requires_grad())
      throw std::invalid_argument("sds_surrogate: gradient images must be constants");
    Tensor term = mean_all(mul(grads[i], views[i]));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 1.0 / static_cast<double>(grads.size()));
}

double anneal_probability(int64_t iter, int64_t total_iters, int64_t window) {
  if (window <= 0) return iter >= total_iters ? 1.0 : 0.0;
  const int64_t start = total_iters - window;
  if (iter <= start) return 0.0;
  if (iter >= total_iters) return 1.0;
  return static_cast<double>(iter - start) / static_cast<double>(window);
}

ColoredPointCloud mix_pointclouds(const ColoredPointCloud& real, const ColoredPointCloud& dummy,
                                  double p, Rng& rng) {
  real.check_valid("mix_pointclouds");
  dummy.check_valid("mix_pointclouds");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("mix_pointclouds: p out of [0,1]");
  const int64_t n = real.count();
  ColoredPointCloud out;
  out.positions.resize(n * 3);
  out.colors.resize(n * 3);
  const int64_t dn = dummy.count();
  for (int64_t i = 0; i < n; ++i) {
    const bool take_dummy = p >= 1.0 || (p > 0.0 && rng.uniform() < p);
    const ColoredPointCloud& src = take_dummy ? dummy : real;
    const int64_t j = take_dummy ? i % dn : i;  // index-aligned after resampling
    for (int k = 0; k < 3; ++k) {
      out.positions[i * 3 + k] = src.positions[j * 3 + k];
      out.colors[i * 3 + k] = src.colors[j * 3 + k];
    }
  }
  return out;
}

double sample_blend_factor(const RunConfig& cfg, Rng& rng) {
  if (cfg.alpha_mode == "fixed") return cfg.alpha_fixed;
  if (cfg.alpha_mode == "amortized") {
    if (cfg.alpha_lo == cfg.alpha_hi) return cfg.alpha_lo;
    return rng.uniform(cfg.alpha_lo, cfg.alpha_hi);
  }
  throw std::invalid_argument("sample_blend_factor: unknown alpha mode " + cfg.alpha_mode);
}

}  // namespace tritex
