#pragma once

#include <vector>

#include "core/pointcloud.h"
#include "render/volume.h"
#include "train/config.h"

namespace tritex {

// l2 reduction convention: mean of squared elementwise differences per view,
// averaged over views.
Tensor recon_loss(const std::vector<RenderedView>& pred, const std::vector<RenderedView>& ref);

// Ray-subsampled reconstruction term: the mean runs over the n_sampled pixels
// that were drawn for this view. Rays that missed the bounding box carry no
// residual (the reference is background there) and enter the mean as zeros.
Tensor recon_loss_rays(const RayBatch& pred, const RenderedView& ref, int64_t n_sampled);

Tensor reg_loss(const Tensor& pred_opacity, const Tensor& ref_mask);

Tensor blend_losses(const Tensor& l_sds, const Tensor& l_reg, double alpha);
double blend_losses(double l_sds, double l_reg, double alpha);

// Surrogate whose gradient is the SDS gradient: mean over views of the mean
// inner product between the (constant) gradient image and the rendered view.
// Only the gradient of this scalar is meaningful.
Tensor sds_surrogate(const std::vector<Tensor>& grads, const std::vector<Tensor>& views);

// 0 before (total_iters - window), then linear to 1 at total_iters.
double anneal_probability(int64_t iter, int64_t total_iters, int64_t window);

// Each output point is taken from dummy with probability p, else from real,
// index-aligned after resampling both to equal counts.
ColoredPointCloud mix_pointclouds(const ColoredPointCloud& real, const ColoredPointCloud& dummy,
                                  double p, Rng& rng);

double sample_blend_factor(const RunConfig& cfg, Rng& rng);

}  // namespace tritex
