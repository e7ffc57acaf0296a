#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/tensor.h"
#include "render/view.h"

namespace tritex {

// Pixelwise opacity > threshold (strict: boundary pixels at exactly the
// threshold are excluded, keeping masks deterministic).
Tensor binarize_opacity(const Tensor& opacity, double threshold = 0.5);
Tensor binarize_opacity(const RenderedView& view, double threshold = 0.5);

// |a n b| / |a u b|; defined as 1 when both masks are empty.
double mask_iou(const Tensor& a, const Tensor& b);

// Frechet distance between Gaussian fits (population statistics) of two
// feature sets: ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)).
double feature_fid(const std::vector<std::vector<double>>& feats_a,
                   const std::vector<std::vector<double>>& feats_b);

// Deterministic image embedder handle. The test embedder ("downsample8")
// averages grayscale pixels into an 8x8 grid; real CLIP/inception adapters
// plug in under their own names.
class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual std::string name() const = 0;
  virtual int64_t dim() const = 0;
  virtual std::vector<double> embed_image(const Tensor& image) const = 0;  // [H,W,3] or [H,W]
  virtual double similarity(const Tensor& image, const std::string& text) const = 0;
};

using ImageEmbedderFactory = std::function<std::shared_ptr<ImageEmbedder>()>;
void register_image_embedder(const std::string& name, ImageEmbedderFactory factory);
std::shared_ptr<ImageEmbedder> create_image_embedder(const std::string& name);

// Mean embedder similarity between the prompt and each rendered view.
double clip_score(const ImageEmbedder& embedder, const std::string& prompt,
                  const std::vector<Tensor>& views);

}  // namespace tritex
