#include "eval/metrics.h"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <stdexcept>

#include "core/rng.h"

namespace tritex {

Tensor binarize_opacity(const Tensor& opacity, double threshold) {
  std::vector<double> m(opacity.numel());
  const double* d = opacity.data();
  for (int64_t i = 0; i < opacity.numel(); ++i) m[i] = d[i] > threshold ? 1.0 : 0.0;
  return Tensor::from(opacity.shape(), std::move(m));
}

Tensor binarize_opacity(const RenderedView& view, double threshold) {
  return binarize_opacity(view.opacity, threshold);
}

double mask_iou(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mask_iou: shape mismatch");
  double inter = 0.0, uni = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const bool x = a.data()[i] > 0.5, y = b.data()[i] > 0.5;
    inter += (x && y) ? 1.0 : 0.0;
    uni += (x || y) ? 1.0 : 0.0;
  }
  return uni == 0.0 ? 1.0 : inter / uni;
}

double feature_fid(const std::vector<std::vector<double>>& feats_a,
                   const std::vector<std::vector<double>>& feats_b) {
  if (feats_a.size() < 2 || feats_b.size() < 2)
    throw std::invalid_argument("feature_fid: each set needs at least 2 samples");
  const int64_t d = static_cast<int64_t>(feats_a[0].size());
  for (const auto& f : feats_a)
    if (static_cast<int64_t>(f.size()) != d)
      throw std::invalid_argument("feature_fid: inconsistent feature dims");
  for (const auto& f : feats_b)
    if (static_cast<int64_t>(f.size()) != d)
      throw std::invalid_argument("feature_fid: inconsistent feature dims");

  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  auto stats = [d](const std::vector<std::vector<double>>& feats, Vec& mu, Mat& cov) {
    const int64_t n = static_cast<int64_t>(feats.size());
    mu = Vec::Zero(d);
    for (const auto& f : feats)
      for (int64_t i = 0; i < d; ++i) mu[i] += f[i];
    mu /= static_cast<double>(n);
    cov = Mat::Zero(d, d);
    for (const auto& f : feats) {
      Vec c(d);
      for (int64_t i = 0; i < d; ++i) c[i] = f[i] - mu[i];
      cov.noalias() += c * c.transpose();
    }
    cov /= static_cast<double>(n);  // population statistics
  };

  Vec mu_a, mu_b;
  Mat cov_a, cov_b;
  stats(feats_a, mu_a, cov_a);
  stats(feats_b, mu_b, cov_b);

  // tr((Sa Sb)^(1/2)) = tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)) for PSD inputs
  Eigen::SelfAdjointEigenSolver<Mat> es_a(cov_a);
  Vec root_vals = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Mat sqrt_a = es_a.eigenvectors() * root_vals.asDiagonal() * es_a.eigenvectors().transpose();
  Mat inner = sqrt_a * cov_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());  // symmetrize against roundoff
  Eigen::SelfAdjointEigenSolver<Mat> es_m(inner);
  const double tr_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (mu_a - mu_b).squaredNorm();
  const double fid = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, fid);
}

namespace {

class Downsample8Embedder final : public ImageEmbedder {
 public:
  std::string name() const override { return "downsample8"; }
  int64_t dim() const override { return 64; }

  std::vector<double> embed_image(const Tensor& image) const override {
    if (!image.defined() || (image.rank() != 2 && image.rank() != 3))
      throw std::invalid_argument("embed_image: expected [H,W] or [H,W,C]");
    const int64_t h = image.dim(0), w = image.dim(1);
    const int64_t c = image.rank() == 3 ? image.dim(2) : 1;
    std::vector<double> feat(64, 0.0);
    std::vector<double> count(64, 0.0);
    const double* d = image.data();
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double gray = 0.0;
        for (int64_t k = 0; k < c; ++k) gray += d[(y * w + x) * c + k];
        gray /= static_cast<double>(c);
        const int64_t by = std::min<int64_t>(7, y * 8 / h);
        const int64_t bx = std::min<int64_t>(7, x * 8 / w);
        feat[by * 8 + bx] += gray;
        count[by * 8 + bx] += 1.0;
      }
    for (int i = 0; i < 64; ++i) feat[i] = count[i] > 0 ? feat[i] / count[i] : 0.0;
    return feat;
  }

  double similarity(const Tensor& image, const std::string& text) const override {
    const std::vector<double> img = embed_image(image);
    Rng rng(hash_combine(hash_str("downsample8-text"), hash_str(text)));
    std::vector<double> txt(64);
    for (auto& v : txt) v = rng.uniform(-1.0, 1.0);
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < 64; ++i) {
      dot += img[i] * txt[i];
      na += img[i] * img[i];
      nb += txt[i] * txt[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0 ? dot / denom : 0.0;
  }
};

std::map<std::string, ImageEmbedderFactory>& registry() {
  static std::map<std::string, ImageEmbedderFactory> r = {
      {"downsample8", [] { return std::make_shared<Downsample8Embedder>(); }},
  };
  return r;
}

}  // namespace

void register_image_embedder(const std::string& name, ImageEmbedderFactory factory) {
  registry()[name] = std::move(factory);
}

std::shared_ptr<ImageEmbedder> create_image_embedder(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end())
    throw std::runtime_error("unknown image embedder '" + name +
                             "' (real CLIP/inception adapters are registry extension points)");
  return it->second();
}

double clip_score(const ImageEmbedder& embedder, const std::string& prompt,
                  const std::vector<Tensor>& views) {
  if (views.empty()) throw std::invalid_argument("clip_score: no views");
  double acc = 0.0;
  for (const auto& v : views) acc += embedder.similarity(v, prompt);
  return acc / static_cast<double>(views.size());
}

}  // namespace tritex
