#include "train/optimizer.h"

#include <cmath>

namespace tritex {

AdamOptimizer::AdamOptimizer(ParamStore& ps, double lr, double beta1, double beta2, double eps,
                             double grad_clip)
    : ps_(ps), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), grad_clip_(grad_clip) {
  m_.resize(ps.items().size());
  v_.resize(ps.items().size());
  for (size_t i = 0; i < ps.items().size(); ++i) {
    const int64_t n = ps.items()[i].second.numel();
    m_[i].assign(n, 0.0);
    v_[i].assign(n, 0.0);
  }
}

void AdamOptimizer::zero_grad() { ps_.zero_grad(); }

double AdamOptimizer::step() {
  // moments are indexed by registration order; late-created parameter groups
  // (stage-2 entry) get fresh state
  while (m_.size() < ps_.items().size()) {
    const int64_t n = ps_.items()[m_.size()].second.numel();
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }

  double sq_norm = 0.0;
  for (auto& [name, p] : ps_.items()) {
    if (!p.requires_grad() || !p.has_grad()) continue;
    const double* g = p.grad();
    for (int64_t i = 0; i < p.numel(); ++i) sq_norm += g[i] * g[i];
  }
  const double norm = std::sqrt(sq_norm);
  const double clip_scale = (grad_clip_ > 0.0 && norm > grad_clip_) ? grad_clip_ / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t k = 0; k < ps_.items().size(); ++k) {
    Tensor& p = ps_.items()[k].second;
    if (!p.requires_grad() || !p.has_grad()) continue;
    const double* g = p.grad();
    double* val = p.data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i] * clip_scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  return norm;
}

}  // namespace tritex
