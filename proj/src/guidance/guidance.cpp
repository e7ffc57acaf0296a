#include "guidance/guidance.h"

#include <cmath>
#include <stdexcept>

#include "core/ops.h"

namespace tritex {

void NoiseSchedule::check_valid(const char* op) const {
  if (alpha_bar.size() < 2) throw std::invalid_argument(std::string(op) + ": schedule too short");
  if (!(alpha_bar.front() < 1.0) || !(alpha_bar.back() > 0.0))
    throw std::invalid_argument(std::string(op) + ": alpha_bar endpoints out of (0,1)");
  for (size_t i = 1; i < alpha_bar.size(); ++i)
    if (!(alpha_bar[i] < alpha_bar[i - 1]))
      throw std::invalid_argument(std::string(op) + ": alpha_bar not strictly decreasing");
}

NoiseSchedule default_schedule(int64_t t) {
  if (t < 2) throw std::invalid_argument("default_schedule: need at least 2 steps");
  NoiseSchedule s;
  s.alpha_bar.resize(t);
  const double off = 0.008;
  auto f = [off](double u) {
    const double v = std::cos((u + off) / (1.0 + off) * M_PI / 2.0);
    return v * v;
  };
  const double f0 = f(0.0);
  for (int64_t i = 0; i < t; ++i) {
    const double raw = f(static_cast<double>(i + 1) / static_cast<double>(t)) / f0;
    s.alpha_bar[i] = 1e-4 + (1.0 - 2e-4) * raw;  // affine into (0,1), keeps monotonicity
  }
  s.check_valid("default_schedule");
  return s;
}

void TimestepRange::check_valid(const char* op) const {
  if (!(0.0 <= lo && lo < hi && hi <= 1.0))
    throw std::invalid_argument(std::string(op) + ": need 0 <= lo < hi <= 1");
}

TimestepRange anneal_timestep_range(int64_t step, int64_t total_anneal_steps,
                                    const TimestepRange& start, const TimestepRange& end) {
  start.check_valid("anneal_timestep_range");
  end.check_valid("anneal_timestep_range");
  if (total_anneal_steps <= 0 || step >= total_anneal_steps) return end;
  if (step <= 0) return start;
  const double f = static_cast<double>(step) / static_cast<double>(total_anneal_steps);
  return TimestepRange{start.lo + f * (end.lo - start.lo), start.hi + f * (end.hi - start.hi)};
}

int64_t sample_timestep(const NoiseSchedule& sched, const TimestepRange& range, Rng& rng) {
  range.check_valid("sample_timestep");
  const double frac = rng.uniform(range.lo, range.hi);
  const int64_t t = static_cast<int64_t>(frac * static_cast<double>(sched.timesteps()));
  return std::min(sched.timesteps() - 1, std::max<int64_t>(0, t));
}

void GuidanceContext::check_valid(const char* op, int required_views) const {
  if (views.empty() || views.size() != cameras.size())
    throw std::invalid_argument(std::string(op) + ": views and cameras must align one-to-one");
  if (!depths.empty() && depths.size() != views.size())
    throw std::invalid_argument(std::string(op) + ": depth maps must align with views");
  if (required_views > 0 && static_cast<int>(views.size()) != required_views)
    throw std::invalid_argument(std::string(op) + ": adapter requires " +
                                std::to_string(required_views) + " views");
}

Tensor GuidanceModel::noise_residual(const Tensor& x, const Tensor& eps, int64_t t,
                                     const NoiseSchedule& sched, const GuidanceContext& ctx,
                                     size_t view_index) const {
  const double ab = sched.alpha_bar.at(t);
  Tensor x_t = add(scale(x, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
  return sub(predict_noise(x_t, t, sched, ctx, view_index), eps);
}

std::vector<Tensor> sds_gradient(const GuidanceModel& model, const GuidanceContext& ctx,
                                 int64_t t, const std::vector<Tensor>& eps,
                                 const NoiseSchedule& sched) {
  sched.check_valid("sds_gradient");
  ctx.check_valid("sds_gradient", model.required_views());
  if (t < 0 || t >= sched.timesteps()) throw std::invalid_argument("sds_gradient: t out of range");
  if (eps.size() != ctx.views.size())
    throw std::invalid_argument("sds_gradient: one eps sample per view required");

  std::vector<Tensor> grads;
  grads.reserve(ctx.views.size());
  for (size_t i = 0; i < ctx.views.size(); ++i) {
    if (eps[i].shape() != ctx.views[i].shape())
      throw std::invalid_argument("sds_gradient: eps shape mismatch");
    // stop-gradient through the guidance model: residuals are constants
    Tensor r = model.noise_residual(ctx.views[i].detach(), eps[i], t, sched, ctx, i);
    grads.push_back(r.detach());  // w(t) = 1
  }
  return grads;
}

namespace {

class MockTargetGuidance final : public GuidanceModel {
 public:
  MockTargetGuidance(std::vector<Tensor> targets, std::vector<Camera> cameras)
      : targets_(std::move(targets)), cameras_(std::move(cameras)) {
    if (targets_.empty()) throw std::invalid_argument("mock guidance: no target images");
    if (!cameras_.empty() && cameras_.size() != targets_.size())
      throw std::invalid_argument("mock guidance: cameras must align with targets");
  }

  std::string name() const override { return "mock"; }

  Tensor predict_noise(const Tensor& x_t, int64_t t, const NoiseSchedule& sched,
                       const GuidanceContext& ctx, size_t view_index) const override {
    const double ab = sched.alpha_bar.at(t);
    const Tensor& target = match(ctx, view_index);
    return scale(sub(x_t, scale(target, std::sqrt(ab))), 1.0 / std::sqrt(1.0 - ab));
  }

  // eps cancels algebraically: residual = sqrt(ab)/sqrt(1-ab) * (x - target)
  Tensor noise_residual(const Tensor& x, const Tensor& eps, int64_t t,
                        const NoiseSchedule& sched, const GuidanceContext& ctx,
                        size_t view_index) const override {
    (void)eps;
    const double ab = sched.alpha_bar.at(t);
    const Tensor& target = match(ctx, view_index);
    return scale(sub(x, target), std::sqrt(ab) / std::sqrt(1.0 - ab));
  }

  std::vector<Camera> preferred_cameras() const override { return cameras_; }

 private:
  const Tensor& match(const GuidanceContext& ctx, size_t view_index) const {
    if (cameras_.empty() || ctx.cameras.empty())
      return targets_.at(view_index % targets_.size());
    const Vec3 pos = ctx.cameras.at(view_index).position;
    size_t best = 0;
    double best_d = 1e300;
    for (size_t i = 0; i < cameras_.size(); ++i) {
      const double d = (cameras_[i].position - pos).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return targets_[best];
  }

  std::vector<Tensor> targets_;
  std::vector<Camera> cameras_;
};

}  // namespace

std::shared_ptr<GuidanceModel> mock_target_guidance(std::vector<Tensor> target_images,
                                                    std::vector<Camera> target_cameras) {
  return std::make_shared<MockTargetGuidance>(std::move(target_images),
                                              std::move(target_cameras));
}

GuidanceSpec lookup_guidance(const std::string& name) {
  if (name == "mock") return GuidanceSpec{"mock", 0, 0, true};
  if (name == "mvdream") return GuidanceSpec{"mvdream", 4, 256, false};
  if (name == "sd-depth") return GuidanceSpec{"sd-depth", 1, 512, false};
  throw std::invalid_argument("unknown guidance adapter '" + name +
                              "' (registry names: mock, mvdream, sd-depth)");
}

}  // namespace tritex
