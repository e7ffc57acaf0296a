#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "core/tensor.h"
#include "nets/embedder.h"
#include "render/camera.h"
#include "render/view.h"

namespace tritex {

// Discrete diffusion schedule of cumulative signal coefficients.
struct NoiseSchedule {
  std::vector<double> alpha_bar;  // strictly decreasing, in (0,1)

  int64_t timesteps() const { return static_cast<int64_t>(alpha_bar.size()); }
  void check_valid(const char* op) const;
};

// Cosine-shaped schedule, T = 1000 by default.
NoiseSchedule default_schedule(int64_t t = 1000);

// Sampled-timestep window as fractions of T.
struct TimestepRange {
  double lo = 0.02;
  double hi = 0.98;

  void check_valid(const char* op) const;
};

// Linear interpolation from start to end over the anneal window, constant at
// end afterward.
TimestepRange anneal_timestep_range(int64_t step, int64_t total_anneal_steps,
                                    const TimestepRange& start, const TimestepRange& end);

int64_t sample_timestep(const NoiseSchedule& sched, const TimestepRange& range, Rng& rng);

// Rendered views plus cameras handed to the guidance model; multi-view
// adapters see all views of one shape in a single call. Depth maps are
// optional (depth-conditioned adapters); the mock ignores them.
struct GuidanceContext {
  PromptRecord prompt;
  std::vector<Tensor> views;    // K x [H,W,3]
  std::vector<Camera> cameras;  // aligned one-to-one with views
  std::vector<Tensor> depths;   // empty or aligned one-to-one

  void check_valid(const char* op, int required_views) const;
};

class GuidanceModel {
 public:
  virtual ~GuidanceModel() = default;
  virtual std::string name() const = 0;
  virtual int required_views() const { return 0; }          // 0: any count
  virtual int64_t required_resolution() const { return 0; }  // 0: any

  // eps_hat(x_t, t, ctx) for one view.
  virtual Tensor predict_noise(const Tensor& x_t, int64_t t, const NoiseSchedule& sched,
                               const GuidanceContext& ctx, size_t view_index) const = 0;

  // eps_hat(x_t) - eps with x_t = sqrt(ab)x + sqrt(1-ab)eps. The base class
  // forms x_t numerically; adapters whose residual is available in closed
  // form may cancel eps algebraically instead.
  virtual Tensor noise_residual(const Tensor& x, const Tensor& eps, int64_t t,
                                const NoiseSchedule& sched, const GuidanceContext& ctx,
                                size_t view_index) const;

  // Camera set paired with the adapter's targets; empty means the training
  // loop samples cameras freely.
  virtual std::vector<Camera> preferred_cameras() const { return {}; }
};

// Per-view SDS gradient images w(t) * (eps_hat(x_t, t, ctx) - eps), detached
// from the graph: back-propagated as constants into the renderer outputs.
// w(t) = 1. eps tensors are aligned one-to-one with ctx.views.
std::vector<Tensor> sds_gradient(const GuidanceModel& model, const GuidanceContext& ctx,
                                 int64_t t, const std::vector<Tensor>& eps,
                                 const NoiseSchedule& sched);

// Deterministic test oracle replacing a real diffusion prior: the denoiser
// that makes the SDS gradient exactly sqrt(ab)/sqrt(1-ab) * (x - x_target).
// Targets are matched to context views by camera position, or by index when
// no cameras were given.
std::shared_ptr<GuidanceModel> mock_target_guidance(std::vector<Tensor> target_images,
                                                    std::vector<Camera> target_cameras = {});

// Adapter registry. "mock" is built in; "mvdream" and "sd-depth" are reserved
// names whose specs declare view counts for config validation, but no model
// is bundled for them.
struct GuidanceSpec {
  std::string name;
  int required_views = 0;
  int64_t resolution = 0;
  bool available = false;
};
GuidanceSpec lookup_guidance(const std::string& name);

}  // namespace tritex
