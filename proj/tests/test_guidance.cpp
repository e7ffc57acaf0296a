#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/ops.h"
#include "guidance/guidance.h"
#include "test_util.h"

using namespace tritex;

namespace {

GuidanceContext make_ctx(const std::vector<Tensor>& views, const std::vector<Camera>& cams) {
  GuidanceContext ctx;
  ctx.prompt = create_embedder("hash", 8, 1)->embed("ctx");
  ctx.views = views;
  ctx.cameras = cams;
  return ctx;
}

// denoiser that reproduces the injected noise exactly
class PerfectDenoiser final : public GuidanceModel {
 public:
  std::string name() const override { return "perfect"; }
  Tensor predict_noise(const Tensor& x_t, int64_t t, const NoiseSchedule& sched,
                       const GuidanceContext& ctx, size_t vi) const override {
    (void)t;
    (void)sched;
    (void)ctx;
    (void)vi;
    return x_t;  // unused; noise_residual below is the oracle entry
  }
  Tensor noise_residual(const Tensor& x, const Tensor& eps, int64_t, const NoiseSchedule&,
                        const GuidanceContext&, size_t) const override {
    (void)x;
    return Tensor::zeros(eps.shape());
  }
};

}  // namespace

TEST_CASE("default_schedule: strictly decreasing, endpoints, early value") {
  NoiseSchedule s = default_schedule(1000);
  CHECK(s.timesteps() == 1000);
  s.check_valid("test");
  CHECK(s.alpha_bar.front() > 0.99);
  CHECK(s.alpha_bar.front() < 1.0);
  CHECK(s.alpha_bar.back() > 0.0);
  // closed-form spot check of the cosine shape at t = 0
  const double off = 0.008;
  auto f = [off](double u) {
    const double c = std::cos((u + off) / (1 + off) * M_PI / 2);
    return c * c;
  };
  const double expect0 = 1e-4 + (1 - 2e-4) * f(1.0 / 1000) / f(0.0);
  CHECK(s.alpha_bar[0] == doctest::Approx(expect0).epsilon(1e-12));
}

TEST_CASE("anneal_timestep_range: endpoints and midpoint") {
  const TimestepRange start{0.5, 0.9}, end{0.1, 0.5};
  TimestepRange r0 = anneal_timestep_range(0, 400, start, end);
  CHECK(r0.lo == 0.5);
  CHECK(r0.hi == 0.9);
  TimestepRange r1 = anneal_timestep_range(400, 400, start, end);
  CHECK(r1.lo == 0.1);
  CHECK(r1.hi == 0.5);
  TimestepRange r2 = anneal_timestep_range(1000, 400, start, end);
  CHECK(r2.lo == 0.1);
  TimestepRange rm = anneal_timestep_range(200, 400, start, end);
  CHECK(rm.lo == doctest::Approx(0.3));
  CHECK(rm.hi == doctest::Approx(0.7));
  // lo < hi preserved along the whole path
  for (int s = 0; s <= 400; s += 7) {
    TimestepRange r = anneal_timestep_range(s, 400, start, end);
    CHECK(r.lo < r.hi);
  }
}

TEST_CASE("sds_gradient is zero for a perfect denoiser, any t and eps") {
  NoiseSchedule sched = default_schedule(100);
  Rng rng(9);
  std::vector<Tensor> views, epss;
  std::vector<Camera> cams;
  for (int i = 0; i < 4; ++i) {
    views.push_back(Tensor::rand_uniform({6, 6, 3}, rng, 0.0, 1.0));
    epss.push_back(Tensor::randn({6, 6, 3}, rng));
    cams.push_back(sample_camera_sphere(rng, 3.0, false, 0.7, 6, 6));
  }
  PerfectDenoiser perfect;
  for (int64_t t : {0L, 13L, 99L}) {
    auto grads = sds_gradient(perfect, make_ctx(views, cams), t, epss, sched);
    for (const auto& g : grads)
      for (int64_t i = 0; i < g.numel(); ++i) CHECK(g.data()[i] == 0.0);
  }
}

TEST_CASE("mock guidance: zero gradient at the target, exact closed form, eps cancels bitwise") {
  NoiseSchedule sched = default_schedule(50);
  Rng rng(11);
  Tensor target = Tensor::rand_uniform({5, 5, 3}, rng, 0.0, 1.0);
  Camera cam = sample_camera_sphere(rng, 3.0, false, 0.7, 5, 5);
  auto mock = mock_target_guidance({target}, {cam});

  // rendered view equals the target -> zero gradient for every t, eps
  for (int64_t t : {0L, 25L, 49L}) {
    Tensor eps = Tensor::randn({5, 5, 3}, rng);
    auto g = sds_gradient(*mock, make_ctx({target}, {cam}), t, {eps}, sched);
    for (int64_t i = 0; i < g[0].numel(); ++i) CHECK(g[0].data()[i] == 0.0);
  }

  // gradient equals sqrt(ab)/sqrt(1-ab) * (x - target), bit-level across eps
  Tensor x = Tensor::rand_uniform({5, 5, 3}, rng, 0.0, 1.0);
  const int64_t t = 20;
  const double ab = sched.alpha_bar[t];
  Tensor closed = scale(sub(x, target), std::sqrt(ab) / std::sqrt(1.0 - ab));
  Tensor first;
  for (int rep = 0; rep < 3; ++rep) {
    Tensor eps = Tensor::randn({5, 5, 3}, rng);
    auto g = sds_gradient(*mock, make_ctx({x}, {cam}), t, {eps}, sched);
    for (int64_t i = 0; i < closed.numel(); ++i) CHECK(g[0].data()[i] == closed.data()[i]);
  }

  // direction equals (x - target) up to a positive scalar for every t
  for (int64_t t2 : {1L, 30L, 48L}) {
    Tensor eps = Tensor::zeros({5, 5, 3});
    auto g = sds_gradient(*mock, make_ctx({x}, {cam}), t2, {eps}, sched);
    const double k = std::sqrt(sched.alpha_bar[t2]) / std::sqrt(1 - sched.alpha_bar[t2]);
    for (int64_t i = 0; i < g[0].numel(); ++i)
      CHECK(g[0].data()[i] == doctest::Approx(k * (x.data()[i] - target.data()[i])));
  }
}

TEST_CASE("mock predict_noise path approximates the algebraic residual") {
  NoiseSchedule sched = default_schedule(50);
  Rng rng(13);
  Tensor target = Tensor::rand_uniform({4, 4, 3}, rng, 0.0, 1.0);
  auto mock = mock_target_guidance({target});
  Tensor x = Tensor::rand_uniform({4, 4, 3}, rng, 0.0, 1.0);
  Tensor eps = Tensor::randn({4, 4, 3}, rng);
  const int64_t t = 10;
  const double ab = sched.alpha_bar[t];
  GuidanceContext ctx = make_ctx({x}, {sample_camera_sphere(rng, 3.0, false, 0.7, 4, 4)});

  Tensor x_t = add(scale(x, std::sqrt(ab)), scale(eps, std::sqrt(1 - ab)));
  Tensor numeric = sub(mock->predict_noise(x_t, t, sched, ctx, 0), eps);
  Tensor algebraic = mock->noise_residual(x, eps, t, sched, ctx, 0);
  for (int64_t i = 0; i < numeric.numel(); ++i)
    CHECK(numeric.data()[i] == doctest::Approx(algebraic.data()[i]).epsilon(1e-9));
}

TEST_CASE("optimizing a free image under mock guidance converges to the target") {
  NoiseSchedule sched = default_schedule(100);
  Rng rng(17);
  Tensor target = Tensor::rand_uniform({8, 8, 3}, rng, 0.0, 1.0);
  auto mock = mock_target_guidance({target});
  Camera cam = sample_camera_sphere(rng, 3.0, false, 0.7, 8, 8);

  Tensor img = Tensor::full({8, 8, 3}, 0.5);
  const double lr = 0.05;
  double l2 = 1e9;
  for (int step = 0; step < 500; ++step) {
    Rng sr = rng.split(step);
    const int64_t t = sample_timestep(sched, TimestepRange{0.1, 0.9}, sr);
    Tensor eps = Tensor::randn(img.shape(), sr);
    auto g = sds_gradient(*mock, make_ctx({img}, {cam}), t, {eps}, sched);
    for (int64_t i = 0; i < img.numel(); ++i) img.data()[i] -= lr * g[0].data()[i];
  }
  l2 = 0.0;
  for (int64_t i = 0; i < img.numel(); ++i) {
    const double d = img.data()[i] - target.data()[i];
    l2 += d * d;
  }
  CHECK(l2 / img.numel() < 1e-3);

  // line-search oracle: a small step along -gradient decreases the L2 loss
  Tensor x = Tensor::rand_uniform({8, 8, 3}, rng, 0.0, 1.0);
  Tensor eps = Tensor::zeros(x.shape());
  auto g = sds_gradient(*mock, make_ctx({x}, {cam}), 50, {eps}, sched);
  auto l2_of = [&](const Tensor& a) {
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
      const double d = a.data()[i] - target.data()[i];
      acc += d * d;
    }
    return acc;
  };
  Tensor stepped = sub(x, scale(g[0], 0.01));
  CHECK(l2_of(stepped) < l2_of(x));
}

TEST_CASE("guidance registry declares adapters") {
  GuidanceSpec mock = lookup_guidance("mock");
  CHECK(mock.available);
  GuidanceSpec mv = lookup_guidance("mvdream");
  CHECK_FALSE(mv.available);
  CHECK(mv.required_views == 4);
  GuidanceSpec sd = lookup_guidance("sd-depth");
  CHECK_FALSE(sd.available);
  CHECK_THROWS_AS(lookup_guidance("nope"), std::invalid_argument);
}

TEST_CASE("sds_gradient validates context alignment") {
  NoiseSchedule sched = default_schedule(10);
  Rng rng(23);
  Tensor v = Tensor::zeros({4, 4, 3});
  auto mock = mock_target_guidance({v});
  GuidanceContext ctx = make_ctx({v}, {});  // cameras missing
  CHECK_THROWS_AS(sds_gradient(*mock, ctx, 0, {Tensor::zeros({4, 4, 3})}, sched),
                  std::invalid_argument);
}
