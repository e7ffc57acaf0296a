#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "core/ops.h"
#include "core/rng.h"
#include "field/triplane.h"
#include "test_util.h"

using namespace tritex;

namespace {

// World coordinate of pixel center i on an R-wide axis spanning [-extent, extent].
double pixel_center_world(int64_t i, int64_t r, double extent) {
  return ((static_cast<double>(i) + 0.5) / static_cast<double>(r) * 2.0 - 1.0) * extent;
}

// Independent 4-corner interpolation oracle over one plane's raw grid.
double bilinear_oracle(const std::vector<double>& grid, int64_t r, double extent, double wc,
                       double wr) {
  auto to_pix = [&](double w) {
    double u = (w / extent * 0.5 + 0.5) * r - 0.5;
    return std::min(std::max(u, 0.0), static_cast<double>(r - 1));
  };
  const double uc = to_pix(wc), ur = to_pix(wr);
  const int64_t c0 = static_cast<int64_t>(uc), r0 = static_cast<int64_t>(ur);
  const int64_t c1 = std::min(c0 + 1, r - 1), r1 = std::min(r0 + 1, r - 1);
  const double fc = uc - c0, fr = ur - r0;
  return grid[r0 * r + c0] * (1 - fr) * (1 - fc) + grid[r0 * r + c1] * (1 - fr) * fc +
         grid[r1 * r + c0] * fr * (1 - fc) + grid[r1 * r + c1] * fr * fc;
}

}  // namespace

TEST_CASE("sample_triplane: linear ramp on XY plane is exact") {
  const int64_t r = 16, c = 1;
  Triplane tp = Triplane::zeros(r, c, 1.0);
  // plane XY stores f(x, y) = x at each pixel center
  double* d = tp.planes.data();
  for (int64_t row = 0; row < r; ++row)
    for (int64_t col = 0; col < r; ++col) d[row * r + col] = pixel_center_world(col, r, 1.0);

  Tensor out = sample_triplane(tp, FieldQuery::of({0.25, 0.0, 0.0}));
  CHECK(out.item() == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sample_triplane: sums constant planes") {
  Triplane tp = Triplane::zeros(8, 2, 1.0);
  double* d = tp.planes.data();
  const int64_t plane_sz = 2 * 8 * 8;
  for (int64_t i = 0; i < plane_sz; ++i) d[i] = 1.5;                       // XY
  for (int64_t i = 0; i < plane_sz; ++i) d[plane_sz + i] = -0.25;          // XZ
  for (int64_t i = 0; i < plane_sz; ++i) d[2 * plane_sz + i] = 2.0;        // YZ
  Tensor out = sample_triplane(tp, FieldQuery::of({0.3, -0.8, 0.55}));
  CHECK(out.at({0, 0}) == doctest::Approx(1.5 - 0.25 + 2.0));
  CHECK(out.at({0, 1}) == doctest::Approx(1.5 - 0.25 + 2.0));
}

TEST_CASE("sample_triplane matches independent bilinear oracle on random plane") {
  Rng rng(99);
  const int64_t r = 8;
  Triplane tp = Triplane::zeros(r, 1, 1.0);
  std::vector<double> grid(r * r);
  for (auto& v : grid) v = rng.uniform(-2.0, 2.0);
  std::copy(grid.begin(), grid.end(), tp.planes.data());  // XY plane only

  for (int k = 0; k < 50; ++k) {
    const double x = rng.uniform(-0.99, 0.99);
    const double y = rng.uniform(-0.99, 0.99);
    const double z = rng.uniform(-0.99, 0.99);
    Tensor out = sample_triplane(tp, FieldQuery::of({x, y, z}));
    CHECK(out.item() == doctest::Approx(bilinear_oracle(grid, r, 1.0, x, y)).epsilon(1e-12));
  }
}

TEST_CASE("sample_triplane clamps out-of-range queries to the boundary") {
  const int64_t r = 8;
  Triplane tp = Triplane::zeros(r, 1, 1.0);
  tp.planes.data()[0 * r + 0] = 3.0;  // XY corner pixel (row 0, col 0)
  Tensor inside = sample_triplane(tp, FieldQuery::of({-0.999, -0.999, -0.999}));
  Tensor outside = sample_triplane(tp, FieldQuery::of({-5.0, -5.0, -5.0}));
  CHECK(outside.item() >= inside.item());
  CHECK(outside.item() == doctest::Approx(3.0));  // fully clamped to corner
}

TEST_CASE("sample_triplane rejects non-finite coordinates") {
  Triplane tp = Triplane::zeros(4, 1);
  CHECK_THROWS_AS(sample_triplane(tp, FieldQuery::of({0.0, std::nan(""), 0.0})),
                  std::invalid_argument);
}

TEST_CASE("sample_triplane is linear in plane contents") {
  Rng rng(5);
  Triplane t1 = Triplane::wrap(Tensor::randn({3, 2, 8, 8}, rng));
  Triplane t2 = Triplane::wrap(Tensor::randn({3, 2, 8, 8}, rng));
  const double a = 1.7, b = -0.6;
  Triplane mix = Triplane::wrap(add(scale(t1.planes, a), scale(t2.planes, b)));
  FieldQuery q = FieldQuery::of({0.2, -0.4, 0.7, -0.9, 0.1, 0.3});
  Tensor lhs = sample_triplane(mix, q);
  Tensor rhs = add(scale(sample_triplane(t1, q), a), scale(sample_triplane(t2, q), b));
  for (int i = 0; i < 2; ++i)
    for (int ch = 0; ch < 2; ++ch)
      CHECK(lhs.at({i, ch}) == doctest::Approx(rhs.at({i, ch})).epsilon(1e-12));
}

TEST_CASE("sample_triplane gradient vs central finite differences") {
  Rng rng(17);
  Tensor planes = Tensor::randn({3, 2, 6, 6}, rng);
  planes.set_requires_grad(true);
  Triplane tp = Triplane::wrap(planes);
  FieldQuery q = FieldQuery::of({0.31, -0.22, 0.48, -0.77, 0.13, 0.64});
  Rng wr(3);
  Tensor w = Tensor::rand_uniform({2, 2}, wr, -1.0, 1.0);

  auto loss_fn = [&] { return sum_all(mul(sample_triplane(tp, q), w)); };
  planes.zero_grad();
  backward(loss_fn());
  const double err =
      tritex::testing::max_rel_grad_error(planes, [&] { return loss_fn().item(); });
  CHECK(err < 1e-5);
}

TEST_CASE("scatter_to_triplane: single occupant and mean of two") {
  const int64_t r = 8;
  // one point at a known pixel center
  const double cx = ((3 + 0.5) / r * 2.0 - 1.0);  // col 3
  const double cy = ((5 + 0.5) / r * 2.0 - 1.0);  // row 5
  Tensor f1 = Tensor::from({1, 1}, {2.5});
  Triplane tp = scatter_to_triplane(FieldQuery::of({cx, cy, cx}), f1, r);
  CHECK(tp.planes.at({0, 0, 5, 3}) == doctest::Approx(2.5));  // XY: row=y, col=x
  double sum = 0.0;
  for (int64_t i = 0; i < r * r; ++i) sum += tp.planes.data()[i];
  CHECK(sum == doctest::Approx(2.5));  // nothing else on XY

  // two points in the same pixel average
  Tensor f2 = Tensor::from({2, 1}, {1.0, 3.0});
  Triplane tp2 = scatter_to_triplane(FieldQuery::of({cx, cy, cx, cx, cy, cx}), f2, r);
  CHECK(tp2.planes.at({0, 0, 5, 3}) == doctest::Approx(2.0));
}

TEST_CASE("scatter_to_triplane matches independent bucketing oracle") {
  Rng rng(123);
  const int64_t n = 100, r = 8;
  std::vector<double> pts(n * 3);
  std::vector<double> feats(n);
  for (auto& v : pts) v = rng.uniform(-0.98, 0.98);
  for (auto& v : feats) v = rng.uniform(-1.0, 1.0);
  Triplane tp = scatter_to_triplane(FieldQuery::of(pts), Tensor::from({n, 1}, feats), r);

  // oracle: bucket by rounded pixel coordinate on the XZ plane (col=x, row=z)
  std::map<int64_t, std::pair<double, int>> buckets;
  auto to_pix = [&](double w) {
    double u = (w * 0.5 + 0.5) * r - 0.5;
    u = std::min(std::max(u, 0.0), static_cast<double>(r - 1));
    return static_cast<int64_t>(std::llround(u));
  };
  for (int64_t i = 0; i < n; ++i) {
    const int64_t id = to_pix(pts[i * 3 + 2]) * r + to_pix(pts[i * 3 + 0]);
    buckets[id].first += feats[i];
    buckets[id].second += 1;
  }
  for (int64_t row = 0; row < r; ++row)
    for (int64_t col = 0; col < r; ++col) {
      const auto it = buckets.find(row * r + col);
      const double expect = it == buckets.end() ? 0.0 : it->second.first / it->second.second;
      CHECK(tp.planes.at({1, 0, row, col}) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("scatter_to_triplane: empty point set gives all-zero triplane") {
  Triplane tp = scatter_to_triplane(FieldQuery::of({}), Tensor::zeros({0, 4}), 8);
  CHECK(tp.channels == 4);
  for (int64_t i = 0; i < tp.planes.numel(); ++i) CHECK(tp.planes.data()[i] == 0.0);
}

TEST_CASE("scatter then sample at a pixel center recovers the feature") {
  const int64_t r = 8;
  const double cx = ((2 + 0.5) / r * 2.0 - 1.0);
  const double cy = ((6 + 0.5) / r * 2.0 - 1.0);
  const double cz = ((4 + 0.5) / r * 2.0 - 1.0);
  Tensor f = Tensor::from({1, 1}, {-1.25});
  Triplane tp = scatter_to_triplane(FieldQuery::of({cx, cy, cz}), f, r);
  for (int plane = 0; plane < 3; ++plane) {
    Tensor got = sample_plane(tp, plane, FieldQuery::of({cx, cy, cz}));
    CHECK(got.item() == doctest::Approx(-1.25).epsilon(1e-12));
  }
}

TEST_CASE("sphere_sdf and offset_sdf closed forms") {
  CHECK(sphere_sdf({0, 0, 0}, 0.5) == doctest::Approx(-0.5));
  CHECK(sphere_sdf({0.5, 0, 0}, 0.5) == doctest::Approx(0.0));
  CHECK(sphere_sdf({1, 1, 1}, 0.5) == doctest::Approx(std::sqrt(3.0) - 0.5));
  CHECK_THROWS_AS(sphere_sdf({0, 0, 0}, -1.0), std::invalid_argument);

  // zero raw network output -> field is exactly the sphere SDF
  FieldQuery q = FieldQuery::of({0.3, -0.2, 0.9, 0.0, 0.0, 0.0});
  Tensor raw0 = Tensor::zeros({2});
  Tensor f = offset_sdf(raw0, q, 0.5);
  CHECK(f.at({0}) == doctest::Approx(sphere_sdf({0.3, -0.2, 0.9}, 0.5)));
  CHECK(f.at({1}) == doctest::Approx(-0.5));

  // raw = 0.1 on the surface -> 0.1
  CHECK(offset_sdf(0.1, {0.5, 0.0, 0.0}, 0.5) == doctest::Approx(0.1));

  // raw = -sphere -> identically zero
  Tensor raw = Tensor::from({2}, {-sphere_sdf({0.3, -0.2, 0.9}, 0.5), 0.5});
  Tensor g = offset_sdf(raw, q, 0.5);
  CHECK(g.at({0}) == doctest::Approx(0.0));
}

TEST_CASE("sdf_to_density closed forms, monotonicity, continuity") {
  DensityParams dp{0.1, 1.0};
  CHECK(sdf_to_density(0.0, dp) == doctest::Approx(0.5));
  CHECK(sdf_to_density(dp.beta, dp) == doctest::Approx(0.5 * std::exp(-1.0)));
  CHECK(sdf_to_density(50.0, dp) == doctest::Approx(0.0));
  CHECK(sdf_to_density(-50.0, dp) == doctest::Approx(1.0));

  double prev = sdf_to_density(-2.0, dp);
  for (double s = -2.0 + 0.05; s < 2.0; s += 0.05) {
    const double cur = sdf_to_density(s, dp);
    CHECK(cur < prev);
    prev = cur;
  }
  // continuity at 0: left/right limits both alpha_vs / 2
  CHECK(sdf_to_density(-1e-12, dp) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(sdf_to_density(1e-12, dp) == doctest::Approx(0.5).epsilon(1e-9));

  CHECK_THROWS_AS(sdf_to_density(0.0, DensityParams{-1.0, 1.0}), std::invalid_argument);

  // tensor path gradient
  Rng rng(7);
  Tensor s = Tensor::rand_uniform({16}, rng, -0.5, 0.5);
  s.set_requires_grad(true);
  auto loss = [&] { return sum_all(square(sdf_to_density(s, dp))); };
  backward(loss());
  CHECK(tritex::testing::max_rel_grad_error(s, [&] { return loss().item(); }) < 1e-5);
}

TEST_CASE("triplane blob round trip") {
  Rng rng(55);
  Triplane tp = Triplane::wrap(Tensor::randn({3, 4, 8, 8}, rng), 1.0);
  // force exactly representable f32 values so the round trip is bitwise
  for (int64_t i = 0; i < tp.planes.numel(); ++i)
    tp.planes.data()[i] = static_cast<float>(tp.planes.data()[i]);

  const auto path = std::filesystem::temp_directory_path() / "tritex_tp_test.bin";
  save_triplane(path.string(), tp);
  Triplane back = load_triplane(path.string());
  CHECK(back.resolution == 8);
  CHECK(back.channels == 4);
  CHECK(back.extent == doctest::Approx(1.0));
  for (int64_t i = 0; i < tp.planes.numel(); ++i)
    CHECK(back.planes.data()[i] == tp.planes.data()[i]);
  std::filesystem::remove(path);
}
