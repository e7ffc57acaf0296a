#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/ops.h"
#include "core/rng.h"
#include "core/tensor.h"
#include "test_util.h"

using namespace tritex;
using tritex::testing::max_rel_grad_error;

namespace {

// Runs fn to build a scalar loss from the given leaf, backprops once, then
// compares against central finite differences on every coordinate.
double gradcheck(Tensor& leaf, const std::function<Tensor()>& fn) {
  leaf.set_requires_grad(true);
  leaf.zero_grad();
  Tensor loss = fn();
  backward(loss);
  return max_rel_grad_error(leaf, [&] { return fn().item(); });
}

Tensor weighted_sum(const Tensor& t, Rng& rng) {
  // Fixed random projection makes the scalar sensitive to every element.
  Rng r = rng.split("proj");
  Tensor w = Tensor::rand_uniform(t.shape(), r, -1.0, 1.0);
  return sum_all(mul(t, w));
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(7);
  Tensor a = Tensor::rand_uniform({3, 4}, rng, 0.2, 1.5);
  Tensor b = Tensor::rand_uniform({3, 4}, rng, 0.2, 1.5);

  CHECK(gradcheck(a, [&] { return sum_all(mul(add(a, b), sub(a, b))); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(div(b, a)); }) < 1e-5);
  CHECK(gradcheck(a, [&] { return sum_all(exp_(a)); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(log_(a)); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(sqrt_(a)); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(tanh_(a)); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(sigmoid(a)); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(silu(a)); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(square(a)); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return mse(a, b); }) < 1e-6);
}

TEST_CASE("broadcasting add/mul") {
  Rng rng(11);
  Tensor a = Tensor::rand_uniform({2, 3, 4}, rng, -1.0, 1.0);
  Tensor b = Tensor::rand_uniform({3, 1}, rng, -1.0, 1.0);
  Tensor c = add(a, b);
  CHECK(c.shape() == Shape{2, 3, 4});
  CHECK(c.at({1, 2, 3}) == doctest::Approx(a.at({1, 2, 3}) + b.at({2, 0})));
  CHECK(gradcheck(b, [&] { return sum_all(square(mul(a, b))); }) < 1e-6);
  CHECK(gradcheck(a, [&] { return sum_all(square(add(a, b))); }) < 1e-6);
}

TEST_CASE("matmul linear bmm gradients") {
  Rng rng(13);
  Tensor x = Tensor::randn({4, 3}, rng);
  Tensor w = Tensor::randn({3, 5}, rng);
  Tensor b = Tensor::randn({5}, rng);
  CHECK(gradcheck(w, [&] { return sum_all(square(matmul(x, w))); }) < 1e-5);
  CHECK(gradcheck(x, [&] { return sum_all(square(linear(x, w, b))); }) < 1e-5);
  CHECK(gradcheck(b, [&] { return sum_all(square(linear(x, w, b))); }) < 1e-5);

  Tensor p = Tensor::randn({2, 3, 4}, rng);
  Tensor q = Tensor::randn({2, 4, 2}, rng);
  CHECK(gradcheck(p, [&] { return sum_all(square(bmm(p, q))); }) < 1e-5);
  CHECK(gradcheck(q, [&] { return sum_all(square(bmm(p, q))); }) < 1e-5);
}

TEST_CASE("shape ops") {
  Rng rng(17);
  Tensor a = Tensor::randn({2, 3, 4}, rng);
  Tensor r = reshape(a, {6, 4});
  CHECK(r.data() == a.data());  // aliased storage
  Tensor p = permute(a, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  CHECK(p.at({3, 1, 2}) == a.at({1, 2, 3}));
  CHECK(gradcheck(a, [&] { return sum_all(square(permute(a, {2, 0, 1}))); }) < 1e-6);

  Tensor b = Tensor::randn({2, 2, 4}, rng);
  Tensor cat = concat({a, b}, 1);
  CHECK(cat.shape() == Shape{2, 5, 4});
  CHECK(cat.at({1, 4, 0}) == b.at({1, 1, 0}));
  CHECK(gradcheck(b, [&] { return sum_all(square(concat({a, b}, 1))); }) < 1e-6);

  Tensor s = slice_axis0(a, 1, 1);
  CHECK(s.shape() == Shape{1, 3, 4});
  CHECK(gradcheck(a, [&] { return sum_all(square(slice_axis0(a, 0, 2))); }) < 1e-6);
}

TEST_CASE("reductions") {
  Rng rng(19);
  Tensor a = Tensor::randn({3, 4, 2}, rng);
  CHECK(sum_axis(a, 1).shape() == Shape{3, 2});
  CHECK(sum_axis(a, 1, true).shape() == Shape{3, 1, 2});
  double manual = 0.0;
  for (int i = 0; i < 4; ++i) manual += a.at({1, i, 0});
  CHECK(sum_axis(a, 1).at({1, 0}) == doctest::Approx(manual));
  CHECK(gradcheck(a, [&] { return sum_all(square(mean_axis(a, -1))); }) < 1e-6);
  CHECK(mean_all(a).item() == doctest::Approx(sum_all(a).item() / 24.0));
}

TEST_CASE("softmax layernorm groupnorm") {
  Rng rng(23);
  Tensor a = Tensor::randn({5, 7}, rng);
  Tensor sm = softmax_lastdim(a);
  double row = 0.0;
  for (int i = 0; i < 7; ++i) row += sm.at({2, i});
  CHECK(row == doctest::Approx(1.0));
  Rng wr = rng.split("w");
  CHECK(gradcheck(a, [&] { return weighted_sum(softmax_lastdim(a), wr); }) < 1e-5);

  Tensor g = Tensor::rand_uniform({7}, rng, 0.5, 1.5);
  Tensor b = Tensor::randn({7}, rng);
  CHECK(gradcheck(a, [&] { return weighted_sum(layernorm_lastdim(a, g, b), wr); }) < 1e-4);
  CHECK(gradcheck(g, [&] { return weighted_sum(layernorm_lastdim(a, g, b), wr); }) < 1e-5);

  Tensor x = Tensor::randn({6, 4, 4}, rng);
  Tensor gg = Tensor::rand_uniform({6}, rng, 0.5, 1.5);
  Tensor gb = Tensor::randn({6}, rng);
  CHECK(gradcheck(x, [&] { return weighted_sum(groupnorm(x, 2, gg, gb), wr); }) < 1e-4);
  CHECK(gradcheck(gg, [&] { return weighted_sum(groupnorm(x, 2, gg, gb), wr); }) < 1e-5);
  CHECK(gradcheck(gb, [&] { return weighted_sum(groupnorm(x, 2, gg, gb), wr); }) < 1e-6);
}

TEST_CASE("conv and resampling ops") {
  Rng rng(29);
  Tensor x = Tensor::randn({3, 4, 4}, rng);
  Tensor w3 = Tensor::randn({2, 3, 3, 3}, rng, 0.4);
  Tensor b3 = Tensor::randn({2}, rng);
  Rng wr = rng.split("w");
  CHECK(gradcheck(x, [&] { return weighted_sum(conv2d_3x3(x, w3, b3), wr); }) < 1e-5);
  CHECK(gradcheck(w3, [&] { return weighted_sum(conv2d_3x3(x, w3, b3), wr); }) < 1e-5);

  Tensor w1 = Tensor::randn({5, 3}, rng);
  CHECK(gradcheck(x, [&] { return weighted_sum(conv2d_1x1(x, w1, Tensor()), wr); }) < 1e-5);

  CHECK(gradcheck(x, [&] { return weighted_sum(avgpool2x2(x), wr); }) < 1e-6);
  CHECK(gradcheck(x, [&] { return weighted_sum(upsample_nearest(x, 7, 9), wr); }) < 1e-6);

  // conv against a hand-rolled direct convolution
  Tensor y = conv2d_3x3(x, w3, b3);
  for (int co = 0; co < 2; ++co)
    for (int yy = 0; yy < 4; ++yy)
      for (int xx = 0; xx < 4; ++xx) {
        double acc = b3.at({co});
        for (int ci = 0; ci < 3; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = yy + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= 4 || sx < 0 || sx >= 4) continue;
              acc += x.at({ci, sy, sx}) * w3.at({co, ci, ky, kx});
            }
        CHECK(y.at({co, yy, xx}) == doctest::Approx(acc));
      }
}

TEST_CASE("cumsum exclusive") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor c = cumsum_exclusive_lastdim(a);
  CHECK(c.at({0, 0}) == 0.0);
  CHECK(c.at({0, 2}) == 3.0);
  CHECK(c.at({1, 2}) == 9.0);
  Rng rng(31);
  Tensor x = Tensor::randn({3, 5}, rng);
  Rng wr = rng.split("w");
  CHECK(gradcheck(x, [&] { return weighted_sum(cumsum_exclusive_lastdim(x), wr); }) < 1e-6);
}

TEST_CASE("scatter and gather rows") {
  Rng rng(37);
  Tensor v = Tensor::randn({3, 2}, rng);
  std::vector<int64_t> pix = {0, 5, 3};
  Tensor img = scatter_rows_to_image(v, pix, 2, 3, {0.5, 0.5});
  CHECK(img.at({0, 0, 0}) == v.at({0, 0}));
  CHECK(img.at({1, 2, 1}) == v.at({1, 1}));
  CHECK(img.at({0, 1, 0}) == 0.5);
  Rng wr = rng.split("w");
  CHECK(gradcheck(v, [&] {
          return weighted_sum(scatter_rows_to_image(v, pix, 2, 3, {0.5, 0.5}), wr);
        }) < 1e-6);

  Tensor x = Tensor::randn({4, 3}, rng);
  std::vector<int64_t> rows = {2, 2, 0};
  Tensor g = gather_rows(x, rows);
  CHECK(g.at({0, 1}) == x.at({2, 1}));
  CHECK(gradcheck(x, [&] { return weighted_sum(gather_rows(x, rows), wr); }) < 1e-6);
}

TEST_CASE("grad accumulates across backward calls and detach blocks flow") {
  Tensor a = Tensor::from({2}, {1.0, 2.0}).set_requires_grad(true);
  Tensor l1 = sum_all(square(a));
  backward(l1);
  backward(sum_all(square(a)));
  CHECK(a.grad()[0] == doctest::Approx(4.0));  // 2x accumulation

  a.zero_grad();
  Tensor d = a.detach();
  CHECK_FALSE(d.requires_grad());
  Tensor l2 = sum_all(mul(a, d));  // d constant
  backward(l2);
  CHECK(a.grad()[0] == doctest::Approx(1.0));
  CHECK(a.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("rng determinism and distributions") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c = Rng(42).split("x");
  Rng d = Rng(42).split("y");
  CHECK(c.next_u64() != d.next_u64());

  Rng r(123);
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += r.normal();
  mean /= n;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
}
