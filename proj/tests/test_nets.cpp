#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "core/ops.h"
#include "nets/model.h"
#include "render/raster.h"
#include "render/volume.h"
#include "test_util.h"

using namespace tritex;

namespace {

ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::desk();
  c.triplane_res = 16;
  c.triplane_ch = 4;
  c.pe_blocks = 2;
  c.pe_hidden = 8;
  c.unet_depth = 2;
  c.unet_base = 8;
  c.gn_groups = 4;
  c.attn_heads = 2;
  c.attn_head_dim = 4;
  c.upsample_res = 24;
  c.prompt_dim = 8;
  return c;
}

ColoredPointCloud random_cloud(int64_t n, uint64_t seed) {
  Rng rng(seed);
  ColoredPointCloud pc;
  for (int64_t i = 0; i < n * 3; ++i) {
    pc.positions.push_back(rng.uniform(-0.4, 0.4));
    pc.colors.push_back(rng.uniform(0.0, 1.0));
  }
  return pc;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

PromptRecord make_prompt(const std::string& text, int64_t dim) {
  return create_embedder("hash", dim, 1234)->embed(text);
}

}  // namespace

TEST_CASE("prompt embedder: shape, determinism, registry errors") {
  auto emb = create_embedder("hash", 16, 7);
  PromptRecord a = emb->embed("a grey wolf");
  PromptRecord b = emb->embed("a grey wolf");
  PromptRecord c = emb->embed("an ice cream sundae");
  a.check_valid("test");
  CHECK(a.tokens.shape() == Shape{77, 16});
  CHECK(tensors_equal(a.tokens, b.tokens));
  CHECK_FALSE(tensors_equal(a.tokens, c.tokens));
  CHECK_THROWS_AS(create_embedder("mvdream", 16, 7), std::runtime_error);
}

TEST_CASE("encode_points: zero final projection gives all-zero triplane") {
  Model m(tiny_config(), 1);
  Tensor w = m.params().get("pe.proj.w");
  std::fill(w.data(), w.data() + w.numel(), 0.0);
  Triplane tp = m.encode_points(random_cloud(32, 5));
  for (int64_t i = 0; i < tp.planes.numel(); ++i) CHECK(tp.planes.data()[i] == 0.0);
}

TEST_CASE("encode_points is invariant to point order") {
  Model m(tiny_config(), 2);
  ColoredPointCloud pc = random_cloud(40, 9);
  Triplane a = m.encode_points(pc);

  std::vector<int64_t> perm(pc.count());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(3);
  for (int64_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
  ColoredPointCloud shuffled;
  for (int64_t i : perm)
    for (int k = 0; k < 3; ++k) {
      shuffled.positions.push_back(pc.positions[i * 3 + k]);
      shuffled.colors.push_back(pc.colors[i * 3 + k]);
    }
  Triplane b = m.encode_points(shuffled);
  for (int64_t i = 0; i < a.planes.numel(); ++i)
    CHECK(a.planes.data()[i] == doctest::Approx(b.planes.data()[i]).epsilon(1e-12));
}

TEST_CASE("encode_points rejects an empty point cloud") {
  Model m(tiny_config(), 2);
  ColoredPointCloud pc;
  CHECK_THROWS_AS(m.encode_points(pc), std::invalid_argument);
}

TEST_CASE("encode_points matches a straight-line reference forward pass") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 11);
  m.randomize_all(77);
  ColoredPointCloud pc = random_cloud(16, 21);
  Triplane got = m.encode_points(pc);

  // independent naive re-implementation with plain loops
  const int64_t n = pc.count(), hd = cfg.pe_hidden, r = cfg.triplane_res;
  const auto& ps = m.params();
  auto W = [&](const std::string& name) { return ps.get(name); };
  auto silu_s = [](double x) { return x / (1.0 + std::exp(-x)); };

  std::vector<std::vector<double>> h(n, std::vector<double>(hd));
  for (int64_t i = 0; i < n; ++i) {
    double in[6] = {pc.positions[i * 3],  pc.positions[i * 3 + 1], pc.positions[i * 3 + 2],
                    pc.colors[i * 3],     pc.colors[i * 3 + 1],    pc.colors[i * 3 + 2]};
    for (int64_t j = 0; j < hd; ++j) {
      double acc = W("pe.embed.b").data()[j];
      for (int64_t k = 0; k < 6; ++k) acc += in[k] * W("pe.embed.w").data()[k * hd + j];
      h[i][j] = silu_s(acc);
    }
  }
  auto to_pix = [&](double wld) {
    double u = (wld / cfg.triplane_extent * 0.5 + 0.5) * r - 0.5;
    return std::min(std::max(u, 0.0), double(r - 1));
  };
  auto nearest = [&](double wld) { return (int64_t)std::llround(to_pix(wld)); };
  const int axes[3][2] = {{0, 1}, {0, 2}, {1, 2}};

  for (int64_t blk = 0; blk < cfg.pe_blocks; ++blk) {
    // scatter-mean into three planes, then gather by bilinear sum
    std::vector<std::vector<double>> plane(3, std::vector<double>(hd * r * r, 0.0));
    std::vector<std::vector<double>> cnt(3, std::vector<double>(r * r, 0.0));
    for (int64_t i = 0; i < n; ++i)
      for (int p = 0; p < 3; ++p) {
        const int64_t col = nearest(pc.positions[i * 3 + axes[p][0]]);
        const int64_t row = nearest(pc.positions[i * 3 + axes[p][1]]);
        cnt[p][row * r + col] += 1;
        for (int64_t cidx = 0; cidx < hd; ++cidx)
          plane[p][cidx * r * r + row * r + col] += h[i][cidx];
      }
    for (int p = 0; p < 3; ++p)
      for (int64_t px = 0; px < r * r; ++px)
        if (cnt[p][px] > 0)
          for (int64_t cidx = 0; cidx < hd; ++cidx) plane[p][cidx * r * r + px] /= cnt[p][px];

    const std::string bp = "pe.block" + std::to_string(blk);
    std::vector<std::vector<double>> h2(n, std::vector<double>(hd));
    for (int64_t i = 0; i < n; ++i) {
      std::vector<double> gathered(hd, 0.0);
      for (int p = 0; p < 3; ++p) {
        const double uc = to_pix(pc.positions[i * 3 + axes[p][0]]);
        const double ur = to_pix(pc.positions[i * 3 + axes[p][1]]);
        const int64_t c0 = (int64_t)uc, r0 = (int64_t)ur;
        const int64_t c1 = std::min(c0 + 1, r - 1), r1 = std::min(r0 + 1, r - 1);
        const double fc = uc - c0, fr = ur - r0;
        for (int64_t cidx = 0; cidx < hd; ++cidx) {
          const double* g = &plane[p][cidx * r * r];
          gathered[cidx] += g[r0 * r + c0] * (1 - fr) * (1 - fc) + g[r0 * r + c1] * (1 - fr) * fc +
                            g[r1 * r + c0] * fr * (1 - fc) + g[r1 * r + c1] * fr * fc;
        }
      }
      std::vector<double> mid(hd);
      for (int64_t j = 0; j < hd; ++j) {
        double acc = W(bp + ".fc1.b").data()[j];
        for (int64_t k = 0; k < hd; ++k) {
          acc += h[i][k] * W(bp + ".fc1.w").data()[k * hd + j];
          acc += gathered[k] * W(bp + ".fc1.w").data()[(hd + k) * hd + j];
        }
        mid[j] = silu_s(acc);
      }
      for (int64_t j = 0; j < hd; ++j) {
        double acc = W(bp + ".fc2.b").data()[j];
        for (int64_t k = 0; k < hd; ++k) acc += mid[k] * W(bp + ".fc2.w").data()[k * hd + j];
        h2[i][j] = h[i][j] + acc;
      }
    }
    h = std::move(h2);
  }

  // final scatter + shared 1x1 projection
  const int64_t tc = cfg.triplane_ch;
  std::vector<double> expect(3 * tc * r * r, 0.0);
  {
    std::vector<std::vector<double>> plane(3, std::vector<double>(hd * r * r, 0.0));
    std::vector<std::vector<double>> cnt(3, std::vector<double>(r * r, 0.0));
    for (int64_t i = 0; i < n; ++i)
      for (int p = 0; p < 3; ++p) {
        const int64_t col = nearest(pc.positions[i * 3 + axes[p][0]]);
        const int64_t row = nearest(pc.positions[i * 3 + axes[p][1]]);
        cnt[p][row * r + col] += 1;
        for (int64_t cidx = 0; cidx < hd; ++cidx)
          plane[p][cidx * r * r + row * r + col] += h[i][cidx];
      }
    for (int p = 0; p < 3; ++p)
      for (int64_t px = 0; px < r * r; ++px) {
        if (cnt[p][px] > 0)
          for (int64_t cidx = 0; cidx < hd; ++cidx) plane[p][cidx * r * r + px] /= cnt[p][px];
        for (int64_t o = 0; o < tc; ++o) {
          double acc = W("pe.proj.b").data()[o];
          for (int64_t cidx = 0; cidx < hd; ++cidx)
            acc += W("pe.proj.w").data()[o * hd + cidx] * plane[p][cidx * r * r + px];
          expect[(p * tc + o) * r * r + px] = acc;
        }
      }
  }
  for (int64_t i = 0; i < got.planes.numel(); ++i)
    CHECK(got.planes.data()[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("unet_encode: alpha=1 output is bit-identical across prompts") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 3);
  m.randomize_all(13);
  Triplane tp = m.encode_points(random_cloud(24, 31));
  PromptRecord p1 = make_prompt("a red convertible car", cfg.prompt_dim);
  PromptRecord p2 = make_prompt("a futuristic robot", cfg.prompt_dim);
  Triplane a = m.unet_encode(tp, &p1, 1.0);
  Triplane b = m.unet_encode(tp, &p2, 1.0);
  CHECK(tensors_equal(a.planes, b.planes));

  // alpha = 0: full residual; outputs must differ for generic params
  Triplane c = m.unet_encode(tp, &p1, 0.0);
  Triplane d = m.unet_encode(tp, &p2, 0.0);
  CHECK_FALSE(tensors_equal(c.planes, d.planes));
}

TEST_CASE("unet_encode: alpha=0.5 equals instrumented run with residuals halved") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 4);
  m.randomize_all(17);
  Triplane tp = m.encode_points(random_cloud(24, 37));
  PromptRecord p = make_prompt("a sheep wearing skis", cfg.prompt_dim);

  Triplane direct = m.unet_encode(tp, &p, 0.5);
  m.attn_residual_hook = [](const Tensor& r, int64_t) { return scale(r, 0.5); };
  Triplane hooked = m.unet_encode(tp, &p, 0.0);
  m.attn_residual_hook = nullptr;
  for (int64_t i = 0; i < direct.planes.numel(); ++i)
    CHECK(direct.planes.data()[i] ==
          doctest::Approx(hooked.planes.data()[i]).epsilon(1e-12));
}

TEST_CASE("unet_decode: identity at default init, nonlinear with random params") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 5);
  Rng rng(41);
  Triplane tp = Triplane::wrap(Tensor::randn({3, cfg.triplane_ch, cfg.triplane_res,
                                              cfg.triplane_res}, rng, 0.5));
  // default init zeroes the output conv, so the U-Net is the identity
  Triplane out = m.unet_decode(tp);
  CHECK(tensors_equal(out.planes, tp.planes));

  m.randomize_all(19);
  Triplane y1 = m.unet_decode(tp);
  Triplane y2 = m.unet_decode(Triplane::wrap(scale(tp.planes, 2.0)));
  bool all_linear = true;
  for (int64_t i = 0; i < y1.planes.numel(); ++i)
    if (std::abs(y2.planes.data()[i] - 2.0 * y1.planes.data()[i]) > 1e-9) all_linear = false;
  CHECK_FALSE(all_linear);

  Triplane bad = Triplane::zeros(cfg.triplane_res / 2, cfg.triplane_ch);
  CHECK_THROWS_AS(m.unet_decode(Triplane::zeros(cfg.triplane_res, cfg.triplane_ch + 1)),
                  std::invalid_argument);
}

TEST_CASE("sdf_head: zero MLP gives exactly the sphere SDF, robust to huge features") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 6);  // default init: sdf.fc2 zeroed
  FieldQuery q = FieldQuery::of({0.2, -0.3, 0.1, 0.0, 0.0, 0.0});
  Rng rng(1);
  Tensor feats = Tensor::randn({2, cfg.triplane_ch}, rng);
  Tensor s = m.sdf_head(feats, q);
  CHECK(s.at({0}) == doctest::Approx(sphere_sdf({0.2, -0.3, 0.1}, cfg.sphere_radius)));
  CHECK(s.at({1}) == doctest::Approx(-cfg.sphere_radius));

  m.randomize_all(23);
  Tensor big = Tensor::full({2, cfg.triplane_ch}, 1e3);
  Tensor s2 = m.sdf_head(big, q);
  CHECK(s2.all_finite());
  Tensor s3 = m.sdf_head(Tensor::full({2, cfg.triplane_ch}, -1e3), q);
  CHECK(s3.all_finite());
}

TEST_CASE("rgb_head: range, zero-weight mid-gray") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 7);
  FieldQuery q = FieldQuery::of({0.1, 0.2, 0.3});
  Rng rng(2);
  Tensor mid = m.rgb_head(Tensor::randn({1, cfg.triplane_ch}, rng), q);
  for (int i = 0; i < 3; ++i) CHECK(mid.at({0, i}) == doctest::Approx(0.5));

  m.randomize_all(29);
  Tensor out = m.rgb_head(Tensor::randn({1, cfg.triplane_ch}, rng, 10.0), q);
  for (int i = 0; i < 3; ++i) {
    CHECK(out.at({0, i}) >= 0.0);
    CHECK(out.at({0, i}) <= 1.0);
  }
}

TEST_CASE("head gradients match finite differences") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 8);
  m.randomize_all(31);
  FieldQuery q = FieldQuery::of({0.2, -0.1, 0.3, -0.3, 0.2, 0.0, 0.1, 0.1, 0.1});
  Rng rng(4);
  Tensor feats = Tensor::randn({3, cfg.triplane_ch}, rng);

  for (const char* name : {"sdf.fc1.w", "sdf.fc2.w", "sdf.fc1.b"}) {
    Tensor p = m.params().get(name);
    auto loss = [&] { return sum_all(square(m.sdf_head(feats, q))); };
    m.params().zero_grad();
    backward(loss());
    const double err = tritex::testing::max_rel_grad_error(p, [&] { return loss().item(); });
    CAPTURE(name);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("mapping_network: zero final layer, degenerate input, saturation") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 9);
  m.ensure_stage2_params();
  PromptRecord p = make_prompt("wood carving of a penguin", cfg.prompt_dim);

  // default init: no-bias final layer is zero -> all-zero residual triplane
  Tensor res = m.mapping_network(p);
  CHECK(res.shape() == Shape{3, cfg.triplane_ch, cfg.upsample_res, cfg.upsample_res});
  for (int64_t i = 0; i < res.numel(); ++i) CHECK(res.data()[i] == 0.0);

  // all-zero tokens: output determined solely by the first layer's bias
  m.randomize_all(37);
  PromptRecord zero = p;
  zero.tokens = Tensor::zeros({kPromptTokens, cfg.prompt_dim});
  zero.pooled = Tensor::zeros({cfg.prompt_dim});
  Tensor out = m.mapping_network(zero);
  Tensor expect = reshape(matmul(reshape(m.params().get("map.fc1.b"), {1, 32}),
                                 m.params().get("map.fc2.w")),
                          {3, cfg.triplane_ch, cfg.upsample_res, cfg.upsample_res});
  for (int64_t i = 0; i < out.numel(); i += 97)
    CHECK(out.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));

  // saturation: token magnitudes bounded away from zero, scaled 10x vs 1000x
  Rng rng(5);
  std::vector<double> base(kPromptTokens * cfg.prompt_dim);
  for (auto& v : base) {
    const double mag = rng.uniform(5.0, 15.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  PromptRecord pa = p, pb = p;
  std::vector<double> b10 = base, b1000 = base;
  for (auto& v : b10) v *= 10.0;
  for (auto& v : b1000) v *= 1000.0;
  pa.tokens = Tensor::from({kPromptTokens, cfg.prompt_dim}, std::move(b10));
  pb.tokens = Tensor::from({kPromptTokens, cfg.prompt_dim}, std::move(b1000));
  Tensor oa = m.mapping_network(pa);
  Tensor ob = m.mapping_network(pb);
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < oa.numel(); ++i) {
    num += (oa.data()[i] - ob.data()[i]) * (oa.data()[i] - ob.data()[i]);
    den += oa.data()[i] * oa.data()[i];
  }
  CHECK(std::sqrt(num / std::max(den, 1e-30)) < 1e-3);
}

TEST_CASE("upsample_triplane: nearest-neighbor index map plus residual additivity") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 10);
  m.ensure_stage2_params();  // map.fc2 zero: no residual
  PromptRecord p = make_prompt("a chrome dumbbell", cfg.prompt_dim);

  const int64_t r = cfg.triplane_res, up = cfg.upsample_res;
  Rng rng(6);
  Triplane tp = Triplane::wrap(Tensor::randn({3, cfg.triplane_ch, r, r}, rng));
  Triplane big = m.upsample_triplane(tp, p);
  // index-map oracle: output pixel (i,j) copies source (i*r/up, j*r/up)
  for (int64_t plane = 0; plane < 3; ++plane)
    for (int64_t i = 0; i < up; i += 7)
      for (int64_t j = 0; j < up; j += 5) {
        const int64_t si = i * r / up, sj = j * r / up;
        CHECK(big.planes.at({plane, 1, i, j}) == tp.planes.at({plane, 1, si, sj}));
      }

  // constant plane stays constant
  Triplane c = m.upsample_triplane(Triplane::wrap(Tensor::full({3, cfg.triplane_ch, r, r}, 0.7)),
                                   p);
  for (int64_t i = 0; i < c.planes.numel(); i += 131) CHECK(c.planes.data()[i] == 0.7);

  // zero input: output equals the mapping-network residual exactly
  m.randomize_all(43);
  Triplane z = m.upsample_triplane(Triplane::zeros(r, cfg.triplane_ch), p);
  Tensor res = m.mapping_network(p);
  CHECK(tensors_equal(z.planes, res));
}

TEST_CASE("alpha=1 prompt independence holds through both forward paths") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 12);
  m.randomize_all(47);
  m.ensure_stage2_params();
  ColoredPointCloud pc = random_cloud(30, 51);
  FieldQuery q = FieldQuery::of({0.1, 0.2, -0.1, -0.2, 0.0, 0.3});

  Tensor sdf_ref, rgb_ref;
  for (const char* text : {"wolf", "coyote", "dingo", "husky", "fox"}) {
    PromptRecord p = make_prompt(text, cfg.prompt_dim);
    auto fields = m.forward_fields(&p, pc, 1.0, 2);
    Tensor s = fields.sdf(q);
    Tensor c = fields.rgb(q);
    if (!sdf_ref.defined()) {
      sdf_ref = s;
      rgb_ref = c;
    } else {
      CHECK(tensors_equal(s, sdf_ref));
      CHECK(tensors_equal(c, rgb_ref));
    }
  }
}

TEST_CASE("stage-1 weight tying: shared encoder mutation changes G and T") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 13);
  m.randomize_all(53);
  ColoredPointCloud pc = random_cloud(30, 55);
  PromptRecord p = make_prompt("a torus", cfg.prompt_dim);
  FieldQuery q = FieldQuery::of({0.15, -0.2, 0.05});

  auto f0 = m.forward_fields(&p, pc, 0.2, 1);
  // object identity: geometry and texture paths read the same decoded tensor
  CHECK(f0.geo_decoded.planes.data() == f0.tex_decoded.planes.data());
  const double s0 = f0.sdf(q).item();
  const double c0 = f0.rgb(q).at({0, 0});

  Tensor w = m.params().get("enc.down0.conv1.w");
  w.data()[0] += 0.5;
  auto f1 = m.forward_fields(&p, pc, 0.2, 1);
  CHECK(f1.sdf(q).item() != s0);
  CHECK(f1.rgb(q).at({0, 0}) != c0);
}

TEST_CASE("end-to-end gradients through a tiny volume render match finite differences") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 14);
  m.randomize_all(59);
  ColoredPointCloud pc = random_cloud(2, 61);  // 2-point cloud
  PromptRecord p = make_prompt("a sphere", cfg.prompt_dim);
  Camera cam = make_camera({2.2, 0.7, 0.4}, {0, 0, 0}, 0.7, 4, 4);
  VolumeRenderOptions opts;
  opts.n_samples = 8;
  opts.density = DensityParams{0.1, 10.0};
  opts.jitter_seed = 5;

  auto loss_fn = [&] {
    auto fields = m.forward_fields(&p, pc, 0.3, 1);
    RenderedView v = volume_render(fields.sdf, fields.rgb, cam, opts);
    return add(mean_all(square(v.rgb)), mean_all(square(v.opacity)));
  };
  m.params().zero_grad();
  backward(loss_fn());

  for (const char* name :
       {"pe.embed.w", "pe.block0.fc1.w", "enc.conv_in.w", "enc.down0.conv1.w",
        "enc.down0.aware.w", "enc.attnd0.q.w", "enc.attnd0.out.w", "enc.up0.conv2.w",
        "enc.conv_out.w", "dec.down1.conv1.w", "dec.conv_out.w", "sdf.fc1.w", "rgb.fc1.w",
        "enc.down0.gn1.g"}) {
    Tensor t = m.params().get(name);
    const double err = tritex::testing::sampled_rel_grad_error(
        t, [&] { return loss_fn().item(); }, hash_str(name), 4, 1e-6);
    CAPTURE(name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("stage flags freeze the right groups") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 15);
  m.ensure_stage2_params();

  m.apply_stage_flags(StageTag::kStage1, false);
  CHECK(m.params().get("dec.conv_in.w").requires_grad());
  CHECK(m.params().get("rgb.fc1.w").requires_grad());
  CHECK_FALSE(m.params().get("map.fc1.w").requires_grad());

  m.apply_stage_flags(StageTag::kStage1, true);  // annealing window
  CHECK(m.params().get("pe.embed.w").requires_grad());
  CHECK(m.params().get("enc.conv_in.w").requires_grad());
  CHECK_FALSE(m.params().get("dec.conv_in.w").requires_grad());
  CHECK_FALSE(m.params().get("sdf.fc1.w").requires_grad());

  m.apply_stage_flags(StageTag::kStage2, false);
  for (const auto& prefix : Model::geometry_prefixes())
    for (const auto& name : m.params().names_with_prefix(prefix))
      CHECK_FALSE(m.params().get(name).requires_grad());
  CHECK(m.params().get("map.fc1.w").requires_grad());
  CHECK(m.params().get("dec2.conv_in.w").requires_grad());
  CHECK(m.params().get("rgb.fc1.w").requires_grad());
}

TEST_CASE("checkpoint round trip is bitwise and rejects version mismatch") {
  ModelConfig cfg = tiny_config();
  Model m(cfg, 16);
  m.randomize_all(67);
  m.ensure_stage2_params();
  const auto path = std::filesystem::temp_directory_path() / "tritex_ckpt_test.lat";
  m.save(path.string(), {{"stage", "stage1"}});

  Model back = Model::load(path.string());
  CHECK(back.has_stage2_params());
  REQUIRE(back.params().items().size() == m.params().items().size());
  for (size_t i = 0; i < m.params().items().size(); ++i) {
    const auto& [name, t] = m.params().items()[i];
    const Tensor other = back.params().get(name);
    REQUIRE(other.numel() == t.numel());
    for (int64_t j = 0; j < t.numel(); ++j) CHECK(other.data()[j] == t.data()[j]);
  }
  const auto meta = peek_checkpoint_metadata(path.string());
  CHECK(meta.at("stage") == "stage1");

  // corrupt the version field (bytes 4..8 after magic)
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const uint32_t bad = 999;
    f.write(reinterpret_cast<const char*>(&bad), 4);
  }
  CHECK_THROWS_AS(Model::load(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("golden forward regression on fixed seeds") {
  // recorded reference forward values; pins the full decode + head pipeline
  ModelConfig cfg = tiny_config();
  Model m(cfg, 100);
  m.randomize_all(100);
  ColoredPointCloud pc = random_cloud(16, 100);
  PromptRecord p = make_prompt("golden", cfg.prompt_dim);
  auto fields = m.forward_fields(&p, pc, 0.25, 1);
  FieldQuery q = FieldQuery::of({0.1, -0.2, 0.3, -0.15, 0.25, 0.05});
  Tensor s = fields.sdf(q);
  Tensor c = fields.rgb(q);

  // frozen from the reference run (see tools/golden notes in tests)
  const double expect_s[2] = {-0.20950422952194797, -1.1539008501101149};
  const double expect_c[2] = {0.35004869176243486, 0.71572596147269929};
  CHECK(s.at({0}) == doctest::Approx(expect_s[0]).epsilon(1e-10));
  CHECK(s.at({1}) == doctest::Approx(expect_s[1]).epsilon(1e-10));
  CHECK(c.at({0, 0}) == doctest::Approx(expect_c[0]).epsilon(1e-10));
  CHECK(c.at({1, 2}) == doctest::Approx(expect_c[1]).epsilon(1e-10));
}
