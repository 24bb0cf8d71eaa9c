#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "hexburst/flow.hpp"
#include "hexburst/rawsim.hpp"
#include "testutil.hpp"

using namespace hexburst;

namespace {

// luminance plane of a procedural scene, as (H,W)
Tensor make_luma(int w, int h, uint64_t seed) {
  auto img = make_test_image(w, h, seed);
  Tensor lum({h, w});
  for (int i = 0; i < h * w; ++i)
    lum.data()[i] = (img.data()[i] + img.data()[h * w + i] + img.data()[2 * h * w + i]) / 3.0f;
  return lum;
}

Tensor shift_luma(const Tensor& lum, double dx, double dy) {
  const int H = lum.dim(0), W = lum.dim(1);
  auto lifted = translate_image(reshape(lum, {1, H, W}), dx, dy);
  return reshape(lifted, {H, W});
}

Tensor constant_flow(int h, int w, float dx, float dy) {
  Tensor f({2, h, w});
  for (int i = 0; i < h * w; ++i) {
    f.data()[i] = dx;
    f.data()[h * w + i] = dy;
  }
  return f;
}

}  // namespace

TEST_CASE("raw_to_flowinput: constant raw and shape rule") {
  auto raw = make_hexadeca_raw(Tensor({16, 24}, 0.5f));
  auto lum = raw_to_flowinput(raw);
  REQUIRE(lum.shape() == std::vector<int>{4, 6});
  for (float v : lum.vec()) CHECK(v == doctest::Approx(0.5f));
  auto tiny = raw_to_flowinput(make_hexadeca_raw(Tensor({8, 8}, 0.25f)));
  CHECK(tiny.shape() == std::vector<int>{2, 2});
}

TEST_CASE("raw_to_flowinput: a 4-px raw shift becomes a 1-px flow-input shift") {
  // gray scene so the mosaic is transparent
  auto luma = make_luma(64, 64, 11);
  Tensor gray({3, 64, 64});
  for (int c = 0; c < 3; ++c)
    std::copy(luma.data(), luma.data() + 64 * 64, gray.data() + c * 64 * 64);
  auto raw0 = make_hexadeca_raw(mosaic_hexadeca(gray));
  Tensor shifted({3, 64, 64});
  for (int c = 0; c < 3; ++c) {
    auto s = shift_luma(luma, 4.0, 0.0);
    std::copy(s.data(), s.data() + 64 * 64, shifted.data() + c * 64 * 64);
  }
  auto raw1 = make_hexadeca_raw(mosaic_hexadeca(shifted));
  auto lum0 = raw_to_flowinput(raw0);
  auto lum1 = raw_to_flowinput(raw1);
  for (int y = 0; y < 16; ++y)
    for (int x = 1; x < 16; ++x)
      CHECK(lum1.data()[y * 16 + x] == doctest::Approx(lum0.data()[y * 16 + x - 1]).epsilon(1e-5));
}

TEST_CASE("block_match: identical frames give zero flow (tie-break picks (0,0))") {
  auto lum = make_luma(24, 24, 12);
  auto flow = block_match(lum, lum, 3);
  for (float v : flow.data.vec()) CHECK(v == 0.0f);
}

TEST_CASE("block_match: exact recovery of integer translations in the interior") {
  auto lum = make_luma(32, 32, 13);
  auto other = shift_luma(lum, 3.0, -2.0);
  auto flow = block_match(lum, other, 4);
  FlowField gt;
  gt.data = constant_flow(32, 32, 3.0f, -2.0f);
  CHECK(epe(flow, gt, 4 + 4) == doctest::Approx(0.0));
}

TEST_CASE("block_match: max_disp 0 forces zero flow") {
  auto lum = make_luma(16, 16, 14);
  auto other = shift_luma(lum, 2.0, 1.0);
  auto flow = block_match(lum, other, 0);
  for (float v : flow.data.vec()) CHECK(v == 0.0f);
}

TEST_CASE("estimate_flow: zero-initialized final layers give zero flow") {
  auto net = init_flownet(3, 42, /*zero_init_last=*/true);
  auto lum = make_luma(32, 32, 15);
  auto flow = estimate_flow(lum, lum, net);
  REQUIRE(flow.data.shape() == std::vector<int>{2, 32, 32});
  for (float v : flow.data.vec()) CHECK(v == 0.0f);
}

TEST_CASE("estimate_flow rejects dims not divisible by 2^(levels-1)") {
  auto net = init_flownet(3, 1);
  Tensor lum({18, 18}, 0.5f);
  CHECK_THROWS_AS(estimate_flow(lum, lum, net), std::invalid_argument);
}

TEST_CASE("estimate_flow is translation-covariant at pyramid-aligned shifts") {
  // The 3-level pyramid's receptive field reaches ~9 coarse px, i.e. ~36 px
  // at full scale, so border-replication effects need a wide margin.
  auto net = init_flownet(3, 7, /*zero_init_last=*/false);
  const int H = 128, W = 128, m = 44;
  auto lum = make_luma(W, H, 16);
  auto other = shift_luma(lum, 1.0, 2.0);
  auto f1 = estimate_flow(lum, other, net);
  auto f2 = estimate_flow(shift_luma(lum, 4.0, 0.0), shift_luma(other, 4.0, 0.0), net);
  for (int c = 0; c < 2; ++c)
    for (int y = m; y < H - m; ++y)
      for (int x = m; x < W - m - 4; ++x) {
        const float a = f1.data.data()[(c * H + y) * W + x];
        const float b = f2.data.data()[(c * H + y) * W + (x + 4)];
        CHECK(std::abs(a - b) < 1e-3f);
      }
}

TEST_CASE("rescale_flow: uniform field scales exactly, factor 1 is identity") {
  FlowField f;
  f.data = constant_flow(32, 32, 4.0f, 0.0f);
  f.scale = 0.25;
  auto half = rescale_flow(f, 0.5);
  REQUIRE(half.data.shape() == std::vector<int>{2, 16, 16});
  CHECK(half.scale == doctest::Approx(0.125));
  for (int i = 0; i < 16 * 16; ++i) {
    CHECK(half.data.data()[i] == doctest::Approx(2.0f));
    CHECK(half.data.data()[16 * 16 + i] == doctest::Approx(0.0f));
  }
  auto same = rescale_flow(f, 1.0);
  for (int64_t i = 0; i < f.data.numel(); ++i)
    CHECK(same.data.data()[i] == f.data.data()[i]);
}

TEST_CASE("rescale_flow rejects non-integral targets") {
  FlowField f;
  f.data = Tensor({2, 15, 15});
  CHECK_THROWS_AS(rescale_flow(f, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(rescale_flow(f, -1.0), std::invalid_argument);
}

TEST_CASE("rescale_flow: down/up round trip error stays at the golden level") {
  // smooth synthetic field
  FlowField f;
  f.data = Tensor({2, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      f.data.data()[y * 32 + x] = std::sin(0.1 * x) + 0.3f * std::cos(0.07 * y);
      f.data.data()[32 * 32 + y * 32 + x] = std::cos(0.05 * x + 0.08 * y);
    }
  auto back = rescale_flow(rescale_flow(f, 0.5), 2.0);
  double err = 0.0;
  for (int64_t i = 0; i < f.data.numel(); ++i)
    err += std::abs(static_cast<double>(back.data.data()[i]) - f.data.data()[i]);
  err /= static_cast<double>(f.data.numel());
  MESSAGE("rescale round-trip mean abs err = " << err);
  CHECK(err < 1e-2);
}

TEST_CASE("epe closed forms") {
  FlowField zero, unit, tri;
  zero.data = Tensor({2, 12, 12});
  unit.data = constant_flow(12, 12, 1.0f, 0.0f);
  tri.data = constant_flow(12, 12, 3.0f, 4.0f);
  CHECK(epe(zero, zero) == doctest::Approx(0.0));
  CHECK(epe(unit, zero) == doctest::Approx(1.0));
  CHECK(epe(tri, zero) == doctest::Approx(5.0));
  FlowField other_scale = zero;
  other_scale.scale = 0.25;
  CHECK_THROWS_AS(epe(zero, other_scale), std::invalid_argument);
  FlowField small;
  small.data = Tensor({2, 8, 8});
  CHECK_THROWS_AS(epe(zero, small), std::invalid_argument);
}

TEST_CASE("photometric_finetune: 0 steps leaves parameters unchanged") {
  auto net = init_flownet(3, 5);
  std::vector<FlowPair> pairs{{make_luma(32, 32, 20), make_luma(32, 32, 21), 0, 0}};
  auto result = photometric_finetune(net, pairs, 0, 1e-3);
  CHECK_FALSE(result.aborted);
  for (const auto& [name, t] : net.params) {
    const auto& u = result.net.params.at(name);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(u.data()[i] == t.data()[i]);
  }
}

TEST_CASE("photometric_finetune reduces the loss on its own training set") {
  auto net = init_flownet(3, 6);
  std::vector<FlowPair> pairs;
  for (int k = 0; k < 3; ++k) {
    auto lum = make_luma(32, 32, 30 + static_cast<uint64_t>(k));
    Rng rng(40 + static_cast<uint64_t>(k));
    const double dx = rng.uniform(-1.5, 1.5), dy = rng.uniform(-1.5, 1.5);
    pairs.push_back({lum, shift_luma(lum, dx, dy), dx, dy});
  }
  auto result = photometric_finetune(net, pairs, 60, 2e-3, 1);
  CHECK_FALSE(result.aborted);
  REQUIRE(result.curve.size() == 60);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += result.curve[i].loss;
    last += result.curve[result.curve.size() - 1 - i].loss;
  }
  CHECK(last < first);
}

TEST_CASE("flownet save/load round trip") {
  auto dir = (std::filesystem::temp_directory_path() / "hexburst_flownet_test").string();
  std::filesystem::remove_all(dir);
  auto net = init_flownet(3, 77, /*zero_init_last=*/false);
  save_flownet(dir, net);
  auto back = load_flownet(dir);
  CHECK(back.levels == net.levels);
  REQUIRE(back.params.size() == net.params.size());
  for (const auto& [name, t] : net.params) {
    const auto& u = back.params.at(name);
    REQUIRE(u.shape() == t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(u.data()[i] == t.data()[i]);
  }
}
