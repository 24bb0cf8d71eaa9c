#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hexburst/nn_ops.hpp"
#include "testutil.hpp"

using namespace hexburst;

TEST_CASE("conv2d: averaging 4x4/s4 kernel over a constant block") {
  Tensor in({1, 1, 8, 8}, 3.0f);
  Tensor w({1, 1, 4, 4}, 1.0f / 16.0f);
  Tensor b({1}, 0.f);
  auto out = conv2d(in, w, b, 4, 4, 0, 0);
  CHECK(out.shape() == std::vector<int>{1, 1, 2, 2});
  for (float v : out.vec()) CHECK(v == doctest::Approx(3.0f));
}

TEST_CASE("conv2d: factor-of-four shape rule") {
  Tensor in({1, 1, 64, 64});
  Rng rng(3);
  auto w = testutil::rand_tensor<float>({32, 1, 4, 4}, rng);
  auto out = conv2d(in, w, Tensor(), 4, 4, 0, 0);
  CHECK(out.shape() == std::vector<int>{1, 32, 16, 16});
}

TEST_CASE("conv2d matches the naive nested-loop oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    auto in = testutil::rand_tensor<float>({1, 2, 6, 6}, rng);
    auto w = testutil::rand_tensor<float>({3, 2, 3, 3}, rng);
    auto b = testutil::rand_tensor<float>({3}, rng);
    auto out = conv2d(in, w, b, 1, 1, 1, 1);
    auto ref = testutil::conv2d_ref(in.cast<double>(), w.cast<double>(), b.cast<double>(), 1, 1, 1, 1);
    REQUIRE(out.shape() == std::vector<int>{1, 3, 6, 6});
    for (int64_t i = 0; i < out.numel(); ++i)
      CHECK(std::abs(out.data()[i] - ref.data()[i]) < 1e-6);
  }
}

TEST_CASE("conv2d matches the oracle on strided/padded instances") {
  Rng rng(11);
  struct Case {
    int sh, sw, ph, pw, kh, kw;
  };
  for (Case c : {Case{2, 2, 1, 1, 3, 3}, Case{4, 4, 0, 0, 4, 4}, Case{2, 1, 0, 2, 2, 5}}) {
    auto in = testutil::rand_tensor<float>({2, 3, 9, 8}, rng);
    auto w = testutil::rand_tensor<float>({4, 3, c.kh, c.kw}, rng);
    auto b = testutil::rand_tensor<float>({4}, rng);
    auto out = conv2d(in, w, b, c.sh, c.sw, c.ph, c.pw);
    auto ref = testutil::conv2d_ref(in.cast<double>(), w.cast<double>(), b.cast<double>(), c.sh,
                                    c.sw, c.ph, c.pw);
    REQUIRE(out.shape() == ref.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
      CHECK(std::abs(out.data()[i] - ref.data()[i]) < 1e-6);
  }
}

TEST_CASE("conv2d rejects mismatched channels with both shapes in the message") {
  Tensor in({1, 3, 8, 8});
  Tensor w({8, 4, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(in, w, Tensor(), 1, 1, 1, 1), doctest::Contains("[8,4,3,3]"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(conv2d(in, w, Tensor(), 1, 1, 1, 1), doctest::Contains("[1,3,8,8]"),
                       std::invalid_argument);
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  Tensor in({1, 1, 3, 3});
  Tensor w({1, 1, 5, 5});
  CHECK_THROWS_AS(conv2d(in, w, Tensor(), 1, 1, 0, 0), std::invalid_argument);
}

TEST_CASE("residual_block with zero weights is the identity") {
  Rng rng(5);
  auto x = testutil::rand_tensor<float>({1, 16, 8, 8}, rng);
  Tensor w1({16, 16, 3, 3}), b1({16}), w2({16, 16, 3, 3}), b2({16});
  auto y = residual_block(x, w1, b1, w2, b2);
  CHECK(y.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("residual_block preserves shape and rejects channel mismatch") {
  Rng rng(6);
  auto x = testutil::rand_tensor<float>({1, 16, 8, 8}, rng);
  auto w1 = testutil::rand_tensor<float>({16, 16, 3, 3}, rng, -0.1, 0.1);
  auto w2 = testutil::rand_tensor<float>({16, 16, 3, 3}, rng, -0.1, 0.1);
  Tensor b({16});
  CHECK(residual_block(x, w1, b, w2, b).shape() == std::vector<int>{1, 16, 8, 8});
  auto w_bad = testutil::rand_tensor<float>({8, 8, 3, 3}, rng);
  Tensor b_bad({8});
  CHECK_THROWS_AS(residual_block(x, w_bad, b_bad, w_bad, b_bad), std::invalid_argument);
}

TEST_CASE("pixel_shuffle r=2 on 1x4x1x1 lays out [[a,b],[c,d]]") {
  auto x = Tensor::from({1, 4, 1, 1}, {10.f, 20.f, 30.f, 40.f});
  auto y = pixel_shuffle(x, 2);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(y.data()[0] == 10.f);
  CHECK(y.data()[1] == 20.f);
  CHECK(y.data()[2] == 30.f);
  CHECK(y.data()[3] == 40.f);
}

TEST_CASE("pixel_shuffle r=1 is the identity") {
  Rng rng(8);
  auto x = testutil::rand_tensor<float>({2, 3, 4, 4}, rng);
  auto y = pixel_shuffle(x, 1);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("pixel_shuffle shape rule and divisibility check") {
  Tensor x({1, 12, 4, 4});
  CHECK(pixel_shuffle(x, 2).shape() == std::vector<int>{1, 3, 8, 8});
  CHECK_THROWS_AS(pixel_shuffle(x, 4), std::invalid_argument);
}

TEST_CASE("pixel_shuffle(space_to_depth(x)) is bit-exact for r in {2,4}") {
  Rng rng(9);
  for (int r : {2, 4}) {
    auto x = testutil::rand_tensor<float>({2, 3, 8, 8}, rng);
    auto y = pixel_shuffle(space_to_depth(x, r), r);
    REQUIRE(y.shape() == x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
    auto d = testutil::rand_tensor<float>({2, 3 * r * r, 4, 4}, rng);
    auto z = space_to_depth(pixel_shuffle(d, r), r);
    for (int64_t i = 0; i < d.numel(); ++i) CHECK(z.data()[i] == d.data()[i]);
  }
}

TEST_CASE("bilinear_warp with zero flow is the exact identity") {
  Rng rng(10);
  auto x = testutil::rand_tensor<float>({1, 3, 7, 9}, rng);
  Tensor flow({1, 2, 7, 9}, 0.f);
  auto y = bilinear_warp(x, flow);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("bilinear_warp with constant integer flow equals a direct shift") {
  Rng rng(12);
  const int H = 12, W = 14;
  auto x = testutil::rand_tensor<float>({1, 1, H, W}, rng);
  Tensor flow({1, 2, H, W});
  const int dx = 3, dy = -2;
  for (int y = 0; y < H; ++y)
    for (int xw = 0; xw < W; ++xw) {
      flow.data()[0 * H * W + y * W + xw] = static_cast<float>(dx);
      flow.data()[1 * H * W + y * W + xw] = static_cast<float>(dy);
    }
  auto out = bilinear_warp(x, flow);
  for (int y = 0; y < H; ++y)
    for (int xw = 0; xw < W; ++xw) {
      const int sy = y + dy, sx = xw + dx;
      if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;  // border-replicated region
      CHECK(out.data()[y * W + xw] == doctest::Approx(x.data()[sy * W + sx]));
    }
}

TEST_CASE("bilinear_warp of a ramp with flow (0.5, 0) interpolates the ramp") {
  const int H = 6, W = 10;
  Tensor x({1, 1, H, W});
  for (int y = 0; y < H; ++y)
    for (int xw = 0; xw < W; ++xw) x.data()[y * W + xw] = 2.0f * xw + 1.0f;
  Tensor flow({1, 2, H, W});
  for (int i = 0; i < H * W; ++i) flow.data()[i] = 0.5f;
  auto out = bilinear_warp(x, flow);
  for (int y = 0; y < H; ++y)
    for (int xw = 0; xw + 1 < W; ++xw)
      CHECK(out.data()[y * W + xw] == doctest::Approx(2.0f * (xw + 0.5f) + 1.0f));
}

TEST_CASE("bilinear_warp rejects dimension mismatches") {
  Tensor x({1, 1, 4, 4});
  CHECK_THROWS_AS(bilinear_warp(x, Tensor({1, 2, 4, 5})), std::invalid_argument);
  CHECK_THROWS_AS(bilinear_warp(x, Tensor({1, 3, 4, 4})), std::invalid_argument);
}

TEST_CASE("bilinear_resize constant field stays constant, magnitudes exact") {
  Tensor x({1, 2, 8, 8}, 4.25f);
  auto y = bilinear_resize(x, 4, 4);
  REQUIRE(y.shape() == std::vector<int>{1, 2, 4, 4});
  for (float v : y.vec()) CHECK(v == doctest::Approx(4.25f));
  auto z = bilinear_resize(x, 16, 16);
  for (float v : z.vec()) CHECK(v == doctest::Approx(4.25f));
}

TEST_CASE("block_mean reduces 4x4 blocks to their means") {
  Tensor x({1, 1, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int xw = 0; xw < 8; ++xw) x.data()[y * 8 + xw] = (y < 4 ? 1.0f : 3.0f);
  auto m = block_mean(x, 4);
  REQUIRE(m.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(m.data()[0] == doctest::Approx(1.0f));
  CHECK(m.data()[3] == doctest::Approx(3.0f));
}

TEST_CASE("concat_channels stacks and validates") {
  Rng rng(13);
  auto a = testutil::rand_tensor<float>({2, 2, 3, 3}, rng);
  auto b = testutil::rand_tensor<float>({2, 5, 3, 3}, rng);
  auto y = concat_channels<float>({a, b});
  REQUIRE(y.shape() == std::vector<int>{2, 7, 3, 3});
  CHECK(y.data()[0] == a.data()[0]);
  // batch 1, first channel of b lives at channel offset 2
  CHECK(y.data()[(1 * 7 + 2) * 9] == b.data()[(1 * 5 + 0) * 9]);
  CHECK_THROWS_AS(concat_channels<float>({a, Tensor({2, 2, 4, 3})}), std::invalid_argument);
}

TEST_CASE("forward chain on finite inputs stays finite") {
  Rng rng(14);
  auto x = testutil::rand_tensor<float>({1, 4, 16, 16}, rng, -10.0, 10.0);
  auto w = testutil::rand_tensor<float>({16, 4, 3, 3}, rng, -2.0, 2.0);
  auto b = testutil::rand_tensor<float>({16}, rng);
  auto flow = testutil::rand_tensor<float>({1, 2, 16, 16}, rng, -3.0, 3.0);
  auto h = relu(conv2d(x, w, b, 1, 1, 1, 1));
  auto s = pixel_shuffle(h, 2);
  auto d = space_to_depth(s, 2);
  auto wp = bilinear_warp(d, flow);
  auto r = bilinear_resize(wp, 9, 11);
  auto g = gauss_down2(wp);
  CHECK(h.all_finite());
  CHECK(wp.all_finite());
  CHECK(r.all_finite());
  CHECK(g.all_finite());
}
