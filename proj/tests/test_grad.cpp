#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hexburst/losses.hpp"
#include "hexburst/nn_ops.hpp"
#include "testutil.hpp"

// Finite-difference checks (f64, eps 1e-5) of every differentiable op.
// Inputs are kept away from the kinks: relu away from 0, warp/resize sample
// positions away from cell boundaries, rgb_to_lab strictly inside (0,1).

using namespace hexburst;
using DTensor = TensorT<double>;
using DTape = TapeT<double>;

namespace {

constexpr double kEps = 1e-5;
constexpr double kRtol = 1e-3;

// Runs loss_fn under a fresh tape, backpropagates, then sweeps each listed
// tensor with central differences.
void check_op(std::vector<DTensor> params, const std::function<DTensor()>& loss_fn) {
  for (auto& p : params) p.set_requires_grad(true);
  {
    DTape tape;
    auto loss = loss_fn();
    backward(loss);
  }
  for (auto& p : params) {
    REQUIRE(p.has_grad());
    std::vector<double> analytic = p.grad();
    p.zero_grad();
    auto rep = testutil::fd_check(
        p, analytic, [&] { return loss_fn().item(); }, kEps);
    INFO("checked " << rep.checked << " entries, max rel err " << rep.max_rel);
    CHECK(rep.max_rel <= kRtol);
  }
}

}  // namespace

TEST_CASE("grad: elementwise add/sub/mul/scale/relu") {
  Rng rng(21);
  auto a = testutil::rand_tensor<double>({2, 3, 4, 4}, rng, 0.2, 1.0);
  auto b = testutil::rand_tensor<double>({2, 3, 4, 4}, rng, -1.0, -0.2);
  check_op({a, b}, [&] { return sum(mul(add(a, b), sub(a, b))); });
  check_op({a}, [&] { return mean(relu(scale(a, 3.0))); });
}

TEST_CASE("grad: conv2d w.r.t. input, weight and bias") {
  Rng rng(22);
  auto in = testutil::rand_tensor<double>({1, 2, 6, 6}, rng);
  auto w = testutil::rand_tensor<double>({3, 2, 3, 3}, rng);
  auto b = testutil::rand_tensor<double>({3}, rng);
  check_op({in, w, b}, [&] { return sum(conv2d(in, w, b, 1, 1, 1, 1)); });
}

TEST_CASE("grad: conv2d strided variants") {
  Rng rng(23);
  auto in = testutil::rand_tensor<double>({1, 2, 8, 8}, rng);
  auto w2 = testutil::rand_tensor<double>({3, 2, 2, 2}, rng);
  auto b2 = testutil::rand_tensor<double>({3}, rng);
  check_op({in, w2, b2}, [&] { return sum(conv2d(in, w2, b2, 2, 2, 0, 0)); });
  auto w4 = testutil::rand_tensor<double>({4, 2, 4, 4}, rng);
  auto b4 = testutil::rand_tensor<double>({4}, rng);
  check_op({in, w4, b4}, [&] { return sum(conv2d(in, w4, b4, 4, 4, 0, 0)); });
  // a weighted (non-uniform) reduction to exercise mixed upstream gradients
  auto mask = testutil::rand_tensor<double>({1, 3, 8, 8}, rng, 0.5, 1.5);
  auto wp = testutil::rand_tensor<double>({3, 2, 3, 3}, rng);
  check_op({in, wp}, [&] { return sum(mul(conv2d(in, wp, DTensor(), 1, 1, 1, 1), mask)); });
}

TEST_CASE("grad: residual_block matches finite differences") {
  Rng rng(24);
  auto x = testutil::rand_tensor<double>({1, 4, 5, 5}, rng);
  auto w1 = testutil::rand_tensor<double>({4, 4, 3, 3}, rng, -0.4, 0.4);
  auto b1 = testutil::rand_tensor<double>({4}, rng, 0.1, 0.3);
  auto w2 = testutil::rand_tensor<double>({4, 4, 3, 3}, rng, -0.4, 0.4);
  auto b2 = testutil::rand_tensor<double>({4}, rng, 0.1, 0.3);
  check_op({x, w1, b1, w2, b2}, [&] { return sum(residual_block(x, w1, b1, w2, b2)); });
}

TEST_CASE("grad: pixel_shuffle and space_to_depth") {
  Rng rng(25);
  auto x = testutil::rand_tensor<double>({1, 8, 3, 3}, rng);
  auto mask = testutil::rand_tensor<double>({1, 2, 6, 6}, rng, 0.5, 1.5);
  check_op({x}, [&] { return sum(mul(pixel_shuffle(x, 2), mask)); });
  auto y = testutil::rand_tensor<double>({1, 2, 6, 6}, rng);
  auto mask2 = testutil::rand_tensor<double>({1, 8, 3, 3}, rng, 0.5, 1.5);
  check_op({y}, [&] { return sum(mul(space_to_depth(y, 2), mask2)); });
}

TEST_CASE("grad: bilinear_warp w.r.t. input and flow") {
  Rng rng(26);
  const int H = 6, W = 6;
  auto x = testutil::rand_tensor<double>({1, 2, H, W}, rng);
  // fractional offsets well inside cells, samples well inside the frame
  DTensor flow({1, 2, H, W});
  for (int64_t i = 0; i < flow.numel(); ++i)
    flow.data()[i] = (rng.uniform() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.2, 0.45);
  auto mask = testutil::rand_tensor<double>({1, 2, H, W}, rng, 0.5, 1.5);
  check_op({x, flow}, [&] { return sum(mul(bilinear_warp(x, flow), mask)); });
}

TEST_CASE("grad: bilinear_resize up and down") {
  Rng rng(27);
  auto x = testutil::rand_tensor<double>({1, 2, 4, 4}, rng);
  auto mask_up = testutil::rand_tensor<double>({1, 2, 8, 8}, rng, 0.5, 1.5);
  check_op({x}, [&] { return sum(mul(bilinear_resize(x, 8, 8), mask_up)); });
  auto y = testutil::rand_tensor<double>({1, 2, 8, 8}, rng);
  auto mask_dn = testutil::rand_tensor<double>({1, 2, 4, 4}, rng, 0.5, 1.5);
  check_op({y}, [&] { return sum(mul(bilinear_resize(y, 4, 4), mask_dn)); });
}

TEST_CASE("grad: gauss_down2 and block_mean") {
  Rng rng(28);
  auto x = testutil::rand_tensor<double>({1, 2, 8, 8}, rng);
  auto mask = testutil::rand_tensor<double>({1, 2, 4, 4}, rng, 0.5, 1.5);
  check_op({x}, [&] { return sum(mul(gauss_down2(x), mask)); });
  check_op({x}, [&] { return sum(mul(block_mean(x, 2), mask)); });
}

TEST_CASE("grad: concat_channels routes gradients to both inputs") {
  Rng rng(29);
  auto a = testutil::rand_tensor<double>({1, 2, 3, 3}, rng);
  auto b = testutil::rand_tensor<double>({1, 3, 3, 3}, rng);
  auto mask = testutil::rand_tensor<double>({1, 5, 3, 3}, rng, 0.5, 1.5);
  check_op({a, b}, [&] { return sum(mul(concat_channels<double>({a, b}), mask)); });
}

TEST_CASE("grad: l1 loss away from ties") {
  Rng rng(30);
  auto pred = testutil::rand_tensor<double>({1, 3, 4, 4}, rng, 0.5, 1.0);
  auto target = testutil::rand_tensor<double>({1, 3, 4, 4}, rng, -1.0, -0.5);
  check_op({pred}, [&] { return l1_loss(pred, target); });
}

TEST_CASE("grad: charbonnier and smoothness losses") {
  Rng rng(31);
  auto pred = testutil::rand_tensor<double>({1, 2, 5, 5}, rng);
  auto target = testutil::rand_tensor<double>({1, 2, 5, 5}, rng);
  check_op({pred, target}, [&] { return charbonnier_loss(pred, target, 1e-3); });
  auto flow = testutil::rand_tensor<double>({1, 2, 5, 5}, rng);
  check_op({flow}, [&] { return smoothness_loss(flow, 1e-3); });
}

TEST_CASE("grad: rgb_to_lab and cielab loss inside the unit cube") {
  Rng rng(32);
  auto pred = testutil::rand_tensor<double>({1, 3, 3, 3}, rng, 0.1, 0.9);
  auto target = testutil::rand_tensor<double>({1, 3, 3, 3}, rng, 0.1, 0.9);
  auto mask = testutil::rand_tensor<double>({1, 3, 3, 3}, rng, 0.5, 1.5);
  check_op({pred}, [&] { return sum(mul(rgb_to_lab(pred), mask)); });
  check_op({pred}, [&] { return cielab_loss(pred, target); });
}
