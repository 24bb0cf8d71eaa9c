#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hexburst/losses.hpp"
#include "testutil.hpp"

using namespace hexburst;

namespace {

// Independent scalar-path reference: one pixel at a time, straight from the
// CIE definitions. Deliberately separate from the library implementation.
void lab_ref(double r, double g, double b, double* L, double* a, double* bb) {
  r = std::clamp(r, 0.0, 1.0);
  g = std::clamp(g, 0.0, 1.0);
  b = std::clamp(b, 0.0, 1.0);
  const double X = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  const double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double Z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) {
    return t > std::pow(6.0 / 29.0, 3) ? std::cbrt(t)
                                       : t / (3.0 * std::pow(6.0 / 29.0, 2)) + 4.0 / 29.0;
  };
  *L = 116.0 * f(Y) - 16.0;
  *a = 500.0 * (f(X) - f(Y));
  *bb = 200.0 * (f(Y) - f(Z));
}

}  // namespace

TEST_CASE("l1_loss closed forms") {
  Tensor a({1, 3, 4, 4}, 0.25f);
  CHECK(l1_loss(a, a).item() == 0.0f);
  Tensor b({1, 3, 4, 4}, 0.75f);
  CHECK(l1_loss(b, a).item() == doctest::Approx(0.5f));
  CHECK(l1_loss(a, b).item() == doctest::Approx(0.5f));  // symmetric
  CHECK_THROWS_AS(l1_loss(a, Tensor({1, 3, 4, 5})), std::invalid_argument);
}

TEST_CASE("rgb_to_lab anchors: white, black, neutral grays") {
  Tensor white({1, 3, 1, 1}, 1.0f);
  auto lab_w = rgb_to_lab(white);
  CHECK(lab_w.data()[0] == doctest::Approx(100.0).epsilon(1e-3));
  CHECK(std::abs(lab_w.data()[1]) < 1e-3);
  CHECK(std::abs(lab_w.data()[2]) < 1e-3);

  Tensor black({1, 3, 1, 1}, 0.0f);
  auto lab_b = rgb_to_lab(black);
  CHECK(std::abs(lab_b.data()[0]) < 1e-3);
  CHECK(std::abs(lab_b.data()[1]) < 1e-3);
  CHECK(std::abs(lab_b.data()[2]) < 1e-3);

  double prev_L = -1.0;
  for (double g : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    Tensor gray({1, 3, 1, 1}, static_cast<float>(g));
    auto lab = rgb_to_lab(gray);
    CHECK(lab.data()[1] == doctest::Approx(0.0).epsilon(1e-4));  // neutral axis
    CHECK(lab.data()[2] == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(lab.data()[0] > prev_L);  // monotone lightness
    prev_L = lab.data()[0];
  }
}

TEST_CASE("cielab_loss: zero at equality, neutral pair reduces to |dL|") {
  Rng rng(80);
  auto x = testutil::rand_tensor<float>({1, 3, 4, 4}, rng, 0.0, 1.0);
  CHECK(cielab_loss(x, x).item() == 0.0f);

  Tensor g1({1, 3, 2, 2}, 0.3f), g2({1, 3, 2, 2}, 0.6f);
  double L1, L2, a, b;
  lab_ref(0.3, 0.3, 0.3, &L1, &a, &b);
  lab_ref(0.6, 0.6, 0.6, &L2, &a, &b);
  // a* and b* contribute nothing on the neutral axis; mean over 3 channels
  CHECK(cielab_loss(g2, g1).item() == doctest::Approx(std::abs(L2 - L1) / 3.0).epsilon(1e-4));
}

TEST_CASE("cielab_loss matches the independent per-pixel oracle") {
  Rng rng(81);
  auto pred = testutil::rand_tensor<float>({1, 3, 6, 5}, rng, 0.0, 1.0);
  auto target = testutil::rand_tensor<float>({1, 3, 6, 5}, rng, 0.0, 1.0);
  const int hw = 30;
  double acc = 0.0;
  for (int i = 0; i < hw; ++i) {
    double Lp, ap, bp, Lt, at, bt;
    lab_ref(pred.data()[i], pred.data()[hw + i], pred.data()[2 * hw + i], &Lp, &ap, &bp);
    lab_ref(target.data()[i], target.data()[hw + i], target.data()[2 * hw + i], &Lt, &at, &bt);
    acc += std::abs(Lp - Lt) + std::abs(ap - at) + std::abs(bp - bt);
  }
  const double expected = acc / (3.0 * hw);
  CHECK(cielab_loss(pred, target).item() == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("losses are non-negative and positive off equality") {
  Rng rng(82);
  auto x = testutil::rand_tensor<float>({1, 3, 4, 4}, rng, 0.1, 0.9);
  auto y = testutil::rand_tensor<float>({1, 3, 4, 4}, rng, 0.1, 0.9);
  CHECK(l1_loss(x, y).item() > 0.0f);
  CHECK(cielab_loss(x, y).item() > 0.0f);
  CHECK(charbonnier_loss(x, y, 1e-3f).item() > 0.0f);
}
