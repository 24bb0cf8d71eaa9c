#pragma once

#include "hexburst/tensor.hpp"

namespace hexburst {

// Mean absolute difference. Subgradient at zero is taken as 0.
template <typename T>
TensorT<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  check_same_shape(pred, target, "l1_loss");
  const int64_t n = pred.numel();
  double acc = 0.0;
  const T* pa = pred.data();
  const T* pb = target.data();
  for (int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(pa[i]) - pb[i]);
  TensorT<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
  detail::maybe_record(out, pred.requires_grad() || target.requires_grad(),
                       [as = pred.s_, bs = target.s_, n](const std::vector<T>& g) {
                         const T w = g[0] / static_cast<T>(n);
                         for (int64_t i = 0; i < n; ++i) {
                           const T d = as->data[i] - bs->data[i];
                           const T s = d > T(0) ? w : (d < T(0) ? -w : T(0));
                           if (as->requires_grad) detail::ensure_grad(as)[i] += s;
                           if (bs->requires_grad) detail::ensure_grad(bs)[i] -= s;
                         }
                       });
  return out;
}

// Mean sqrt((a-b)^2 + eps^2): a smooth L1 used for photometric terms.
template <typename T>
TensorT<T> charbonnier_loss(const TensorT<T>& pred, const TensorT<T>& target, T eps) {
  check_same_shape(pred, target, "charbonnier_loss");
  const int64_t n = pred.numel();
  double acc = 0.0;
  const T* pa = pred.data();
  const T* pb = target.data();
  const double e2 = static_cast<double>(eps) * eps;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += std::sqrt(d * d + e2);
  }
  TensorT<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
  detail::maybe_record(out, pred.requires_grad() || target.requires_grad(),
                       [as = pred.s_, bs = target.s_, n, e2](const std::vector<T>& g) {
                         const double w = static_cast<double>(g[0]) / static_cast<double>(n);
                         for (int64_t i = 0; i < n; ++i) {
                           const double d = static_cast<double>(as->data[i]) - bs->data[i];
                           const T s = static_cast<T>(w * d / std::sqrt(d * d + e2));
                           if (as->requires_grad) detail::ensure_grad(as)[i] += s;
                           if (bs->requires_grad) detail::ensure_grad(bs)[i] -= s;
                         }
                       });
  return out;
}

// First-order smoothness: mean Charbonnier norm of horizontal and vertical
// neighbor differences over all channels.
template <typename T>
TensorT<T> smoothness_loss(const TensorT<T>& x, T eps) {
  HEXB_CHECK(x.rank() == 4, "smoothness_loss: input must be NCHW, got " << shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double e2 = static_cast<double>(eps) * eps;
  const T* p = x.data();
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t t = 0; t < static_cast<int64_t>(B) * C; ++t) {
    const T* ip = p + t * H * W;
    for (int y = 0; y < H; ++y)
      for (int xw = 0; xw < W; ++xw) {
        if (xw + 1 < W) {
          const double d = static_cast<double>(ip[y * W + xw + 1]) - ip[y * W + xw];
          acc += std::sqrt(d * d + e2);
          ++count;
        }
        if (y + 1 < H) {
          const double d = static_cast<double>(ip[(y + 1) * W + xw]) - ip[y * W + xw];
          acc += std::sqrt(d * d + e2);
          ++count;
        }
      }
  }
  TensorT<T> out({1}, static_cast<T>(count ? acc / static_cast<double>(count) : 0.0));
  detail::maybe_record(out, x.requires_grad(),
                       [xs = x.s_, B, C, H, W, e2, count](const std::vector<T>& g) {
                         if (!count) return;
                         auto& gi = detail::ensure_grad(xs);
                         const double w = static_cast<double>(g[0]) / static_cast<double>(count);
                         for (int64_t t = 0; t < static_cast<int64_t>(B) * C; ++t) {
                           const T* ip = xs->data.data() + t * H * W;
                           T* gp = gi.data() + t * H * W;
                           for (int y = 0; y < H; ++y)
                             for (int xw = 0; xw < W; ++xw) {
                               if (xw + 1 < W) {
                                 const double d =
                                     static_cast<double>(ip[y * W + xw + 1]) - ip[y * W + xw];
                                 const T s = static_cast<T>(w * d / std::sqrt(d * d + e2));
                                 gp[y * W + xw + 1] += s;
                                 gp[y * W + xw] -= s;
                               }
                               if (y + 1 < H) {
                                 const double d =
                                     static_cast<double>(ip[(y + 1) * W + xw]) - ip[y * W + xw];
                                 const T s = static_cast<T>(w * d / std::sqrt(d * d + e2));
                                 gp[(y + 1) * W + xw] += s;
                                 gp[y * W + xw] -= s;
                               }
                             }
                         }
                       });
  return out;
}

namespace detail {

// sRGB primaries, D65 white. Rows are X, Y, Z.
constexpr double kRgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                    {0.2126729, 0.7151522, 0.0721750},
                                    {0.0193339, 0.1191920, 0.9503041}};
constexpr double kWhite[3] = {0.95047, 1.0, 1.08883};
constexpr double kLabDelta = 6.0 / 29.0;

inline double lab_f(double t) {
  const double d3 = kLabDelta * kLabDelta * kLabDelta;
  return t > d3 ? std::cbrt(t) : t / (3.0 * kLabDelta * kLabDelta) + 4.0 / 29.0;
}

inline double lab_f_prime(double t) {
  const double d3 = kLabDelta * kLabDelta * kLabDelta;
  return t > d3 ? std::cbrt(1.0 / (t * t)) / 3.0 : 1.0 / (3.0 * kLabDelta * kLabDelta);
}

}  // namespace detail

// Linear RGB in [0,1] -> CIELAB (inputs clamped first; clamped entries get
// zero gradient). Shape (N,3,H,W) -> (N,3,H,W) with channels L*, a*, b*.
template <typename T>
TensorT<T> rgb_to_lab(const TensorT<T>& rgb) {
  HEXB_CHECK(rgb.rank() == 4 && rgb.dim(1) == 3,
             "rgb_to_lab: input must be (N,3,H,W), got " << shape_str(rgb.shape()));
  const int B = rgb.dim(0), H = rgb.dim(2), W = rgb.dim(3);
  const int64_t hw = static_cast<int64_t>(H) * W;
  TensorT<T> out(rgb.shape());
  const T* in = rgb.data();
  T* o = out.data();
  for (int b = 0; b < B; ++b) {
    const T* r = in + (static_cast<int64_t>(b) * 3 + 0) * hw;
    const T* g = in + (static_cast<int64_t>(b) * 3 + 1) * hw;
    const T* bl = in + (static_cast<int64_t>(b) * 3 + 2) * hw;
    T* oL = o + (static_cast<int64_t>(b) * 3 + 0) * hw;
    T* oa = o + (static_cast<int64_t>(b) * 3 + 1) * hw;
    T* ob = o + (static_cast<int64_t>(b) * 3 + 2) * hw;
    for (int64_t i = 0; i < hw; ++i) {
      const double c[3] = {std::clamp(static_cast<double>(r[i]), 0.0, 1.0),
                           std::clamp(static_cast<double>(g[i]), 0.0, 1.0),
                           std::clamp(static_cast<double>(bl[i]), 0.0, 1.0)};
      double f[3];
      for (int k = 0; k < 3; ++k) {
        const double t = (detail::kRgbToXyz[k][0] * c[0] + detail::kRgbToXyz[k][1] * c[1] +
                          detail::kRgbToXyz[k][2] * c[2]) /
                         detail::kWhite[k];
        f[k] = detail::lab_f(t);
      }
      oL[i] = static_cast<T>(116.0 * f[1] - 16.0);
      oa[i] = static_cast<T>(500.0 * (f[0] - f[1]));
      ob[i] = static_cast<T>(200.0 * (f[1] - f[2]));
    }
  }
  detail::maybe_record(out, rgb.requires_grad(), [rs = rgb.s_, B, hw](const std::vector<T>& g) {
    auto& gi = detail::ensure_grad(rs);
    for (int b = 0; b < B; ++b) {
      const T* in[3];
      T* gin[3];
      const T* go[3];
      for (int k = 0; k < 3; ++k) {
        in[k] = rs->data.data() + (static_cast<int64_t>(b) * 3 + k) * hw;
        gin[k] = gi.data() + (static_cast<int64_t>(b) * 3 + k) * hw;
        go[k] = g.data() + (static_cast<int64_t>(b) * 3 + k) * hw;
      }
      for (int64_t i = 0; i < hw; ++i) {
        double c[3], mask[3];
        for (int k = 0; k < 3; ++k) {
          const double v = static_cast<double>(in[k][i]);
          c[k] = std::clamp(v, 0.0, 1.0);
          mask[k] = (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0;
        }
        double fp[3];
        for (int k = 0; k < 3; ++k) {
          const double t = (detail::kRgbToXyz[k][0] * c[0] + detail::kRgbToXyz[k][1] * c[1] +
                            detail::kRgbToXyz[k][2] * c[2]) /
                           detail::kWhite[k];
          fp[k] = detail::lab_f_prime(t);
        }
        const double gL = go[0][i], ga = go[1][i], gb = go[2][i];
        const double df[3] = {500.0 * ga, 116.0 * gL - 500.0 * ga + 200.0 * gb, -200.0 * gb};
        for (int j = 0; j < 3; ++j) {
          double acc = 0.0;
          for (int k = 0; k < 3; ++k)
            acc += df[k] * fp[k] * detail::kRgbToXyz[k][j] / detail::kWhite[k];
          gin[j][i] += static_cast<T>(acc * mask[j]);
        }
      }
    }
  });
  return out;
}

// Mean absolute difference in CIELAB.
template <typename T>
TensorT<T> cielab_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  check_same_shape(pred, target, "cielab_loss");
  return l1_loss(rgb_to_lab(pred), rgb_to_lab(target));
}

}  // namespace hexburst
