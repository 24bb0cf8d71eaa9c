#pragma once

#include <algorithm>
#include <cmath>

#include "hexburst/tensor.hpp"
#include "hexburst/threadpool.hpp"

namespace hexburst {

namespace detail {

// Output range [lo, hi) such that 0 <= o*stride + k - pad < extent.
inline void conv_range(int k, int pad, int stride, int extent, int out, int* lo, int* hi) {
  int a = pad - k;  // o*stride >= a
  *lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  int b = extent - 1 - k + pad;  // o*stride <= b
  *hi = b < 0 ? 0 : std::min(out, b / stride + 1);
  if (*hi < *lo) *hi = *lo;
}

}  // namespace detail

// 2-D cross-correlation, NCHW input, OIKhKw weight. Padded with zeros.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias,
                  int stride_h, int stride_w, int pad_h, int pad_w) {
  HEXB_CHECK(input.defined() && input.rank() == 4,
             "conv2d: input must be NCHW, got "
                 << (input.defined() ? shape_str(input.shape()) : std::string("<undefined>")));
  HEXB_CHECK(weight.rank() == 4, "conv2d: weight must be OIKhKw, got " << shape_str(weight.shape()));
  const int B = input.dim(0), IC = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int OC = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
  HEXB_CHECK(weight.dim(1) == IC, "conv2d: input channels " << IC << " != weight in-channels "
                                      << weight.dim(1) << " (input " << shape_str(input.shape())
                                      << ", weight " << shape_str(weight.shape()) << ")");
  HEXB_CHECK(stride_h > 0 && stride_w > 0, "conv2d: stride must be positive");
  HEXB_CHECK(pad_h >= 0 && pad_w >= 0, "conv2d: negative padding");
  HEXB_CHECK(KH <= H + 2 * pad_h && KW <= W + 2 * pad_w,
             "conv2d: kernel " << KH << "x" << KW << " exceeds padded input " << (H + 2 * pad_h)
                               << "x" << (W + 2 * pad_w));
  if (bias.defined()) {
    HEXB_CHECK(bias.rank() == 1 && bias.dim(0) == OC,
               "conv2d: bias shape " << shape_str(bias.shape()) << " != [" << OC << "]");
  }
  const int OH = (H + 2 * pad_h - KH) / stride_h + 1;
  const int OW = (W + 2 * pad_w - KW) / stride_w + 1;

  TensorT<T> out({B, OC, OH, OW});
  const T* in = input.data();
  const T* w = weight.data();
  const T* bi = bias.defined() ? bias.data() : nullptr;
  T* o = out.data();

  parallel_for(static_cast<int64_t>(B) * OC, [&](int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      const int b = static_cast<int>(t / OC), oc = static_cast<int>(t % OC);
      T* oplane = o + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
      const T bv = bi ? bi[oc] : T(0);
      std::fill(oplane, oplane + static_cast<int64_t>(OH) * OW, bv);
      for (int ic = 0; ic < IC; ++ic) {
        const T* iplane = in + (static_cast<int64_t>(b) * IC + ic) * H * W;
        for (int ky = 0; ky < KH; ++ky) {
          int oy_lo, oy_hi;
          detail::conv_range(ky, pad_h, stride_h, H, OH, &oy_lo, &oy_hi);
          for (int kx = 0; kx < KW; ++kx) {
            const T wv = w[((static_cast<int64_t>(oc) * IC + ic) * KH + ky) * KW + kx];
            if (wv == T(0)) continue;
            int ox_lo, ox_hi;
            detail::conv_range(kx, pad_w, stride_w, W, OW, &ox_lo, &ox_hi);
            for (int oy = oy_lo; oy < oy_hi; ++oy) {
              const int iy = oy * stride_h + ky - pad_h;
              const T* irow = iplane + static_cast<int64_t>(iy) * W;
              T* orow = oplane + static_cast<int64_t>(oy) * OW;
              if (stride_w == 1) {
                const T* ip = irow + kx - pad_w;
                for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * ip[ox];
              } else {
                for (int ox = ox_lo; ox < ox_hi; ++ox)
                  orow[ox] += wv * irow[ox * stride_w + kx - pad_w];
              }
            }
          }
        }
      }
    }
  });

  detail::maybe_record(
      out, input.requires_grad() || weight.requires_grad() || bias.requires_grad(),
      [is = input.s_, ws = weight.s_, bs = bias.defined() ? bias.s_ : nullptr, B, IC, H, W, OC, KH,
       KW, OH, OW, stride_h, stride_w, pad_h, pad_w](const std::vector<T>& g) {
        const T* gp = g.data();
        if (is->requires_grad) {
          auto& gin = detail::ensure_grad(is);
          T* gi = gin.data();
          const T* w = ws->data.data();
          parallel_for(static_cast<int64_t>(B) * IC, [&](int64_t t0, int64_t t1) {
            for (int64_t t = t0; t < t1; ++t) {
              const int b = static_cast<int>(t / IC), ic = static_cast<int>(t % IC);
              T* gplane = gi + (static_cast<int64_t>(b) * IC + ic) * H * W;
              for (int oc = 0; oc < OC; ++oc) {
                const T* goplane = gp + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
                for (int ky = 0; ky < KH; ++ky) {
                  int oy_lo, oy_hi;
                  detail::conv_range(ky, pad_h, stride_h, H, OH, &oy_lo, &oy_hi);
                  for (int kx = 0; kx < KW; ++kx) {
                    const T wv = w[((static_cast<int64_t>(oc) * IC + ic) * KH + ky) * KW + kx];
                    if (wv == T(0)) continue;
                    int ox_lo, ox_hi;
                    detail::conv_range(kx, pad_w, stride_w, W, OW, &ox_lo, &ox_hi);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                      const int iy = oy * stride_h + ky - pad_h;
                      T* grow = gplane + static_cast<int64_t>(iy) * W;
                      const T* gorow = goplane + static_cast<int64_t>(oy) * OW;
                      if (stride_w == 1) {
                        T* gpos = grow + kx - pad_w;
                        for (int ox = ox_lo; ox < ox_hi; ++ox) gpos[ox] += wv * gorow[ox];
                      } else {
                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                          grow[ox * stride_w + kx - pad_w] += wv * gorow[ox];
                      }
                    }
                  }
                }
              }
            }
          });
        }
        if (ws->requires_grad) {
          auto& gw = detail::ensure_grad(ws);
          T* gwp = gw.data();
          const T* in = is->data.data();
          parallel_for(OC, [&](int64_t t0, int64_t t1) {
            for (int64_t oc = t0; oc < t1; ++oc) {
              for (int ic = 0; ic < IC; ++ic) {
                for (int ky = 0; ky < KH; ++ky) {
                  int oy_lo, oy_hi;
                  detail::conv_range(ky, pad_h, stride_h, H, OH, &oy_lo, &oy_hi);
                  for (int kx = 0; kx < KW; ++kx) {
                    int ox_lo, ox_hi;
                    detail::conv_range(kx, pad_w, stride_w, W, OW, &ox_lo, &ox_hi);
                    double acc = 0.0;
                    for (int b = 0; b < B; ++b) {
                      const T* goplane = gp + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
                      const T* iplane = in + (static_cast<int64_t>(b) * IC + ic) * H * W;
                      for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const int iy = oy * stride_h + ky - pad_h;
                        const T* irow = iplane + static_cast<int64_t>(iy) * W;
                        const T* gorow = goplane + static_cast<int64_t>(oy) * OW;
                        if (stride_w == 1) {
                          const T* ip = irow + kx - pad_w;
                          for (int ox = ox_lo; ox < ox_hi; ++ox)
                            acc += static_cast<double>(gorow[ox]) * ip[ox];
                        } else {
                          for (int ox = ox_lo; ox < ox_hi; ++ox)
                            acc += static_cast<double>(gorow[ox]) * irow[ox * stride_w + kx - pad_w];
                        }
                      }
                    }
                    gwp[((oc * IC + ic) * KH + ky) * KW + kx] += static_cast<T>(acc);
                  }
                }
              }
            }
          });
        }
        if (bs && bs->requires_grad) {
          auto& gb = detail::ensure_grad(bs);
          for (int oc = 0; oc < OC; ++oc) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b) {
              const T* goplane = gp + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
              for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) acc += goplane[i];
            }
            gb[oc] += static_cast<T>(acc);
          }
        }
      });
  return out;
}

// x + conv2(relu(conv1(x))): 3x3 convs, stride 1, pad 1, channels preserved.
template <typename T>
TensorT<T> residual_block(const TensorT<T>& x, const TensorT<T>& w1, const TensorT<T>& b1,
                          const TensorT<T>& w2, const TensorT<T>& b2) {
  HEXB_CHECK(x.rank() == 4, "residual_block: input must be NCHW, got " << shape_str(x.shape()));
  const int C = x.dim(1);
  HEXB_CHECK(w1.rank() == 4 && w1.dim(1) == C && w1.dim(2) == 3 && w1.dim(3) == 3,
             "residual_block: conv1 weight " << shape_str(w1.shape()) << " incompatible with "
                                             << C << " channels");
  HEXB_CHECK(w2.rank() == 4 && w2.dim(0) == C && w2.dim(1) == w1.dim(0) && w2.dim(2) == 3 &&
                 w2.dim(3) == 3,
             "residual_block: conv2 weight " << shape_str(w2.shape())
                                             << " must map back to " << C << " channels");
  auto h = relu(conv2d(x, w1, b1, 1, 1, 1, 1));
  return add(x, conv2d(h, w2, b2, 1, 1, 1, 1));
}

// (N, r^2*C, H, W) -> (N, C, rH, rW). Channel c*r^2 + dy*r + dx lands at
// output channel c, sub-position (dy, dx).
template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r) {
  HEXB_CHECK(x.rank() == 4, "pixel_shuffle: input must be NCHW, got " << shape_str(x.shape()));
  HEXB_CHECK(r >= 1, "pixel_shuffle: r must be >= 1, got " << r);
  const int B = x.dim(0), C_in = x.dim(1), H = x.dim(2), W = x.dim(3);
  HEXB_CHECK(C_in % (r * r) == 0, "pixel_shuffle: channels " << C_in << " not divisible by r^2=" << r * r);
  const int C = C_in / (r * r);
  TensorT<T> out({B, C, H * r, W * r});
  const T* in = x.data();
  T* o = out.data();
  const int OHW = H * r * W * r;
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const T* ip = in + ((static_cast<int64_t>(b) * C_in + (c * r * r + dy * r + dx)) * H) * W;
          T* op = o + (static_cast<int64_t>(b) * C + c) * OHW;
          for (int y = 0; y < H; ++y)
            for (int xw = 0; xw < W; ++xw)
              op[(y * r + dy) * (W * r) + (xw * r + dx)] = ip[y * W + xw];
        }
      }
    }
  }
  detail::maybe_record(out, x.requires_grad(),
                       [xs = x.s_, B, C, C_in, H, W, r, OHW](const std::vector<T>& g) {
                         auto& gin = detail::ensure_grad(xs);
                         for (int b = 0; b < B; ++b)
                           for (int c = 0; c < C; ++c)
                             for (int dy = 0; dy < r; ++dy)
                               for (int dx = 0; dx < r; ++dx) {
                                 T* gp = gin.data() +
                                         ((static_cast<int64_t>(b) * C_in +
                                           (c * r * r + dy * r + dx)) *
                                          H) *
                                             W;
                                 const T* go = g.data() + (static_cast<int64_t>(b) * C + c) * OHW;
                                 for (int y = 0; y < H; ++y)
                                   for (int xw = 0; xw < W; ++xw)
                                     gp[y * W + xw] += go[(y * r + dy) * (W * r) + (xw * r + dx)];
                               }
                       });
  return out;
}

// Exact inverse of pixel_shuffle under the same channel ordering.
template <typename T>
TensorT<T> space_to_depth(const TensorT<T>& x, int r) {
  HEXB_CHECK(x.rank() == 4, "space_to_depth: input must be NCHW, got " << shape_str(x.shape()));
  HEXB_CHECK(r >= 1, "space_to_depth: r must be >= 1, got " << r);
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  HEXB_CHECK(H % r == 0 && W % r == 0,
             "space_to_depth: dims " << H << "x" << W << " not divisible by r=" << r);
  const int OH = H / r, OW = W / r;
  TensorT<T> out({B, C * r * r, OH, OW});
  const T* in = x.data();
  T* o = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          T* op = o + (static_cast<int64_t>(b) * C * r * r + (c * r * r + dy * r + dx)) * OH * OW;
          const T* ip = in + (static_cast<int64_t>(b) * C + c) * H * W;
          for (int y = 0; y < OH; ++y)
            for (int xw = 0; xw < OW; ++xw)
              op[y * OW + xw] = ip[(y * r + dy) * W + (xw * r + dx)];
        }
  detail::maybe_record(out, x.requires_grad(),
                       [xs = x.s_, B, C, H, W, r, OH, OW](const std::vector<T>& g) {
                         auto& gin = detail::ensure_grad(xs);
                         for (int b = 0; b < B; ++b)
                           for (int c = 0; c < C; ++c)
                             for (int dy = 0; dy < r; ++dy)
                               for (int dx = 0; dx < r; ++dx) {
                                 const T* go = g.data() + (static_cast<int64_t>(b) * C * r * r +
                                                           (c * r * r + dy * r + dx)) *
                                                              OH * OW;
                                 T* gp = gin.data() + (static_cast<int64_t>(b) * C + c) * H * W;
                                 for (int y = 0; y < OH; ++y)
                                   for (int xw = 0; xw < OW; ++xw)
                                     gp[(y * r + dy) * W + (xw * r + dx)] += go[y * OW + xw];
                               }
                       });
  return out;
}

// out(p) = bilinear sample of x at p + flow(p). Out-of-bounds coordinates are
// clamped (border replication); clamped coordinates get zero flow gradient.
template <typename T>
TensorT<T> bilinear_warp(const TensorT<T>& x, const TensorT<T>& flow) {
  HEXB_CHECK(x.rank() == 4, "bilinear_warp: input must be NCHW, got " << shape_str(x.shape()));
  HEXB_CHECK(flow.rank() == 4 && flow.dim(1) == 2,
             "bilinear_warp: flow must be (N,2,H,W), got " << shape_str(flow.shape()));
  HEXB_CHECK(flow.dim(0) == x.dim(0) && flow.dim(2) == x.dim(2) && flow.dim(3) == x.dim(3),
             "bilinear_warp: flow dims " << shape_str(flow.shape()) << " vs input "
                                         << shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<T> out(x.shape());
  const T* in = x.data();
  const T* fl = flow.data();
  T* o = out.data();

  parallel_for(static_cast<int64_t>(B) * H, [&](int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      const int b = static_cast<int>(t / H), y = static_cast<int>(t % H);
      const T* fx = fl + ((static_cast<int64_t>(b) * 2 + 0) * H + y) * W;
      const T* fy = fl + ((static_cast<int64_t>(b) * 2 + 1) * H + y) * W;
      for (int xw = 0; xw < W; ++xw) {
        double sx = std::clamp(static_cast<double>(xw) + fx[xw], 0.0, static_cast<double>(W - 1));
        double sy = std::clamp(static_cast<double>(y) + fy[xw], 0.0, static_cast<double>(H - 1));
        int x0 = static_cast<int>(std::floor(sx));
        int y0 = static_cast<int>(std::floor(sy));
        int x1 = std::min(x0 + 1, W - 1);
        int y1 = std::min(y0 + 1, H - 1);
        T wx = static_cast<T>(sx - x0), wy = static_cast<T>(sy - y0);
        for (int c = 0; c < C; ++c) {
          const T* ip = in + (static_cast<int64_t>(b) * C + c) * H * W;
          T v00 = ip[y0 * W + x0], v01 = ip[y0 * W + x1];
          T v10 = ip[y1 * W + x0], v11 = ip[y1 * W + x1];
          o[((static_cast<int64_t>(b) * C + c) * H + y) * W + xw] =
              (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        }
      }
    }
  });

  detail::maybe_record(
      out, x.requires_grad() || flow.requires_grad(),
      [xs = x.s_, fs = flow.s_, B, C, H, W](const std::vector<T>& g) {
        const T* in = xs->data.data();
        const T* fl = fs->data.data();
        const bool need_x = xs->requires_grad;
        const bool need_f = fs->requires_grad;
        T* gx = nullptr;
        T* gf = nullptr;
        if (need_x) gx = detail::ensure_grad(xs).data();
        if (need_f) gf = detail::ensure_grad(fs).data();
        // Scatter into x-grad overlaps across pixels; run serially.
        for (int b = 0; b < B; ++b) {
          for (int y = 0; y < H; ++y) {
            const T* fx = fl + ((static_cast<int64_t>(b) * 2 + 0) * H + y) * W;
            const T* fy = fl + ((static_cast<int64_t>(b) * 2 + 1) * H + y) * W;
            for (int xw = 0; xw < W; ++xw) {
              double rx = static_cast<double>(xw) + fx[xw];
              double ry = static_cast<double>(y) + fy[xw];
              bool cx = rx < 0.0 || rx > W - 1;
              bool cy = ry < 0.0 || ry > H - 1;
              double sx = std::clamp(rx, 0.0, static_cast<double>(W - 1));
              double sy = std::clamp(ry, 0.0, static_cast<double>(H - 1));
              int x0 = static_cast<int>(std::floor(sx));
              int y0 = static_cast<int>(std::floor(sy));
              int x1 = std::min(x0 + 1, W - 1);
              int y1 = std::min(y0 + 1, H - 1);
              T wx = static_cast<T>(sx - x0), wy = static_cast<T>(sy - y0);
              double acc_dx = 0.0, acc_dy = 0.0;
              for (int c = 0; c < C; ++c) {
                const int64_t plane = (static_cast<int64_t>(b) * C + c) * H * W;
                const T go = g[plane + static_cast<int64_t>(y) * W + xw];
                if (go == T(0)) continue;
                if (need_x) {
                  gx[plane + y0 * W + x0] += go * (1 - wy) * (1 - wx);
                  gx[plane + y0 * W + x1] += go * (1 - wy) * wx;
                  gx[plane + y1 * W + x0] += go * wy * (1 - wx);
                  gx[plane + y1 * W + x1] += go * wy * wx;
                }
                if (need_f) {
                  const T* ip = in + plane;
                  T v00 = ip[y0 * W + x0], v01 = ip[y0 * W + x1];
                  T v10 = ip[y1 * W + x0], v11 = ip[y1 * W + x1];
                  acc_dx += static_cast<double>(go) *
                            ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
                  acc_dy += static_cast<double>(go) *
                            ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
                }
              }
              if (need_f) {
                if (!cx) gf[((static_cast<int64_t>(b) * 2 + 0) * H + y) * W + xw] += static_cast<T>(acc_dx);
                if (!cy) gf[((static_cast<int64_t>(b) * 2 + 1) * H + y) * W + xw] += static_cast<T>(acc_dy);
              }
            }
          }
        }
      });
  return out;
}

// Bilinear resize to (out_h, out_w); half-pixel-center coordinate mapping.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int out_h, int out_w) {
  HEXB_CHECK(x.rank() == 4, "bilinear_resize: input must be NCHW, got " << shape_str(x.shape()));
  HEXB_CHECK(out_h > 0 && out_w > 0, "bilinear_resize: bad target " << out_h << "x" << out_w);
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h == H && out_w == W) {
    // Identity mapping; keep gradients flowing with a cheap pass-through.
    return scale(x, T(1));
  }
  TensorT<T> out({B, C, out_h, out_w});
  const double ry = static_cast<double>(H) / out_h;
  const double rx = static_cast<double>(W) / out_w;
  const T* in = x.data();
  T* o = out.data();
  parallel_for(static_cast<int64_t>(B) * C, [&](int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      const T* ip = in + t * H * W;
      T* op = o + t * out_h * out_w;
      for (int y = 0; y < out_h; ++y) {
        double sy = std::clamp((y + 0.5) * ry - 0.5, 0.0, static_cast<double>(H - 1));
        int y0 = static_cast<int>(std::floor(sy));
        int y1 = std::min(y0 + 1, H - 1);
        T wy = static_cast<T>(sy - y0);
        for (int xw = 0; xw < out_w; ++xw) {
          double sx = std::clamp((xw + 0.5) * rx - 0.5, 0.0, static_cast<double>(W - 1));
          int x0 = static_cast<int>(std::floor(sx));
          int x1 = std::min(x0 + 1, W - 1);
          T wx = static_cast<T>(sx - x0);
          op[y * out_w + xw] = (1 - wy) * ((1 - wx) * ip[y0 * W + x0] + wx * ip[y0 * W + x1]) +
                               wy * ((1 - wx) * ip[y1 * W + x0] + wx * ip[y1 * W + x1]);
        }
      }
    }
  });
  detail::maybe_record(out, x.requires_grad(),
                       [xs = x.s_, B, C, H, W, out_h, out_w, ry, rx](const std::vector<T>& g) {
                         auto& gin = detail::ensure_grad(xs);
                         T* gi = gin.data();
                         for (int64_t t = 0; t < static_cast<int64_t>(B) * C; ++t) {
                           T* gp = gi + t * H * W;
                           const T* go = g.data() + t * out_h * out_w;
                           for (int y = 0; y < out_h; ++y) {
                             double sy = std::clamp((y + 0.5) * ry - 0.5, 0.0,
                                                    static_cast<double>(H - 1));
                             int y0 = static_cast<int>(std::floor(sy));
                             int y1 = std::min(y0 + 1, H - 1);
                             T wy = static_cast<T>(sy - y0);
                             for (int xw = 0; xw < out_w; ++xw) {
                               double sx = std::clamp((xw + 0.5) * rx - 0.5, 0.0,
                                                      static_cast<double>(W - 1));
                               int x0 = static_cast<int>(std::floor(sx));
                               int x1 = std::min(x0 + 1, W - 1);
                               T wx = static_cast<T>(sx - x0);
                               const T gv = go[y * out_w + xw];
                               gp[y0 * W + x0] += gv * (1 - wy) * (1 - wx);
                               gp[y0 * W + x1] += gv * (1 - wy) * wx;
                               gp[y1 * W + x0] += gv * wy * (1 - wx);
                               gp[y1 * W + x1] += gv * wy * wx;
                             }
                           }
                         }
                       });
  return out;
}

// Gaussian pyramid reduction: 5-tap binomial blur (replicate border) + 2x
// subsampling.
template <typename T>
TensorT<T> gauss_down2(const TensorT<T>& x) {
  HEXB_CHECK(x.rank() == 4, "gauss_down2: input must be NCHW, got " << shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  HEXB_CHECK(H % 2 == 0 && W % 2 == 0, "gauss_down2: dims " << H << "x" << W << " must be even");
  static const T k[5] = {T(1) / 16, T(4) / 16, T(6) / 16, T(4) / 16, T(1) / 16};
  const int OH = H / 2, OW = W / 2;
  TensorT<T> out({B, C, OH, OW});
  const T* in = x.data();
  T* o = out.data();
  parallel_for(static_cast<int64_t>(B) * C, [&](int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      const T* ip = in + t * H * W;
      T* op = o + t * OH * OW;
      for (int y = 0; y < OH; ++y) {
        for (int xw = 0; xw < OW; ++xw) {
          double acc = 0.0;
          for (int j = 0; j < 5; ++j) {
            int iy = std::clamp(2 * y + j - 2, 0, H - 1);
            double row = 0.0;
            for (int i = 0; i < 5; ++i) {
              int ix = std::clamp(2 * xw + i - 2, 0, W - 1);
              row += static_cast<double>(k[i]) * ip[iy * W + ix];
            }
            acc += static_cast<double>(k[j]) * row;
          }
          op[y * OW + xw] = static_cast<T>(acc);
        }
      }
    }
  });
  detail::maybe_record(out, x.requires_grad(),
                       [xs = x.s_, B, C, H, W, OH, OW](const std::vector<T>& g) {
                         static const T k[5] = {T(1) / 16, T(4) / 16, T(6) / 16, T(4) / 16,
                                                T(1) / 16};
                         auto& gin = detail::ensure_grad(xs);
                         for (int64_t t = 0; t < static_cast<int64_t>(B) * C; ++t) {
                           T* gp = gin.data() + t * H * W;
                           const T* go = g.data() + t * OH * OW;
                           for (int y = 0; y < OH; ++y)
                             for (int xw = 0; xw < OW; ++xw) {
                               const T gv = go[y * OW + xw];
                               if (gv == T(0)) continue;
                               for (int j = 0; j < 5; ++j) {
                                 int iy = std::clamp(2 * y + j - 2, 0, H - 1);
                                 for (int i = 0; i < 5; ++i) {
                                   int ix = std::clamp(2 * xw + i - 2, 0, W - 1);
                                   gp[iy * W + ix] += gv * k[j] * k[i];
                                 }
                               }
                             }
                         }
                       });
  return out;
}

// Mean over aligned bs x bs blocks.
template <typename T>
TensorT<T> block_mean(const TensorT<T>& x, int bs) {
  HEXB_CHECK(x.rank() == 4, "block_mean: input must be NCHW, got " << shape_str(x.shape()));
  HEXB_CHECK(bs >= 1, "block_mean: block size must be >= 1");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  HEXB_CHECK(H % bs == 0 && W % bs == 0,
             "block_mean: dims " << H << "x" << W << " not divisible by " << bs);
  const int OH = H / bs, OW = W / bs;
  TensorT<T> out({B, C, OH, OW});
  const T* in = x.data();
  T* o = out.data();
  const T inv = T(1) / static_cast<T>(bs * bs);
  for (int64_t t = 0; t < static_cast<int64_t>(B) * C; ++t) {
    const T* ip = in + t * H * W;
    T* op = o + t * OH * OW;
    for (int y = 0; y < OH; ++y)
      for (int xw = 0; xw < OW; ++xw) {
        double acc = 0.0;
        for (int j = 0; j < bs; ++j)
          for (int i = 0; i < bs; ++i) acc += ip[(y * bs + j) * W + (xw * bs + i)];
        op[y * OW + xw] = static_cast<T>(acc) * inv;
      }
  }
  detail::maybe_record(out, x.requires_grad(),
                       [xs = x.s_, B, C, H, W, bs, OH, OW, inv](const std::vector<T>& g) {
                         auto& gin = detail::ensure_grad(xs);
                         for (int64_t t = 0; t < static_cast<int64_t>(B) * C; ++t) {
                           T* gp = gin.data() + t * H * W;
                           const T* go = g.data() + t * OH * OW;
                           for (int y = 0; y < OH; ++y)
                             for (int xw = 0; xw < OW; ++xw) {
                               const T gv = go[y * OW + xw] * inv;
                               for (int j = 0; j < bs; ++j)
                                 for (int i = 0; i < bs; ++i)
                                   gp[(y * bs + j) * W + (xw * bs + i)] += gv;
                             }
                         }
                       });
  return out;
}

// Concatenation along the channel dimension.
template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& xs) {
  HEXB_CHECK(!xs.empty(), "concat_channels: empty input list");
  const int B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int C = 0;
  bool any_grad = false;
  for (const auto& x : xs) {
    HEXB_CHECK(x.rank() == 4 && x.dim(0) == B && x.dim(2) == H && x.dim(3) == W,
               "concat_channels: incompatible shape " << shape_str(x.shape()) << " vs "
                                                      << shape_str(xs[0].shape()));
    C += x.dim(1);
    any_grad = any_grad || x.requires_grad();
  }
  TensorT<T> out({B, C, H, W});
  T* o = out.data();
  const int64_t hw = static_cast<int64_t>(H) * W;
  int c_off = 0;
  for (const auto& x : xs) {
    const int xc = x.dim(1);
    for (int b = 0; b < B; ++b)
      std::copy(x.data() + static_cast<int64_t>(b) * xc * hw,
                x.data() + static_cast<int64_t>(b + 1) * xc * hw,
                o + (static_cast<int64_t>(b) * C + c_off) * hw);
    c_off += xc;
  }
  std::vector<std::shared_ptr<detail::Storage<T>>> srcs;
  for (const auto& x : xs) srcs.push_back(x.s_);
  detail::maybe_record(out, any_grad, [srcs, B, C, hw](const std::vector<T>& g) {
    int c_off = 0;
    for (const auto& s : srcs) {
      const int xc = static_cast<int>(s->shape[1]);
      if (s->requires_grad) {
        auto& gi = detail::ensure_grad(s);
        for (int b = 0; b < B; ++b) {
          const T* gp = g.data() + (static_cast<int64_t>(b) * C + c_off) * hw;
          T* gd = gi.data() + static_cast<int64_t>(b) * xc * hw;
          for (int64_t i = 0; i < xc * hw; ++i) gd[i] += gp[i];
        }
      }
      c_off += xc;
    }
  });
  return out;
}

}  // namespace hexburst
