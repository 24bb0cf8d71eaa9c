#include "hexburst/cfa.hpp"

#include <algorithm>

#include "hexburst/threadpool.hpp"

namespace hexburst {

HexadecaRaw make_hexadeca_raw(Tensor values, CfaLayout layout, float white_level) {
  HEXB_CHECK(values.rank() == 2, "hexadeca raw: expected (H,W), got " << shape_str(values.shape()));
  const int H = values.dim(0), W = values.dim(1);
  const int sc = layout.super_cell();
  HEXB_CHECK(H % sc == 0 && W % sc == 0,
             "hexadeca raw: dims " << H << "x" << W << " not divisible by super-cell " << sc);
  HexadecaRaw raw;
  raw.values = std::move(values);
  raw.layout = layout;
  raw.white_level = white_level;
  return raw;
}

Tensor mosaic_hexadeca(const Tensor& rgb, const CfaLayout& layout) {
  HEXB_CHECK(rgb.rank() == 3 && rgb.dim(0) == 3,
             "mosaic: expected (3,H,W), got " << shape_str(rgb.shape()));
  const int H = rgb.dim(1), W = rgb.dim(2);
  const int sc = layout.super_cell();
  HEXB_CHECK(H % sc == 0 && W % sc == 0,
             "mosaic: dims " << H << "x" << W << " not divisible by super-cell " << sc);
  Tensor raw({H, W});
  const float* p = rgb.data();
  float* o = raw.data();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      o[y * W + x] = p[(static_cast<int64_t>(layout.color_at(y, x)) * H + y) * W + x];
  return raw;
}

namespace {

// Separable tent-kernel normalized convolution of (value, mask) planes.
// Half-width = super-cell size guarantees every pixel sees samples of every
// color.
void tent_filter(const std::vector<float>& val, const std::vector<float>& mask, int H, int W,
                 int radius, std::vector<float>* out) {
  std::vector<float> k(2 * radius - 1);
  for (int d = -(radius - 1); d <= radius - 1; ++d)
    k[d + radius - 1] = 1.0f - static_cast<float>(std::abs(d)) / radius;

  std::vector<float> vrow(static_cast<size_t>(H) * W), mrow(static_cast<size_t>(H) * W);
  // horizontal pass (zero beyond borders; the mask normalizes)
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double va = 0.0, ma = 0.0;
      const int lo = std::max(0, x - (radius - 1)), hi = std::min(W - 1, x + radius - 1);
      for (int i = lo; i <= hi; ++i) {
        const float w = k[i - x + radius - 1];
        va += w * val[y * W + i];
        ma += w * mask[y * W + i];
      }
      vrow[y * W + x] = static_cast<float>(va);
      mrow[y * W + x] = static_cast<float>(ma);
    }
  // vertical pass + normalize
  out->assign(static_cast<size_t>(H) * W, 0.0f);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double va = 0.0, ma = 0.0;
      const int lo = std::max(0, y - (radius - 1)), hi = std::min(H - 1, y + radius - 1);
      for (int j = lo; j <= hi; ++j) {
        const float w = k[j - y + radius - 1];
        va += w * vrow[j * W + x];
        ma += w * mrow[j * W + x];
      }
      (*out)[y * W + x] = ma > 0.0 ? static_cast<float>(va / ma) : 0.0f;
    }
}

}  // namespace

Tensor demosaic_bilinear_hexadeca(const Tensor& raw, const CfaLayout& layout) {
  HEXB_CHECK(raw.rank() == 2, "demosaic: expected (H,W), got " << shape_str(raw.shape()));
  const int H = raw.dim(0), W = raw.dim(1);
  const int sc = layout.super_cell();
  HEXB_CHECK(H % sc == 0 && W % sc == 0,
             "demosaic: dims " << H << "x" << W << " not divisible by super-cell " << sc);
  Tensor rgb({3, H, W});
  parallel_for(3, [&](int64_t c0, int64_t c1) {
    for (int64_t c = c0; c < c1; ++c) {
      std::vector<float> val(static_cast<size_t>(H) * W, 0.0f);
      std::vector<float> mask(static_cast<size_t>(H) * W, 0.0f);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (layout.color_at(y, x) == c) {
            val[y * W + x] = raw.data()[y * W + x];
            mask[y * W + x] = 1.0f;
          }
      std::vector<float> filled;
      tent_filter(val, mask, H, W, sc, &filled);
      float* out = rgb.data() + c * static_cast<int64_t>(H) * W;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          out[y * W + x] = layout.color_at(y, x) == c ? raw.data()[y * W + x] : filled[y * W + x];
    }
  });
  return rgb;
}

}  // namespace hexburst
