#pragma once

#include <array>

#include "hexburst/tensor.hpp"

namespace hexburst {

// Hexadeca-Bayer layout: 4x4 single-color blocks arranged in an RGGB macro
// pattern over each 8x8 super-cell. The macro assignment is a parameter so
// tests can permute it; the default mirrors canonical Bayer RGGB.
struct CfaLayout {
  int block = 4;
  // macro[by][bx], 0=R 1=G 2=B for the 2x2 block grid
  std::array<std::array<int, 2>, 2> macro = {{{0, 1}, {1, 2}}};

  int color_at(int y, int x) const {
    return macro[(y / block) % 2][(x / block) % 2];
  }
  int super_cell() const { return 2 * block; }
};

// Single-channel mosaiced sensor frame (values in [0, white_level]).
struct HexadecaRaw {
  Tensor values;  // (H, W)
  CfaLayout layout;
  float white_level = 1.0f;
  // noise parameters used to synthesize this frame (0 when unknown)
  float shot = 0.0f;
  float read = 0.0f;

  int height() const { return values.dim(0); }
  int width() const { return values.dim(1); }
};

// Validates dims (divisible by the 8x8 super-cell) and value range.
HexadecaRaw make_hexadeca_raw(Tensor values, CfaLayout layout = {}, float white_level = 1.0f);

// raw(y,x) = rgb[color_at(y,x)](y,x)
Tensor mosaic_hexadeca(const Tensor& rgb, const CfaLayout& layout = {});

// Distance-weighted (tent kernel) interpolation per channel from that
// channel's block-sample sites; exact at the sites themselves.
Tensor demosaic_bilinear_hexadeca(const Tensor& raw, const CfaLayout& layout = {});

inline Tensor demosaic_bilinear_hexadeca(const HexadecaRaw& raw) {
  return demosaic_bilinear_hexadeca(raw.values, raw.layout);
}

}  // namespace hexburst
