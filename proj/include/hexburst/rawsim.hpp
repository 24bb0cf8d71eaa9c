#pragma once

#include <array>
#include <string>
#include <vector>

#include "hexburst/cfa.hpp"
#include "hexburst/common.hpp"
#include "hexburst/tensor.hpp"

namespace hexburst {

// Burst synthesis parameters. Noise gains are sampled log-uniform per burst
// (shared across its frames); a zero-width range at 0 disables that stage.
struct SynthConfig {
  int frames = 4;          // total frames, index 0 = reference
  double max_shift = 16.0; // raw pixels, translation per non-reference frame
  double sigma_min = 0.2, sigma_max = 2.0;
  double shot_min = 1e-3, shot_max = 1e-2;
  double read_min = 1e-6, read_max = 1e-4;
  int sr_scale = 2;
  // inverse white balance / brightness applied by the un-processing stage;
  // identity by default
  double wb_red_min = 1.0, wb_red_max = 1.0;
  double wb_blue_min = 1.0, wb_blue_max = 1.0;
  double bright_min = 1.0, bright_max = 1.0;
  uint64_t seed = 0;
  // dataset-level: center-crop longest side to at most this (0 = no cap)
  int max_dim = 0;

  void validate() const;
};

// A second synthetic domain with blur/noise ranges disjoint from cfg's; used
// as the stand-in for real captures during distillation.
SynthConfig domain_b_config(SynthConfig cfg);

struct BurstSample {
  std::vector<HexadecaRaw> frames;               // index 0 = reference
  Tensor gt;                                     // (3, sr*H, sr*W) linear RGB
  std::vector<std::array<double, 2>> shifts;     // (dx, dy) raw px, [0] = (0,0)
  double sigma = 0.0, shot = 0.0, read = 0.0;
  double wb_red = 1.0, wb_blue = 1.0, brightness = 1.0;
  uint64_t seed = 0;
};

// Inverse white balance + brightness, clipped to [0,1].
Tensor unprocess(const Tensor& clean_rgb, const std::array<double, 3>& gains, double brightness);

// Plain raster helpers (single image, no autograd).
Tensor gaussian_blur(const Tensor& img, double sigma);
Tensor translate_image(const Tensor& img, double dx, double dy);  // content moves by +(dx,dy)
Tensor box_downscale(const Tensor& img, int factor);
Tensor bicubic_resize_image(const Tensor& img, int out_h, int out_w);

// Renders one burst; a pure function of (gt, cfg, seed).
BurstSample synthesize_burst(const Tensor& gt_rgb, const SynthConfig& cfg, uint64_t seed);

// Per-image burst k uses seed cfg.seed + k. Writes FTR rasters plus
// manifest.json (an array of item records; unreadable inputs are listed as
// skip records). Returns the number of bursts written.
int dataset_synthesize(const std::string& input_dir, const std::string& output_dir,
                       const SynthConfig& cfg);

// Procedural linear-RGB test scene: smooth gradients, soft shapes, texture.
Tensor make_test_image(int width, int height, uint64_t seed);

}  // namespace hexburst
