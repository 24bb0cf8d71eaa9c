#pragma once

#include <string>
#include <vector>

#include "hexburst/cfa.hpp"
#include "hexburst/optim.hpp"
#include "hexburst/tensor.hpp"

namespace hexburst {

// Per-pixel displacement from a non-reference frame to the reference frame.
// Channel 0 = dx, channel 1 = dy, in pixels at the field's own scale. The
// scale tag is relative to raw resolution (block-mean inputs live at 1/4).
struct FlowField {
  Tensor data;  // (2, H, W)
  double scale = 1.0;

  int height() const { return data.dim(1); }
  int width() const { return data.dim(2); }
};

// Coarse-to-fine residual flow predictor: per pyramid level a 5-layer conv
// stack (3x3, channels in->8->16->16->8->2) on [ref, warped other, upflow].
struct FlowNetParams {
  int levels = 3;
  ParamMap params;
};

FlowNetParams init_flownet(int levels, uint64_t seed, bool zero_init_last = true);
void save_flownet(const std::string& dir, const FlowNetParams& net);
FlowNetParams load_flownet(const std::string& dir);

// 4x4 block-mean luminance proxy at quarter resolution (scale tag 1/4).
Tensor raw_to_flowinput(const HexadecaRaw& raw);

// Exhaustive SAD search over 9x9 patches; ties broken by smaller |d|, then
// lexicographic (dy, dx). Exact on noise-free integer translations.
FlowField block_match(const Tensor& ref, const Tensor& other, int max_disp);

// SpyNet-style coarse-to-fine estimate; inputs are (H, W) luminance tensors.
FlowField estimate_flow(const Tensor& ref, const Tensor& other, const FlowNetParams& net);

// Bilinear-resizes the field and multiplies vector magnitudes by factor.
FlowField rescale_flow(const FlowField& flow, double factor);

// Mean endpoint error over interior pixels (margin excluded on each side).
double epe(const FlowField& flow, const FlowField& gt_flow, int margin = 2);

struct FlowPair {
  Tensor ref;    // (H, W) luminance
  Tensor other;  // (H, W) luminance
  double dx = 0.0, dy = 0.0;  // true shift at this scale, when known
};

struct FlowTrainPoint {
  int step;
  double loss;
};

struct FlowTrainResult {
  FlowNetParams net;
  std::vector<FlowTrainPoint> curve;
  bool aborted = false;  // true when a non-finite loss stopped training
};

// Unsupervised fine-tuning: Charbonnier photometric loss + 0.1 * smoothness,
// AdamW. On divergence returns the last good parameters.
FlowTrainResult photometric_finetune(const FlowNetParams& net, const std::vector<FlowPair>& pairs,
                                     int steps, double lr, uint64_t seed = 0);

}  // namespace hexburst
