#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hexburst/model.hpp"
#include "hexburst/tensor.hpp"

namespace hexburst {

// 10*log10(1/MSE) on [0,1] data; +inf for an exact match.
double psnr(const Tensor& pred, const Tensor& target);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// valid-mode windows, averaged over channels and positions. Inputs (C,H,W).
double ssim(const Tensor& pred, const Tensor& target);

// Robust to permutations of the sample order.
double median_of(std::vector<double> samples);

struct BenchResult {
  double median_sec = 0.0;
  std::vector<double> times_sec;  // one per timed repeat, warm-up excluded
  std::string machine;
};

// Times fn once per repeat; one warm-up run is excluded from the stats.
BenchResult bench(const std::function<void()>& fn, int repeats);

// Builds a deterministic synthetic burst of the checkpoint's frame count at
// (H, W) raw resolution and times a full forward pass (single thread).
BenchResult bench_model(const Checkpoint& ck, int height, int width, int repeats,
                        uint64_t seed = 0);

struct MethodEval {
  std::string name;
  std::vector<double> psnr_per_image;
  std::vector<double> ssim_per_image;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double time_sec = -1.0;    // optional, <0 when not measured
  int64_t params = -1;       // optional
};

struct EvalReport {
  std::vector<MethodEval> methods;
  std::string best_method;  // highest mean PSNR
  std::string note;         // metric conventions, machine description
};

// Each method's predictions must align 1:1 with gt (same count and shapes).
EvalReport compare_report(
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& method_outputs,
    const std::vector<Tensor>& gt_set);

std::string report_markdown(const EvalReport& report);
std::string report_json_text(const EvalReport& report);

}  // namespace hexburst
