#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hexburst/flow.hpp"
#include "hexburst/model.hpp"

namespace hexburst {

struct TrainConfig {
  int steps = 2000;
  int batch = 2;
  int crop = 64;  // raw pixels, divisible by 16
  double lr = 1e-4;
  double lr_final = -1.0;  // <0: constant lr; otherwise cosine decay to this
  double weight_decay = 0.0;
  double w_l1 = 1.0;
  double w_lab = 0.1;
  bool use_lab = false;  // CIELAB term is enabled during distillation
  int ckpt_interval = 500;
  uint64_t seed = 0;

  void validate() const;
};

// How per-frame alignment flows are produced when a dataset is loaded.
enum class FlowSource { TrueShift, BlockMatch, Network };

struct LoadedBurst {
  std::vector<Tensor> frames;                 // (H, W) raw, index 0 = reference
  Tensor gt;                                  // (3, sr*H, sr*W)
  Tensor target;                              // training target (gt, or pseudo-gt)
  std::vector<std::array<double, 2>> shifts;  // raw px
  std::vector<Tensor> flows;                  // per non-ref (2, H/4, W/4), 1/4 scale
};

struct BurstDataset {
  std::vector<LoadedBurst> bursts;
  int frame_count = 0;
};

// Reads a synthesized dataset (manifest.json + FTR rasters) and computes
// alignment flows once per burst. max_items/skip_items slice the manifest.
BurstDataset load_dataset(const std::string& dir, FlowSource source,
                          const FlowNetParams* net = nullptr, int max_items = -1,
                          int skip_items = 0, int block_match_disp = 6);

struct TrainPoint {
  int step;
  double l1, lab, total;
};

struct TrainResult {
  ParamMap params;
  std::vector<TrainPoint> curve;
  bool aborted = false;  // non-finite loss; params hold the last checkpoint
};

// L1 (+ optional CIELAB) on random aligned crops, AdamW. Deterministic for a
// fixed seed. When out_dir is non-empty, periodic checkpoints and the loss
// curve CSV are written there.
TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg, const BurstDataset& data,
                  const std::string& out_dir = "");

void write_curve_csv(const std::string& path, const std::vector<TrainPoint>& curve);

// Full-frame mean of w_l1*L1 + (use_lab ? w_lab*CIELAB : 0) of the model's
// outputs against each burst's target.
double eval_loss(const ParamMap& params, const ModelConfig& cfg, const BurstDataset& data,
                 const TrainConfig& tcfg);

// Mean PSNR of full-frame model outputs against the bursts' real gt.
double eval_psnr(const ParamMap& params, const ModelConfig& cfg, const BurstDataset& data);

// Runs the teacher on every burst (inference only), caches pseudo ground
// truth under cache_dir (restartable), then fine-tunes the student against
// those targets with L1 + CIELAB. Returns the updated student parameters.
TrainResult distill_step(const Checkpoint& teacher, const ParamMap& student_params,
                         const ModelConfig& student_cfg, const BurstDataset& domain_b,
                         const TrainConfig& tcfg, int steps, const std::string& cache_dir = "");

// Replaces every burst's training target with the teacher's output.
BurstDataset with_pseudo_targets(const Checkpoint& teacher, const BurstDataset& data,
                                 const std::string& cache_dir = "");

struct DistillPlan {
  Checkpoint teacher1;       // synthetic-trained guide
  Checkpoint teacher2_init;  // same architecture as teacher1, distinct weights
  Checkpoint student_init;   // synthetic-pretrained student
  std::string domain_b_dir;  // proxy for real-world captures
  int steps_a = 300;         // teacher2 refinement
  int steps_b = 300;         // student distillation
  TrainConfig tcfg;          // lr/batch/crop/seed; use_lab forced on
  double val_fraction = 0.2;
  FlowSource flow_source = FlowSource::BlockMatch;
};

struct DistillReport {
  double one_step_val_loss = 0.0;
  double two_step_val_loss = 0.0;
  double psnr_before = 0.0;
  double psnr_after = 0.0;
};

// Phase A refines teacher2 from teacher1 on domain B; phase B distills the
// student from teacher2. The one-step path (student straight from teacher1)
// is evaluated on the same validation split and targets for the report.
DistillReport two_step_distill(const DistillPlan& plan, const std::string& out_dir);

std::string distill_report_json(const DistillReport& report);

}  // namespace hexburst
