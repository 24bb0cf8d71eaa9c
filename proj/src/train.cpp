#include "hexburst/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hexburst/ftr.hpp"
#include "hexburst/losses.hpp"

namespace hexburst {

using nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  HEXB_CHECK(steps >= 0, "train: steps must be >= 0");
  HEXB_CHECK(batch >= 1, "train: batch must be >= 1");
  HEXB_CHECK(crop >= 16 && crop % 16 == 0, "train: crop " << crop << " must be divisible by 16");
  HEXB_CHECK(lr > 0.0, "train: lr must be positive");
  HEXB_CHECK(ckpt_interval > 0, "train: ckpt_interval must be positive");
}

BurstDataset load_dataset(const std::string& dir, FlowSource source, const FlowNetParams* net,
                          int max_items, int skip_items, int block_match_disp) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  HEXB_CHECK_RUNTIME(f.good(), "dataset: cannot open " << dir << "/manifest.json");
  json manifest = json::parse(f);
  HEXB_CHECK_RUNTIME(manifest.is_array(), "dataset: manifest is not an array in " << dir);
  HEXB_CHECK(source != FlowSource::Network || net != nullptr,
             "dataset: network flow source needs flow-net parameters");

  BurstDataset ds;
  int taken = 0, seen = 0;
  for (const auto& item : manifest) {
    if (!item.contains("gt")) continue;  // skip records
    if (seen++ < skip_items) continue;
    if (max_items >= 0 && taken >= max_items) break;
    ++taken;

    LoadedBurst b;
    b.gt = read_ftr((fs::path(dir) / item.at("gt").get<std::string>()).string());
    for (const auto& fr : item.at("frames"))
      b.frames.push_back(read_ftr((fs::path(dir) / fr.get<std::string>()).string()));
    for (const auto& sh : item.at("shifts"))
      b.shifts.push_back({sh[0].get<double>(), sh[1].get<double>()});
    HEXB_CHECK_RUNTIME(!b.frames.empty() && b.frames.size() == b.shifts.size(),
                       "dataset: inconsistent burst entry in " << dir);
    b.target = b.gt;

    // one flow field per non-reference frame, at 1/4 scale
    CfaLayout cfa;
    auto ref_lum = raw_to_flowinput(make_hexadeca_raw(b.frames[0].clone(), cfa));
    for (size_t i = 1; i < b.frames.size(); ++i) {
      switch (source) {
        case FlowSource::TrueShift: {
          Tensor flow({2, ref_lum.dim(0), ref_lum.dim(1)});
          const int64_t hw = static_cast<int64_t>(ref_lum.dim(0)) * ref_lum.dim(1);
          for (int64_t p = 0; p < hw; ++p) {
            flow.data()[p] = static_cast<float>(b.shifts[i][0] / 4.0);
            flow.data()[hw + p] = static_cast<float>(b.shifts[i][1] / 4.0);
          }
          b.flows.push_back(std::move(flow));
          break;
        }
        case FlowSource::BlockMatch: {
          auto lum = raw_to_flowinput(make_hexadeca_raw(b.frames[i].clone(), cfa));
          b.flows.push_back(block_match(ref_lum, lum, block_match_disp).data);
          break;
        }
        case FlowSource::Network: {
          auto lum = raw_to_flowinput(make_hexadeca_raw(b.frames[i].clone(), cfa));
          b.flows.push_back(estimate_flow(ref_lum, lum, *net).data);
          break;
        }
      }
    }
    if (ds.frame_count == 0) ds.frame_count = static_cast<int>(b.frames.size());
    HEXB_CHECK_RUNTIME(static_cast<int>(b.frames.size()) == ds.frame_count,
                       "dataset: mixed frame counts in " << dir);
    ds.bursts.push_back(std::move(b));
  }
  return ds;
}

namespace {

// Gathers aligned crops of one burst into batched model inputs.
struct CropBatch {
  std::vector<Tensor> frames;  // N+1 of (B,1,c,c)
  std::vector<Tensor> flows;   // N of (B,2,c/4,c/4)
  Tensor target;               // (B,3,sr*c,sr*c)
};

void copy_window(const float* src, int src_w, int oy, int ox, int h, int w, float* dst) {
  for (int y = 0; y < h; ++y)
    std::copy(src + static_cast<int64_t>(oy + y) * src_w + ox,
              src + static_cast<int64_t>(oy + y) * src_w + ox + w,
              dst + static_cast<int64_t>(y) * w);
}

CropBatch make_crop_batch(const BurstDataset& data, const std::vector<int>& burst_idx,
                          const std::vector<std::pair<int, int>>& offsets, int crop, int sr) {
  const int B = static_cast<int>(burst_idx.size());
  const int F = data.frame_count;
  const int qc = crop / 4;
  CropBatch out;
  for (int fidx = 0; fidx < F; ++fidx) out.frames.emplace_back(std::vector<int>{B, 1, crop, crop});
  for (int i = 0; i < F - 1; ++i) out.flows.emplace_back(std::vector<int>{B, 2, qc, qc});
  out.target = Tensor({B, 3, sr * crop, sr * crop});

  for (int b = 0; b < B; ++b) {
    const auto& burst = data.bursts[static_cast<size_t>(burst_idx[b])];
    const auto [oy, ox] = offsets[b];
    const int H = burst.frames[0].dim(0), W = burst.frames[0].dim(1);
    for (int fidx = 0; fidx < F; ++fidx) {
      copy_window(burst.frames[fidx].data(), W, oy, ox, crop, crop,
                  out.frames[fidx].data() + static_cast<int64_t>(b) * crop * crop);
    }
    for (int i = 0; i + 1 < F; ++i) {
      const int qh = H / 4, qw = W / 4;
      for (int c = 0; c < 2; ++c)
        copy_window(burst.flows[i].data() + static_cast<int64_t>(c) * qh * qw, qw, oy / 4, ox / 4,
                    qc, qc,
                    out.flows[i].data() + (static_cast<int64_t>(b) * 2 + c) * qc * qc);
    }
    const int gh = sr * burst.frames[0].dim(0), gw = sr * W;
    (void)gh;
    for (int c = 0; c < 3; ++c)
      copy_window(burst.target.data() + static_cast<int64_t>(c) * gh * gw, gw, sr * oy, sr * ox,
                  sr * crop, sr * crop,
                  out.target.data() + (static_cast<int64_t>(b) * 3 + c) *
                                          (sr * crop) * (sr * crop));
  }
  return out;
}

struct LossParts {
  double l1 = 0.0, lab = 0.0, total = 0.0;
};

Tensor combined_loss(const Tensor& pred, const Tensor& target, const TrainConfig& tcfg,
                     LossParts* parts) {
  auto l1 = l1_loss(pred, target);
  parts->l1 = l1.item();
  Tensor total = scale(l1, static_cast<float>(tcfg.w_l1));
  if (tcfg.use_lab) {
    auto lab = cielab_loss(pred, target);
    parts->lab = lab.item();
    total = add(total, scale(lab, static_cast<float>(tcfg.w_lab)));
  }
  parts->total = total.item();
  return total;
}

TrainResult train_on_targets(ParamMap params, const ModelConfig& cfg, const TrainConfig& tcfg,
                             const BurstDataset& data, int steps, const std::string& out_dir) {
  tcfg.validate();
  cfg.validate();
  HEXB_CHECK(!data.bursts.empty(), "train: empty dataset");
  HEXB_CHECK(data.frame_count == cfg.num_nonref + 1,
             "train: dataset has " << data.frame_count << " frames per burst, model wants "
                                   << cfg.num_nonref + 1);
  for (const auto& b : data.bursts) {
    HEXB_CHECK(b.frames[0].dim(0) >= tcfg.crop && b.frames[0].dim(1) >= tcfg.crop,
               "train: burst " << b.frames[0].dim(0) << "x" << b.frames[0].dim(1)
                               << " smaller than crop " << tcfg.crop);
  }

  for (auto& [name, p] : params) p.set_requires_grad(true);

  TrainResult result;
  AdamW::Config ocfg;
  ocfg.lr = static_cast<float>(tcfg.lr);
  ocfg.weight_decay = static_cast<float>(tcfg.weight_decay);
  AdamW opt(ocfg);
  Rng rng(tcfg.seed ^ 0x9e3779b97f4a7c15ull);

  auto snapshot = [&] {
    ParamMap copy;
    for (const auto& [name, t] : params) copy[name] = t.clone();
    return copy;
  };
  ParamMap last_ckpt = snapshot();
  int64_t ckpt_step = 0;

  const int sr = cfg.sr_scale;
  for (int step = 0; step < steps; ++step) {
    if (tcfg.lr_final >= 0.0 && steps > 1) {
      const double t = static_cast<double>(step) / (steps - 1);
      const double lr = tcfg.lr_final +
                        0.5 * (tcfg.lr - tcfg.lr_final) * (1.0 + std::cos(3.14159265358979 * t));
      opt.set_lr(static_cast<float>(lr));
    }
    std::vector<int> burst_idx;
    std::vector<std::pair<int, int>> offsets;
    for (int b = 0; b < tcfg.batch; ++b) {
      const int bi = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(data.bursts.size()) - 1));
      const auto& burst = data.bursts[static_cast<size_t>(bi)];
      const int H = burst.frames[0].dim(0), W = burst.frames[0].dim(1);
      // offsets snap to the 8-px super-cell so crops keep the CFA phase
      const int oy = 8 * static_cast<int>(rng.uniform_int(0, (H - tcfg.crop) / 8));
      const int ox = 8 * static_cast<int>(rng.uniform_int(0, (W - tcfg.crop) / 8));
      burst_idx.push_back(bi);
      offsets.push_back({oy, ox});
    }
    auto batch = make_crop_batch(data, burst_idx, offsets, tcfg.crop, sr);

    LossParts parts;
    bool finite = true;
    {
      Tape tape;
      auto pred = model_forward<float>(batch.frames, batch.flows, params, cfg);
      auto loss = combined_loss(pred, batch.target, tcfg, &parts);
      finite = std::isfinite(parts.total);
      if (finite) backward(loss);
    }
    if (!finite) {
      result.params = std::move(last_ckpt);
      result.aborted = true;
      if (!out_dir.empty()) {
        save_checkpoint(out_dir, result.params, cfg, ckpt_step);
        write_curve_csv((fs::path(out_dir) / "loss_curve.csv").string(), result.curve);
      }
      return result;
    }
    opt.step(params);
    zero_grads(params);
    result.curve.push_back({step, parts.l1, parts.lab, parts.total});

    if (!out_dir.empty() && (step + 1) % tcfg.ckpt_interval == 0) {
      last_ckpt = snapshot();
      ckpt_step = step + 1;
      save_checkpoint(out_dir, params, cfg, ckpt_step);
    }
  }
  for (auto& [name, p] : params) {
    p.set_requires_grad(false);
    p.zero_grad();
  }
  result.params = std::move(params);
  if (!out_dir.empty()) {
    save_checkpoint(out_dir, result.params, cfg, steps);
    write_curve_csv((fs::path(out_dir) / "loss_curve.csv").string(), result.curve);
  }
  return result;
}

}  // namespace

TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg, const BurstDataset& data,
                  const std::string& out_dir) {
  ParamMap params = init_model_params<float>(cfg, tcfg.seed);
  return train_on_targets(std::move(params), cfg, tcfg, data, tcfg.steps, out_dir);
}

void write_curve_csv(const std::string& path, const std::vector<TrainPoint>& curve) {
  std::ostringstream o;
  o << "step,l1,lab,total\n";
  for (const auto& p : curve)
    o << p.step << "," << p.l1 << "," << p.lab << "," << p.total << "\n";
  atomic_write_text(path, o.str());
}

namespace {

std::vector<Tensor> full_frame_inputs(const LoadedBurst& b, std::vector<Tensor>* flows) {
  std::vector<Tensor> frames;
  const int H = b.frames[0].dim(0), W = b.frames[0].dim(1);
  for (const auto& f : b.frames) frames.push_back(reshape(f, {1, 1, H, W}));
  for (const auto& fl : b.flows) flows->push_back(reshape(fl, {1, 2, H / 4, W / 4}));
  return frames;
}

Tensor run_full_frame(const ParamMap& params, const ModelConfig& cfg, const LoadedBurst& b) {
  std::vector<Tensor> flows;
  auto frames = full_frame_inputs(b, &flows);
  auto pred = model_forward<float>(frames, flows, params, cfg);
  const int gh = pred.dim(2), gw = pred.dim(3);
  return reshape(pred, {3, gh, gw});
}

}  // namespace

double eval_loss(const ParamMap& params, const ModelConfig& cfg, const BurstDataset& data,
                 const TrainConfig& tcfg) {
  HEXB_CHECK(!data.bursts.empty(), "eval_loss: empty dataset");
  double acc = 0.0;
  for (const auto& b : data.bursts) {
    auto pred = run_full_frame(params, cfg, b);
    LossParts parts;
    TrainConfig t = tcfg;
    combined_loss(reshape(pred, {1, 3, pred.dim(1), pred.dim(2)}),
                  reshape(b.target, {1, 3, b.target.dim(1), b.target.dim(2)}), t, &parts);
    acc += parts.total;
  }
  return acc / static_cast<double>(data.bursts.size());
}

double eval_psnr(const ParamMap& params, const ModelConfig& cfg, const BurstDataset& data) {
  HEXB_CHECK(!data.bursts.empty(), "eval_psnr: empty dataset");
  double acc = 0.0;
  for (const auto& b : data.bursts) {
    auto pred = run_full_frame(params, cfg, b);
    // clamp to the displayable range before scoring
    Tensor clamped(pred.shape());
    for (int64_t i = 0; i < pred.numel(); ++i)
      clamped.data()[i] = std::clamp(pred.data()[i], 0.0f, 1.0f);
    const int64_t n = clamped.numel();
    double mse = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(clamped.data()[i]) - b.gt.data()[i];
      mse += d * d;
    }
    mse /= static_cast<double>(n);
    acc += mse == 0.0 ? 99.0 : 10.0 * std::log10(1.0 / mse);
  }
  return acc / static_cast<double>(data.bursts.size());
}

BurstDataset with_pseudo_targets(const Checkpoint& teacher, const BurstDataset& data,
                                 const std::string& cache_dir) {
  BurstDataset out;
  out.frame_count = data.frame_count;
  HEXB_CHECK(teacher.config.num_nonref + 1 == data.frame_count,
             "distill: teacher wants " << teacher.config.num_nonref + 1
                                       << " frames, dataset has " << data.frame_count);
  if (!cache_dir.empty()) fs::create_directories(cache_dir);
  int idx = 0;
  for (const auto& b : data.bursts) {
    LoadedBurst nb = b;
    const std::string cpath =
        cache_dir.empty() ? "" : (fs::path(cache_dir) / ("pseudo_" + std::to_string(idx) + ".ftr")).string();
    if (!cpath.empty() && fs::exists(cpath)) {
      nb.target = read_ftr(cpath);
      HEXB_CHECK_RUNTIME(nb.target.shape() == b.gt.shape(),
                         "distill: cached pseudo-gt shape mismatch at " << cpath);
    } else {
      nb.target = run_full_frame(teacher.params, teacher.config, b);
      if (!cpath.empty()) write_ftr(cpath, nb.target);
    }
    out.bursts.push_back(std::move(nb));
    ++idx;
  }
  return out;
}

TrainResult distill_step(const Checkpoint& teacher, const ParamMap& student_params,
                         const ModelConfig& student_cfg, const BurstDataset& domain_b,
                         const TrainConfig& tcfg, int steps, const std::string& cache_dir) {
  HEXB_CHECK(teacher.config.sr_scale == student_cfg.sr_scale &&
                 teacher.config.num_nonref == student_cfg.num_nonref,
             "distill: teacher and student disagree on frames or sr scale");
  BurstDataset pseudo = with_pseudo_targets(teacher, domain_b, cache_dir);
  ParamMap student;
  for (const auto& [name, t] : student_params) student[name] = t.clone();
  TrainConfig cfg = tcfg;
  cfg.use_lab = true;  // distillation combines L1 with the color-preserving term
  return train_on_targets(std::move(student), student_cfg, cfg, pseudo, steps, "");
}

DistillReport two_step_distill(const DistillPlan& plan, const std::string& out_dir) {
  HEXB_CHECK(plan.teacher1.config.enc_dim == plan.teacher2_init.config.enc_dim &&
                 plan.teacher1.config.dec_dim == plan.teacher2_init.config.dec_dim,
             "two_step_distill: teacher1 and teacher2 must share an architecture");
  HEXB_CHECK(plan.val_fraction > 0.0 && plan.val_fraction < 1.0,
             "two_step_distill: val_fraction must be in (0,1)");

  BurstDataset all = load_dataset(plan.domain_b_dir, plan.flow_source);
  HEXB_CHECK(all.bursts.size() >= 2, "two_step_distill: need at least 2 domain-B bursts");
  const int val_n =
      std::max<int>(1, static_cast<int>(plan.val_fraction * static_cast<double>(all.bursts.size())));
  BurstDataset train_split, val_split;
  train_split.frame_count = val_split.frame_count = all.frame_count;
  for (size_t i = 0; i < all.bursts.size(); ++i) {
    if (i + static_cast<size_t>(val_n) < all.bursts.size())
      train_split.bursts.push_back(std::move(all.bursts[i]));
    else
      val_split.bursts.push_back(std::move(all.bursts[i]));
  }

  const std::string cache_root = out_dir.empty() ? "" : out_dir + "/pseudo_cache";

  DistillReport report;
  report.psnr_before = eval_psnr(plan.student_init.params, plan.student_init.config, val_split);

  // phase A: teacher2 refined on domain B under teacher1 guidance
  TrainConfig phase_cfg = plan.tcfg;
  auto teacher2 = distill_step(plan.teacher1, plan.teacher2_init.params,
                               plan.teacher2_init.config, train_split, phase_cfg, plan.steps_a,
                               cache_root.empty() ? "" : cache_root + "/t1_train");
  Checkpoint teacher2_ck{plan.teacher2_init.config, teacher2.params, plan.steps_a};

  // phase B: student distilled from the refined teacher2
  phase_cfg.seed = plan.tcfg.seed + 1;
  auto student_two = distill_step(teacher2_ck, plan.student_init.params,
                                  plan.student_init.config, train_split, phase_cfg, plan.steps_b,
                                  cache_root.empty() ? "" : cache_root + "/t2_train");

  // one-step baseline: same init and step budget, teacher1 targets
  phase_cfg.seed = plan.tcfg.seed + 1;
  auto student_one = distill_step(plan.teacher1, plan.student_init.params,
                                  plan.student_init.config, train_split, phase_cfg, plan.steps_b,
                                  cache_root.empty() ? "" : cache_root + "/t1_train");

  // both students scored on identical targets: teacher2 pseudo-gt on val
  BurstDataset val_targets = with_pseudo_targets(teacher2_ck, val_split,
                                                 cache_root.empty() ? "" : cache_root + "/t2_val");
  TrainConfig eval_cfg = plan.tcfg;
  eval_cfg.use_lab = true;
  report.one_step_val_loss =
      eval_loss(student_one.params, plan.student_init.config, val_targets, eval_cfg);
  report.two_step_val_loss =
      eval_loss(student_two.params, plan.student_init.config, val_targets, eval_cfg);
  report.psnr_after = eval_psnr(student_two.params, plan.student_init.config, val_split);

  if (!out_dir.empty()) {
    save_checkpoint(out_dir + "/student", student_two.params, plan.student_init.config,
                    plan.steps_b);
    save_checkpoint(out_dir + "/teacher2", teacher2.params, plan.teacher2_init.config,
                    plan.steps_a);
    atomic_write_text(out_dir + "/report.json", distill_report_json(report) + "\n");
  }
  return report;
}

std::string distill_report_json(const DistillReport& report) {
  json j;
  j["one_step_val_loss"] = report.one_step_val_loss;
  j["two_step_val_loss"] = report.two_step_val_loss;
  j["psnr_before"] = report.psnr_before;
  j["psnr_after"] = report.psnr_after;
  return j.dump(2);
}

}  // namespace hexburst
