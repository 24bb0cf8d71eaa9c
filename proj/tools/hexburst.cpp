// hexburst: burst hexadeca-Bayer super-resolution pipeline CLI.
// Subcommands: synth, flow, flow-finetune, train, distill, infer, eval, bench.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hexburst/ftr.hpp"
#include "hexburst/image.hpp"
#include "hexburst/metrics.hpp"
#include "hexburst/rawsim.hpp"
#include "hexburst/threadpool.hpp"
#include "hexburst/train.hpp"

namespace fs = std::filesystem;
using namespace hexburst;

namespace {

struct GlobalOpts {
  uint64_t seed = 0;
  int threads = 0;
  bool verbose = false;
};

void log_config(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cerr << "config: cmd=" << cmd;
  for (const auto& [k, v] : kv) std::cerr << " " << k << "=" << v;
  std::cerr << "\n";
}

std::string fnum(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

ModelConfig resolve_config(const std::string& spec) {
  if (spec == "tiny" || spec == "tiny-s" || spec == "tiny-l" || spec == "s" || spec == "l")
    return preset_config(spec);
  std::ifstream f(spec);
  HEXB_CHECK_RUNTIME(f.good(), "cannot open config file " << spec);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

FlowSource resolve_flow_source(const std::string& name) {
  if (name == "trueshift") return FlowSource::TrueShift;
  if (name == "blockmatch") return FlowSource::BlockMatch;
  if (name == "net") return FlowSource::Network;
  fail("unknown flow source '" + name + "' (trueshift|blockmatch|net)");
}

// Loads the frames of one burst directory (frame_00.ftr, frame_01.ftr, ...).
std::vector<Tensor> load_burst_frames(const std::string& dir) {
  std::vector<std::string> files;
  HEXB_CHECK_RUNTIME(fs::is_directory(dir), "burst dir not found: " << dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".ftr")
      files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  HEXB_CHECK_RUNTIME(!files.empty(), "no frame_*.ftr files in " << dir);
  std::vector<Tensor> frames;
  for (const auto& f : files) {
    Tensor t = read_ftr(f);
    HEXB_CHECK_RUNTIME(t.rank() == 2, "frame " << f << " is not a (H,W) raster");
    frames.push_back(std::move(t));
  }
  return frames;
}

std::vector<FlowField> burst_flows(const std::vector<Tensor>& frames, const std::string& method,
                                   const std::string& flow_ckpt, int max_disp) {
  CfaLayout cfa;
  auto ref_lum = raw_to_flowinput(make_hexadeca_raw(frames[0].clone(), cfa));
  std::vector<FlowField> flows;
  FlowNetParams net;
  if (method == "net") {
    HEXB_CHECK_RUNTIME(!flow_ckpt.empty(), "--flow net needs --flow-ckpt");
    net = load_flownet(flow_ckpt);
  }
  for (size_t i = 1; i < frames.size(); ++i) {
    auto lum = raw_to_flowinput(make_hexadeca_raw(frames[i].clone(), cfa));
    FlowField f;
    if (method == "blockmatch") {
      f = block_match(ref_lum, lum, max_disp);
    } else if (method == "net") {
      f = estimate_flow(ref_lum, lum, net);
    } else {
      fail("unknown flow method '" + method + "' (net|blockmatch)");
    }
    f.scale = 0.25;
    flows.push_back(std::move(f));
  }
  return flows;
}

int cmd_synth(const GlobalOpts& g, const std::string& in, const std::string& out,
              SynthConfig cfg, bool domain_b) {
  cfg.seed = g.seed;
  if (domain_b) cfg = domain_b_config(cfg);
  log_config("synth", {{"in", in},
                       {"out", out},
                       {"frames", std::to_string(cfg.frames)},
                       {"max_shift", fnum(cfg.max_shift)},
                       {"sigma", fnum(cfg.sigma_min) + ".." + fnum(cfg.sigma_max)},
                       {"shot", fnum(cfg.shot_min) + ".." + fnum(cfg.shot_max)},
                       {"read", fnum(cfg.read_min) + ".." + fnum(cfg.read_max)},
                       {"scale", std::to_string(cfg.sr_scale)},
                       {"seed", std::to_string(cfg.seed)},
                       {"domain_b", domain_b ? "1" : "0"}});
  const int n = dataset_synthesize(in, out, cfg);
  std::cout << "wrote " << n << " bursts to " << out << "\n";
  return 0;
}

int cmd_flow(const GlobalOpts& g, const std::string& burst_dir, const std::string& method,
             const std::string& flow_ckpt, int max_disp, const std::string& out) {
  log_config("flow", {{"burst", burst_dir}, {"method", method}, {"out", out},
                      {"max_disp", std::to_string(max_disp)}, {"seed", std::to_string(g.seed)}});
  auto frames = load_burst_frames(burst_dir);
  auto flows = burst_flows(frames, method, flow_ckpt, max_disp);
  fs::create_directories(out);
  for (size_t i = 0; i < flows.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "flow_%02d.ftr", static_cast<int>(i + 1));
    write_ftr((fs::path(out) / name).string(), flows[i].data);
  }
  std::cout << "wrote " << flows.size() << " flow fields to " << out << "\n";
  return 0;
}

int cmd_flow_finetune(const GlobalOpts& g, const std::string& data, const std::string& out,
                      int steps, double lr, int levels, int max_items) {
  log_config("flow-finetune",
             {{"data", data}, {"out", out}, {"steps", std::to_string(steps)}, {"lr", fnum(lr)},
              {"levels", std::to_string(levels)}, {"max_items", std::to_string(max_items)},
              {"seed", std::to_string(g.seed)}});
  auto ds = load_dataset(data, FlowSource::TrueShift, nullptr, max_items);
  HEXB_CHECK_RUNTIME(!ds.bursts.empty(), "flow-finetune: dataset is empty");
  std::vector<FlowPair> pairs;
  CfaLayout cfa;
  for (const auto& b : ds.bursts) {
    auto ref = raw_to_flowinput(make_hexadeca_raw(b.frames[0].clone(), cfa));
    for (size_t i = 1; i < b.frames.size(); ++i) {
      auto lum = raw_to_flowinput(make_hexadeca_raw(b.frames[i].clone(), cfa));
      pairs.push_back({ref, lum, b.shifts[i][0] / 4.0, b.shifts[i][1] / 4.0});
    }
  }
  auto net = init_flownet(levels, g.seed);
  auto result = photometric_finetune(net, pairs, steps, lr, g.seed);
  save_flownet(out, result.net);
  std::ostringstream csv;
  csv << "step,loss\n";
  for (const auto& p : result.curve) csv << p.step << "," << p.loss << "\n";
  atomic_write_text((fs::path(out) / "flow_curve.csv").string(), csv.str());
  if (result.aborted) {
    std::cout << "aborted on non-finite loss; last good checkpoint written to " << out << "\n";
    return 1;
  }
  std::cout << "fine-tuned flow net (" << pairs.size() << " pairs, " << steps
            << " steps) -> " << out << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data, const std::string& out,
              const std::string& config_spec, TrainConfig tcfg, const std::string& flow_src,
              const std::string& flow_ckpt, int max_items, int skip_items) {
  tcfg.seed = g.seed;
  log_config("train", {{"data", data},
                       {"out", out},
                       {"config", config_spec},
                       {"steps", std::to_string(tcfg.steps)},
                       {"batch", std::to_string(tcfg.batch)},
                       {"crop", std::to_string(tcfg.crop)},
                       {"lr", fnum(tcfg.lr)},
                       {"lab", tcfg.use_lab ? "1" : "0"},
                       {"flow", flow_src},
                       {"seed", std::to_string(tcfg.seed)}});
  auto cfg = resolve_config(config_spec);
  FlowNetParams net;
  const FlowSource src = resolve_flow_source(flow_src);
  if (src == FlowSource::Network) {
    HEXB_CHECK_RUNTIME(!flow_ckpt.empty(), "train: --flow net needs --flow-ckpt");
    net = load_flownet(flow_ckpt);
  }
  auto ds = load_dataset(data, src, src == FlowSource::Network ? &net : nullptr, max_items,
                         skip_items);
  auto result = train(cfg, tcfg, ds, out);
  if (result.aborted) {
    std::cout << "aborted on non-finite loss; last checkpoint kept in " << out << "\n";
    return 1;
  }
  std::cout << "trained " << tcfg.steps << " steps on " << ds.bursts.size()
            << " bursts; final loss "
            << (result.curve.empty() ? 0.0 : result.curve.back().total) << "; checkpoint in "
            << out << "\n";
  return 0;
}

int cmd_distill(const GlobalOpts& g, const std::string& teacher1, const std::string& teacher2,
                const std::string& student, const std::string& domain_b, const std::string& out,
                int steps_a, int steps_b, TrainConfig tcfg, double val_fraction,
                const std::string& flow_src) {
  tcfg.seed = g.seed;
  log_config("distill", {{"teacher1", teacher1},
                         {"teacher2_init", teacher2},
                         {"student_init", student},
                         {"domain_b", domain_b},
                         {"out", out},
                         {"steps_a", std::to_string(steps_a)},
                         {"steps_b", std::to_string(steps_b)},
                         {"val_fraction", fnum(val_fraction)},
                         {"seed", std::to_string(tcfg.seed)}});
  DistillPlan plan;
  plan.teacher1 = load_checkpoint(teacher1);
  plan.teacher2_init = load_checkpoint(teacher2);
  plan.student_init = load_checkpoint(student);
  plan.domain_b_dir = domain_b;
  plan.steps_a = steps_a;
  plan.steps_b = steps_b;
  plan.tcfg = tcfg;
  plan.val_fraction = val_fraction;
  plan.flow_source = resolve_flow_source(flow_src);
  auto report = two_step_distill(plan, out);
  std::cout << distill_report_json(report) << "\n";
  std::cout << "student checkpoint in " << out << "/student\n";
  return 0;
}

int cmd_infer(const GlobalOpts& g, const std::string& ckpt, const std::string& burst_dir,
              const std::string& out, const std::string& flow_method,
              const std::string& flow_ckpt, int max_disp, const std::string& raw_out) {
  log_config("infer", {{"ckpt", ckpt}, {"burst", burst_dir}, {"out", out},
                       {"flow", flow_method}, {"seed", std::to_string(g.seed)}});
  auto ck = load_checkpoint(ckpt);
  auto frames = load_burst_frames(burst_dir);
  HEXB_CHECK_RUNTIME(static_cast<int>(frames.size()) == ck.config.num_nonref + 1,
                     "infer: burst has " << frames.size() << " frames, model wants "
                                         << ck.config.num_nonref + 1);
  const int H = frames[0].dim(0), W = frames[0].dim(1);
  HEXB_CHECK(H % 16 == 0 && W % 16 == 0,
             "infer: raw dims " << H << "x" << W << " must be divisible by 16");
  auto flows = burst_flows(frames, flow_method, flow_ckpt, max_disp);
  std::vector<Tensor> batched;
  for (auto& f : frames) batched.push_back(reshape(f, {1, 1, H, W}));
  std::vector<Tensor> bflows;
  for (auto& f : flows) bflows.push_back(reshape(f.data, {1, 2, H / 4, W / 4}));
  auto pred = model_forward<float>(batched, bflows, ck.params, ck.config);
  auto rgb = reshape(pred, {3, pred.dim(2), pred.dim(3)});
  if (!raw_out.empty()) write_ftr(raw_out, rgb);
  Tensor clamped(rgb.shape());
  for (int64_t i = 0; i < rgb.numel(); ++i)
    clamped.data()[i] = std::clamp(rgb.data()[i], 0.0f, 1.0f);
  save_png16(out, clamped);
  std::cout << "wrote " << out << " (" << rgb.dim(2) << "x" << rgb.dim(1) << ")\n";
  return 0;
}

Tensor load_pred_file(const std::string& path) {
  if (fs::path(path).extension() == ".ftr") {
    Tensor t = read_ftr(path);
    HEXB_CHECK_RUNTIME(t.rank() == 3 && t.dim(0) == 3,
                       "eval: " << path << " is not a (3,H,W) raster");
    return t;
  }
  return load_image_linear(path);
}

int cmd_eval(const GlobalOpts& g, const std::string& pred_dir, const std::string& gt_dir,
             const std::string& out_prefix) {
  log_config("eval", {{"pred", pred_dir}, {"gt", gt_dir}, {"seed", std::to_string(g.seed)}});
  auto list_files = [](const std::string& dir) {
    std::vector<std::string> names;
    HEXB_CHECK_RUNTIME(fs::is_directory(dir), "eval: directory not found: " << dir);
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto ext = e.path().extension().string();
      if (ext == ".ftr" || ext == ".png" || ext == ".ppm")
        names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
  };
  const auto gt_names = list_files(gt_dir);
  HEXB_CHECK_RUNTIME(!gt_names.empty(), "eval: no images in " << gt_dir);
  std::vector<Tensor> preds, gts;
  for (const auto& name : gt_names) {
    gts.push_back(load_pred_file((fs::path(gt_dir) / name).string()));
    const auto p = fs::path(pred_dir) / name;
    HEXB_CHECK_RUNTIME(fs::exists(p), "eval: missing prediction for " << name);
    preds.push_back(load_pred_file(p.string()));
  }
  auto report = compare_report({{"pred", preds}}, gts);
  std::cout << report_markdown(report);
  if (!out_prefix.empty()) {
    atomic_write_text(out_prefix + ".md", report_markdown(report));
    atomic_write_text(out_prefix + ".json", report_json_text(report) + "\n");
  }
  return 0;
}

int cmd_bench(const GlobalOpts& g, const std::string& ckpt, const std::string& size, int repeats) {
  log_config("bench", {{"ckpt", ckpt}, {"size", size}, {"repeats", std::to_string(repeats)},
                       {"seed", std::to_string(g.seed)}});
  int H = 0, W = 0;
  if (std::sscanf(size.c_str(), "%dx%d", &H, &W) != 2 || H <= 0 || W <= 0)
    fail("bench: --size must be HxW, got '" + size + "'");
  auto ck = load_checkpoint(ckpt);
  auto r = bench_model(ck, H, W, repeats, g.seed);
  std::cout << "median " << r.median_sec << " s per burst (" << repeats << " repeats, " << H
            << "x" << W << " raw, " << r.machine << ")\n";
  std::cout << "params " << param_count(ck.config) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hexburst: multi-frame super-resolution for hexadeca-Bayer raw bursts"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed");
  app.add_option("--threads", g.threads, "bound on internal parallelism (0 = all cores)");
  app.add_flag("--verbose", g.verbose, "more logging");

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize raw bursts from RGB images");
  std::string s_in, s_out;
  SynthConfig scfg;
  bool s_domain_b = false;
  synth->add_option("--in", s_in, "input image directory (PNG/PPM)")->required();
  synth->add_option("--out", s_out, "output dataset directory")->required();
  synth->add_option("--frames", scfg.frames, "frames per burst");
  synth->add_option("--max-shift", scfg.max_shift, "max translation (raw px)");
  synth->add_option("--sigma-min", scfg.sigma_min, "blur sigma lower bound");
  synth->add_option("--sigma-max", scfg.sigma_max, "blur sigma upper bound");
  synth->add_option("--shot-min", scfg.shot_min, "shot noise gain lower bound");
  synth->add_option("--shot-max", scfg.shot_max, "shot noise gain upper bound");
  synth->add_option("--read-min", scfg.read_min, "read noise lower bound");
  synth->add_option("--read-max", scfg.read_max, "read noise upper bound");
  synth->add_option("--scale", scfg.sr_scale, "super-resolution scale");
  synth->add_option("--max-dim", scfg.max_dim, "center-crop cap (0 = none)");
  synth->add_flag("--domain-b", s_domain_b, "shift blur/noise to the disjoint domain-B ranges");

  // flow
  auto* flow = app.add_subcommand("flow", "estimate alignment flows for one burst");
  std::string f_burst, f_method = "net", f_ckpt, f_out;
  int f_disp = 6;
  flow->add_option("--burst", f_burst, "burst directory (frame_*.ftr)")->required();
  flow->add_option("--method", f_method, "net|blockmatch");
  flow->add_option("--ckpt", f_ckpt, "flow-net checkpoint (for net)");
  flow->add_option("--max-disp", f_disp, "block-match search radius (quarter-res px)");
  flow->add_option("--out", f_out, "output directory")->required();

  // flow-finetune
  auto* ff = app.add_subcommand("flow-finetune", "unsupervised photometric fine-tuning");
  std::string ff_data, ff_out;
  int ff_steps = 500, ff_levels = 3, ff_max_items = -1;
  double ff_lr = 1e-3;
  ff->add_option("--data", ff_data, "synthesized dataset directory")->required();
  ff->add_option("--out", ff_out, "output checkpoint directory")->required();
  ff->add_option("--steps", ff_steps, "training steps");
  ff->add_option("--lr", ff_lr, "learning rate");
  ff->add_option("--levels", ff_levels, "pyramid levels");
  ff->add_option("--max-items", ff_max_items, "limit on dataset items");

  // train
  auto* tr = app.add_subcommand("train", "train a model on a synthesized dataset");
  std::string t_data, t_out, t_config = "tiny", t_flow = "blockmatch", t_flow_ckpt;
  int t_max_items = -1, t_skip_items = 0;
  TrainConfig tcfg;
  tr->add_option("--data", t_data, "dataset directory")->required();
  tr->add_option("--out", t_out, "checkpoint directory")->required();
  tr->add_option("--config", t_config, "tiny|tiny-l|s|l or a JSON file");
  tr->add_option("--steps", tcfg.steps, "training steps");
  tr->add_option("--batch", tcfg.batch, "batch size");
  tr->add_option("--crop", tcfg.crop, "crop size (raw px, divisible by 16)");
  tr->add_option("--lr", tcfg.lr, "learning rate");
  tr->add_option("--wd", tcfg.weight_decay, "weight decay");
  tr->add_flag("--lab", tcfg.use_lab, "add the CIELAB loss term");
  tr->add_option("--w-lab", tcfg.w_lab, "CIELAB loss weight");
  tr->add_option("--ckpt-interval", tcfg.ckpt_interval, "checkpoint every N steps");
  tr->add_option("--flow", t_flow, "trueshift|blockmatch|net");
  tr->add_option("--flow-ckpt", t_flow_ckpt, "flow-net checkpoint (for net)");
  tr->add_option("--max-items", t_max_items, "limit on dataset items");
  tr->add_option("--skip-items", t_skip_items, "skip the first N dataset items");

  // distill
  auto* di = app.add_subcommand("distill", "two-step knowledge distillation");
  std::string d_t1, d_t2, d_student, d_domain_b, d_out, d_flow = "blockmatch";
  int d_steps_a = 300, d_steps_b = 300;
  double d_val = 0.2;
  TrainConfig dcfg;
  di->add_option("--teacher1", d_t1, "teacher1 checkpoint")->required();
  di->add_option("--teacher2-init", d_t2, "teacher2 init checkpoint")->required();
  di->add_option("--student-init", d_student, "student init checkpoint")->required();
  di->add_option("--domain-b", d_domain_b, "domain-B dataset directory")->required();
  di->add_option("--out", d_out, "output directory")->required();
  di->add_option("--steps-a", d_steps_a, "teacher2 refinement steps");
  di->add_option("--steps-b", d_steps_b, "student distillation steps");
  di->add_option("--lr", dcfg.lr, "learning rate");
  di->add_option("--batch", dcfg.batch, "batch size");
  di->add_option("--crop", dcfg.crop, "crop size");
  di->add_option("--w-lab", dcfg.w_lab, "CIELAB loss weight");
  di->add_option("--val-fraction", d_val, "validation split fraction");
  di->add_option("--flow", d_flow, "trueshift|blockmatch|net");

  // infer
  auto* inf = app.add_subcommand("infer", "reconstruct one burst");
  std::string i_ckpt, i_burst, i_out, i_flow = "blockmatch", i_flow_ckpt, i_raw_out;
  int i_disp = 6;
  inf->add_option("--ckpt", i_ckpt, "model checkpoint directory")->required();
  inf->add_option("--burst", i_burst, "burst directory (frame_*.ftr)")->required();
  inf->add_option("--out", i_out, "output PNG path")->required();
  inf->add_option("--flow", i_flow, "net|blockmatch");
  inf->add_option("--flow-ckpt", i_flow_ckpt, "flow-net checkpoint (for net)");
  inf->add_option("--max-disp", i_disp, "block-match search radius");
  inf->add_option("--raw-out", i_raw_out, "also write linear output as FTR1");

  // eval
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM report for prediction vs gt directories");
  std::string e_pred, e_gt, e_out;
  ev->add_option("--pred", e_pred, "prediction directory")->required();
  ev->add_option("--gt", e_gt, "ground-truth directory")->required();
  ev->add_option("--out", e_out, "output prefix for .md/.json report");

  // bench
  auto* be = app.add_subcommand("bench", "wall-clock per-burst inference time");
  std::string b_ckpt, b_size = "64x64";
  int b_repeats = 5;
  be->add_option("--ckpt", b_ckpt, "model checkpoint directory")->required();
  be->add_option("--size", b_size, "raw input size HxW");
  be->add_option("--repeats", b_repeats, "timed repeats (>= 3)");

  // let --seed/--threads/--verbose appear after the subcommand too
  for (auto* sc : app.get_subcommands([](const CLI::App*) { return true; })) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage hint
    return 2;
  }
  set_num_threads(g.threads);

  try {
    if (*synth) return cmd_synth(g, s_in, s_out, scfg, s_domain_b);
    if (*flow) return cmd_flow(g, f_burst, f_method, f_ckpt, f_disp, f_out);
    if (*ff) return cmd_flow_finetune(g, ff_data, ff_out, ff_steps, ff_lr, ff_levels, ff_max_items);
    if (*tr)
      return cmd_train(g, t_data, t_out, t_config, tcfg, t_flow, t_flow_ckpt, t_max_items,
                       t_skip_items);
    if (*di)
      return cmd_distill(g, d_t1, d_t2, d_student, d_domain_b, d_out, d_steps_a, d_steps_b, dcfg,
                         d_val, d_flow);
    if (*inf) return cmd_infer(g, i_ckpt, i_burst, i_out, i_flow, i_flow_ckpt, i_disp, i_raw_out);
    if (*ev) return cmd_eval(g, e_pred, e_gt, e_out);
    if (*be) return cmd_bench(g, b_ckpt, b_size, b_repeats);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid-argument: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
