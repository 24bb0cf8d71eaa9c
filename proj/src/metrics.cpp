#include "hexburst/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "hexburst/threadpool.hpp"

namespace hexburst {

using nlohmann::json;

double psnr(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "psnr");
  const int64_t n = pred.numel();
  double mse = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.data()[i]) - target.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin);
  double s = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    w[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

// Separable valid-mode weighted filtering of one plane.
std::vector<double> sep_filter_valid(const std::vector<double>& img, int H, int W,
                                     const std::vector<double>& k) {
  const int OH = H - kWin + 1, OW = W - kWin + 1;
  std::vector<double> rows(static_cast<size_t>(H) * OW);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < OW; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * img[y * W + x + i];
      rows[y * OW + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(OH) * OW);
  for (int y = 0; y < OH; ++y)
    for (int x = 0; x < OW; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * rows[(y + i) * OW + x];
      out[y * OW + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "ssim");
  HEXB_CHECK(pred.rank() == 3, "ssim: expected (C,H,W), got " << shape_str(pred.shape()));
  const int C = pred.dim(0), H = pred.dim(1), W = pred.dim(2);
  HEXB_CHECK(H >= kWin && W >= kWin,
             "ssim: image " << H << "x" << W << " smaller than the " << kWin << "x" << kWin
                            << " window");
  const auto k = gaussian_window();
  const int OH = H - kWin + 1, OW = W - kWin + 1;
  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    const float* xp = pred.data() + static_cast<int64_t>(c) * H * W;
    const float* yp = target.data() + static_cast<int64_t>(c) * H * W;
    std::vector<double> x(static_cast<size_t>(H) * W), y(x.size()), xx(x.size()), yy(x.size()),
        xy(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = xp[i];
      y[i] = yp[i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = sep_filter_valid(x, H, W, k);
    const auto my = sep_filter_valid(y, H, W, k);
    const auto mxx = sep_filter_valid(xx, H, W, k);
    const auto myy = sep_filter_valid(yy, H, W, k);
    const auto mxy = sep_filter_valid(xy, H, W, k);
    double acc = 0.0;
    for (int i = 0; i < OH * OW; ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cxy = mxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
      acc += num / den;
    }
    total += acc / (OH * OW);
  }
  return total / C;
}

double median_of(std::vector<double> samples) {
  HEXB_CHECK(!samples.empty(), "median: empty sample set");
  std::sort(samples.begin(), samples.end());
  const size_t n = samples.size();
  return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

namespace {

std::string machine_string() {
  std::ostringstream o;
  o << "linux, " << std::thread::hardware_concurrency() << " hw threads, single-thread bench";
#if defined(__GNUC__) && !defined(__clang__)
  o << ", gcc " << __GNUC__ << "." << __GNUC_MINOR__;
#elif defined(__clang__)
  o << ", clang " << __clang_major__ << "." << __clang_minor__;
#endif
  return o.str();
}

}  // namespace

BenchResult bench(const std::function<void()>& fn, int repeats) {
  HEXB_CHECK(repeats >= 3, "bench: repeats must be >= 3, got " << repeats);
  fn();  // warm-up
  BenchResult r;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    r.times_sec.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  r.median_sec = median_of(r.times_sec);
  r.machine = machine_string();
  return r;
}

BenchResult bench_model(const Checkpoint& ck, int height, int width, int repeats, uint64_t seed) {
  HEXB_CHECK(height % 16 == 0 && width % 16 == 0,
             "bench: raw dims " << height << "x" << width << " must be divisible by 16");
  Rng rng(seed);
  std::vector<Tensor> frames;
  for (int i = 0; i < ck.config.num_nonref + 1; ++i) {
    Tensor f({1, 1, height, width});
    for (int64_t p = 0; p < f.numel(); ++p) f.data()[p] = static_cast<float>(rng.uniform());
    frames.push_back(std::move(f));
  }
  std::vector<Tensor> flows(static_cast<size_t>(ck.config.num_nonref),
                            Tensor({1, 2, height / 4, width / 4}));
  // timing is pinned to one thread for stability
  const int prev = num_threads();
  set_num_threads(1);
  auto result = bench([&] { model_forward<float>(frames, flows, ck.params, ck.config); }, repeats);
  set_num_threads(prev);
  return result;
}

EvalReport compare_report(
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& method_outputs,
    const std::vector<Tensor>& gt_set) {
  HEXB_CHECK(!gt_set.empty(), "compare_report: empty ground-truth set");
  EvalReport report;
  report.note = "PSNR/SSIM on [0,1] linear RGB vs synthetic gt, full frame, no boundary crop; " +
                machine_string();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [name, preds] : method_outputs) {
    HEXB_CHECK(!preds.empty(), "compare_report: empty prediction set for method '" << name << "'");
    HEXB_CHECK(preds.size() == gt_set.size(),
               "compare_report: method '" << name << "' has " << preds.size()
                                          << " predictions for " << gt_set.size() << " gt images");
    MethodEval ev;
    ev.name = name;
    double psnr_acc = 0.0, ssim_acc = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) {
      HEXB_CHECK(preds[i].shape() == gt_set[i].shape(),
                 "compare_report: method '" << name << "' image " << i << " shape "
                                            << shape_str(preds[i].shape()) << " vs gt "
                                            << shape_str(gt_set[i].shape()));
      ev.psnr_per_image.push_back(psnr(preds[i], gt_set[i]));
      ev.ssim_per_image.push_back(ssim(preds[i], gt_set[i]));
      psnr_acc += ev.psnr_per_image.back();
      ssim_acc += ev.ssim_per_image.back();
    }
    ev.mean_psnr = psnr_acc / preds.size();
    ev.mean_ssim = ssim_acc / preds.size();
    if (ev.mean_psnr > best) {
      best = ev.mean_psnr;
      report.best_method = name;
    }
    report.methods.push_back(std::move(ev));
  }
  return report;
}

namespace {

std::string fmt_psnr(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string report_markdown(const EvalReport& report) {
  std::ostringstream o;
  o << "<!-- " << report.note << " -->\n";
  o << "| Method | PSNR (dB) | SSIM | Time (sec) | Params (M) |\n";
  o << "|---|---|---|---|---|\n";
  for (const auto& m : report.methods) {
    o << "| " << m.name << (m.name == report.best_method ? " (best)" : "") << " | "
      << fmt_psnr(m.mean_psnr) << " | ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", m.mean_ssim);
    o << buf << " | ";
    if (m.time_sec >= 0) {
      std::snprintf(buf, sizeof(buf), "%.3f", m.time_sec);
      o << buf;
    } else {
      o << "-";
    }
    o << " | ";
    if (m.params >= 0) {
      std::snprintf(buf, sizeof(buf), "%.2f", static_cast<double>(m.params) / 1e6);
      o << buf;
    } else {
      o << "-";
    }
    o << " |\n";
  }
  return o.str();
}

std::string report_json_text(const EvalReport& report) {
  json j;
  j["note"] = report.note;
  j["best_method"] = report.best_method;
  j["methods"] = json::array();
  for (const auto& m : report.methods) {
    json e;
    e["name"] = m.name;
    e["mean_psnr"] = std::isinf(m.mean_psnr) ? json("inf") : json(m.mean_psnr);
    e["mean_ssim"] = m.mean_ssim;
    e["psnr"] = json::array();
    for (double v : m.psnr_per_image) e["psnr"].push_back(std::isinf(v) ? json("inf") : json(v));
    e["ssim"] = m.ssim_per_image;
    if (m.time_sec >= 0) e["time_sec"] = m.time_sec;
    if (m.params >= 0) e["params"] = m.params;
    j["methods"].push_back(e);
  }
  return j.dump(2);
}

}  // namespace hexburst
