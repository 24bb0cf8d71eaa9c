#include "hexburst/rawsim.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "hexburst/ftr.hpp"
#include "hexburst/image.hpp"
#include "hexburst/threadpool.hpp"

namespace hexburst {

using nlohmann::json;

void SynthConfig::validate() const {
  HEXB_CHECK(frames >= 1, "synth: frames must be >= 1, got " << frames);
  HEXB_CHECK(max_shift >= 0.0, "synth: max_shift must be >= 0, got " << max_shift);
  HEXB_CHECK(sigma_min <= sigma_max && sigma_min >= 0.0, "synth: bad sigma range");
  HEXB_CHECK(shot_min <= shot_max && shot_min >= 0.0, "synth: bad shot range");
  HEXB_CHECK(read_min <= read_max && read_min >= 0.0, "synth: bad read range");
  HEXB_CHECK(sr_scale >= 1, "synth: sr_scale must be >= 1");
  HEXB_CHECK(wb_red_min <= wb_red_max && wb_red_min > 0.0, "synth: bad wb_red range");
  HEXB_CHECK(wb_blue_min <= wb_blue_max && wb_blue_min > 0.0, "synth: bad wb_blue range");
  HEXB_CHECK(bright_min <= bright_max && bright_min > 0.0, "synth: bad brightness range");
}

SynthConfig domain_b_config(SynthConfig cfg) {
  // Shift blur and noise into intervals disjoint from the source domain.
  cfg.sigma_min = cfg.sigma_max + 0.2;
  cfg.sigma_max = cfg.sigma_min + 0.8;
  cfg.shot_min = cfg.shot_max * 1.5;
  cfg.shot_max = cfg.shot_min * 3.0;
  cfg.read_min = cfg.read_max * 1.5;
  cfg.read_max = cfg.read_min * 3.0;
  return cfg;
}

Tensor unprocess(const Tensor& rgb, const std::array<double, 3>& gains, double brightness) {
  HEXB_CHECK(rgb.rank() == 3 && rgb.dim(0) == 3,
             "unprocess: expected (3,H,W), got " << shape_str(rgb.shape()));
  for (double g : gains) HEXB_CHECK(g > 0.0, "unprocess: non-positive gain " << g);
  HEXB_CHECK(brightness > 0.0, "unprocess: non-positive brightness " << brightness);
  const int64_t hw = static_cast<int64_t>(rgb.dim(1)) * rgb.dim(2);
  Tensor out(rgb.shape());
  for (int c = 0; c < 3; ++c) {
    const double inv = 1.0 / (gains[c] * brightness);
    const float* ip = rgb.data() + c * hw;
    float* op = out.data() + c * hw;
    for (int64_t i = 0; i < hw; ++i)
      op[i] = static_cast<float>(std::clamp(ip[i] * inv, 0.0, 1.0));
  }
  return out;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
  HEXB_CHECK(img.rank() == 3, "gaussian_blur: expected (C,H,W), got " << shape_str(img.shape()));
  if (sigma < 1e-8) return img.clone();
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double ksum = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    k[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
    ksum += k[d + radius];
  }
  for (double& v : k) v /= ksum;

  Tensor out(img.shape());
  std::vector<float> tmp(static_cast<size_t>(H) * W);
  for (int c = 0; c < C; ++c) {
    const float* ip = img.data() + static_cast<int64_t>(c) * H * W;
    float* op = out.data() + static_cast<int64_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d)
          acc += k[d + radius] * ip[y * W + std::clamp(x + d, 0, W - 1)];
        tmp[y * W + x] = static_cast<float>(acc);
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d)
          acc += k[d + radius] * tmp[std::clamp(y + d, 0, H - 1) * W + x];
        op[y * W + x] = static_cast<float>(acc);
      }
  }
  return out;
}

Tensor translate_image(const Tensor& img, double dx, double dy) {
  HEXB_CHECK(img.rank() == 3, "translate: expected (C,H,W), got " << shape_str(img.shape()));
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor out(img.shape());
  for (int c = 0; c < C; ++c) {
    const float* ip = img.data() + static_cast<int64_t>(c) * H * W;
    float* op = out.data() + static_cast<int64_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double sx = std::clamp(x - dx, 0.0, static_cast<double>(W - 1));
        const double sy = std::clamp(y - dy, 0.0, static_cast<double>(H - 1));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, W - 1);
        const int y1 = std::min(y0 + 1, H - 1);
        const double wx = sx - x0, wy = sy - y0;
        op[y * W + x] = static_cast<float>((1 - wy) * ((1 - wx) * ip[y0 * W + x0] + wx * ip[y0 * W + x1]) +
                                           wy * ((1 - wx) * ip[y1 * W + x0] + wx * ip[y1 * W + x1]));
      }
  }
  return out;
}

Tensor box_downscale(const Tensor& img, int factor) {
  HEXB_CHECK(img.rank() == 3, "box_downscale: expected (C,H,W), got " << shape_str(img.shape()));
  HEXB_CHECK(factor >= 1, "box_downscale: bad factor " << factor);
  if (factor == 1) return img.clone();
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  HEXB_CHECK(H % factor == 0 && W % factor == 0,
             "box_downscale: dims " << H << "x" << W << " not divisible by " << factor);
  const int OH = H / factor, OW = W / factor;
  Tensor out({C, OH, OW});
  const double inv = 1.0 / (factor * factor);
  for (int c = 0; c < C; ++c) {
    const float* ip = img.data() + static_cast<int64_t>(c) * H * W;
    float* op = out.data() + static_cast<int64_t>(c) * OH * OW;
    for (int y = 0; y < OH; ++y)
      for (int x = 0; x < OW; ++x) {
        double acc = 0.0;
        for (int j = 0; j < factor; ++j)
          for (int i = 0; i < factor; ++i) acc += ip[(y * factor + j) * W + (x * factor + i)];
        op[y * OW + x] = static_cast<float>(acc * inv);
      }
  }
  return out;
}

namespace {

double cubic_weight(double t) {
  // Catmull-Rom
  const double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

}  // namespace

Tensor bicubic_resize_image(const Tensor& img, int out_h, int out_w) {
  HEXB_CHECK(img.rank() == 3, "bicubic: expected (C,H,W), got " << shape_str(img.shape()));
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor out({C, out_h, out_w});
  const double ry = static_cast<double>(H) / out_h;
  const double rx = static_cast<double>(W) / out_w;
  for (int c = 0; c < C; ++c) {
    const float* ip = img.data() + static_cast<int64_t>(c) * H * W;
    float* op = out.data() + static_cast<int64_t>(c) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const double sy = (y + 0.5) * ry - 0.5;
      const int y0 = static_cast<int>(std::floor(sy));
      for (int x = 0; x < out_w; ++x) {
        const double sx = (x + 0.5) * rx - 0.5;
        const int x0 = static_cast<int>(std::floor(sx));
        double acc = 0.0, wsum = 0.0;
        for (int j = -1; j <= 2; ++j) {
          const int yy = std::clamp(y0 + j, 0, H - 1);
          const double wy = cubic_weight(sy - (y0 + j));
          for (int i = -1; i <= 2; ++i) {
            const int xx = std::clamp(x0 + i, 0, W - 1);
            const double w = wy * cubic_weight(sx - (x0 + i));
            acc += w * ip[yy * W + xx];
            wsum += w;
          }
        }
        op[y * out_w + x] = static_cast<float>(acc / wsum);
      }
    }
  }
  return out;
}

BurstSample synthesize_burst(const Tensor& gt_rgb, const SynthConfig& cfg, uint64_t seed) {
  cfg.validate();
  HEXB_CHECK(gt_rgb.rank() == 3 && gt_rgb.dim(0) == 3,
             "synthesize_burst: expected (3,H,W) gt, got " << shape_str(gt_rgb.shape()));
  const int GH = gt_rgb.dim(1), GW = gt_rgb.dim(2);
  HEXB_CHECK(GH % 16 == 0 && GW % 16 == 0,
             "synthesize_burst: gt dims " << GH << "x" << GW << " must be divisible by 16");
  HEXB_CHECK(GH % cfg.sr_scale == 0 && GW % cfg.sr_scale == 0,
             "synthesize_burst: gt dims not divisible by sr_scale " << cfg.sr_scale);

  Rng rng(seed);
  BurstSample s;
  s.seed = seed;
  s.gt = gt_rgb.clone();
  // Per-burst degradation draws come first, in a fixed order.
  s.sigma = cfg.sigma_max <= 0.0 ? 0.0 : rng.uniform(cfg.sigma_min, cfg.sigma_max);
  s.shot = cfg.shot_max <= 0.0 ? 0.0 : rng.log_uniform(cfg.shot_min, cfg.shot_max);
  s.read = cfg.read_max <= 0.0 ? 0.0 : rng.log_uniform(cfg.read_min, cfg.read_max);
  s.wb_red = rng.uniform(cfg.wb_red_min, cfg.wb_red_max);
  s.wb_blue = rng.uniform(cfg.wb_blue_min, cfg.wb_blue_max);
  s.brightness = rng.uniform(cfg.bright_min, cfg.bright_max);
  s.shifts.assign(static_cast<size_t>(cfg.frames), {0.0, 0.0});
  for (int i = 1; i < cfg.frames; ++i) {
    s.shifts[i][0] = rng.uniform(-cfg.max_shift, cfg.max_shift);
    s.shifts[i][1] = rng.uniform(-cfg.max_shift, cfg.max_shift);
  }

  const std::array<double, 3> gains = {s.wb_red, 1.0, s.wb_blue};
  for (int i = 0; i < cfg.frames; ++i) {
    Tensor frame_rgb = s.shifts[i][0] == 0.0 && s.shifts[i][1] == 0.0
                           ? gt_rgb.clone()
                           : translate_image(gt_rgb, s.shifts[i][0] * cfg.sr_scale,
                                             s.shifts[i][1] * cfg.sr_scale);
    frame_rgb = box_downscale(frame_rgb, cfg.sr_scale);
    frame_rgb = gaussian_blur(frame_rgb, s.sigma);
    frame_rgb = unprocess(frame_rgb, gains, s.brightness);
    Tensor raw = mosaic_hexadeca(frame_rgb);
    if (s.shot > 0.0 || s.read > 0.0) {
      for (int64_t p = 0; p < raw.numel(); ++p) {
        const double clean = raw.data()[p];
        const double var = s.shot * clean + s.read;
        const double noisy = clean + std::sqrt(std::max(var, 0.0)) * rng.normal();
        raw.data()[p] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
      }
    }
    HexadecaRaw hr = make_hexadeca_raw(std::move(raw));
    hr.shot = static_cast<float>(s.shot);
    hr.read = static_cast<float>(s.read);
    s.frames.push_back(std::move(hr));
  }
  return s;
}

namespace {

// Center crop to dims divisible by `mult`, optionally capping the size.
Tensor center_crop(const Tensor& img, int mult, int max_dim) {
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  int ch = (H / mult) * mult, cw = (W / mult) * mult;
  if (max_dim > 0) {
    ch = std::min(ch, (max_dim / mult) * mult);
    cw = std::min(cw, (max_dim / mult) * mult);
  }
  HEXB_CHECK_RUNTIME(ch >= mult && cw >= mult,
                     "dataset: image " << H << "x" << W << " smaller than one " << mult
                                       << "-pixel tile");
  const int oy = (H - ch) / 2, ox = (W - cw) / 2;
  Tensor out({C, ch, cw});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < ch; ++y)
      std::copy(img.data() + (static_cast<int64_t>(c) * H + y + oy) * W + ox,
                img.data() + (static_cast<int64_t>(c) * H + y + oy) * W + ox + cw,
                out.data() + (static_cast<int64_t>(c) * ch + y) * cw);
  return out;
}

}  // namespace

int dataset_synthesize(const std::string& input_dir, const std::string& output_dir,
                       const SynthConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  HEXB_CHECK_RUNTIME(fs::is_directory(input_dir), "dataset: input dir not found: " << input_dir);
  std::vector<std::string> inputs;
  for (const auto& e : fs::directory_iterator(input_dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".ppm") inputs.push_back(e.path().string());
  }
  std::sort(inputs.begin(), inputs.end());
  fs::create_directories(output_dir);

  // gt dims must give model-ready raw frames: raw divisible by 16.
  const int mult = 16 * cfg.sr_scale;

  struct Result {
    json entry;
    bool ok = false;
  };
  std::vector<Result> results(inputs.size());

  parallel_for(static_cast<int64_t>(inputs.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t k = lo; k < hi; ++k) {
      const uint64_t item_seed = cfg.seed + static_cast<uint64_t>(k);
      json entry;
      try {
        Tensor img = load_image_linear(inputs[k]);
        Tensor gt = center_crop(img, mult, cfg.max_dim);
        BurstSample s = synthesize_burst(gt, cfg, item_seed);
        char dirname[32];
        std::snprintf(dirname, sizeof(dirname), "burst_%05d", static_cast<int>(k));
        const fs::path bdir = fs::path(output_dir) / dirname;
        fs::create_directories(bdir);
        write_ftr((bdir / "gt.ftr").string(), s.gt);
        entry["gt"] = std::string(dirname) + "/gt.ftr";
        entry["frames"] = json::array();
        entry["shifts"] = json::array();
        for (size_t i = 0; i < s.frames.size(); ++i) {
          char fname[32];
          std::snprintf(fname, sizeof(fname), "frame_%02d.ftr", static_cast<int>(i));
          write_ftr((bdir / fname).string(), s.frames[i].values);
          entry["frames"].push_back(std::string(dirname) + "/" + fname);
          entry["shifts"].push_back({s.shifts[i][0], s.shifts[i][1]});
        }
        entry["sigma"] = s.sigma;
        entry["shot"] = s.shot;
        entry["read"] = s.read;
        entry["seed"] = item_seed;
        entry["source"] = fs::path(inputs[k]).filename().string();
        results[k] = {entry, true};
      } catch (const std::exception& ex) {
        entry = {{"skipped", fs::path(inputs[k]).filename().string()}, {"error", ex.what()}};
        results[k] = {entry, false};
      }
    }
  });

  json manifest = json::array();
  int written = 0;
  for (auto& r : results) {
    manifest.push_back(std::move(r.entry));
    written += r.ok ? 1 : 0;
  }
  atomic_write_text((fs::path(output_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return written;
}

Tensor make_test_image(int width, int height, uint64_t seed) {
  Rng rng(seed);
  Tensor img({3, height, width});
  // smooth gradient background with a random orientation per channel
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.25, 0.65);
    gx[c] = rng.uniform(-0.3, 0.3) / width;
    gy[c] = rng.uniform(-0.3, 0.3) / height;
  }
  for (int c = 0; c < 3; ++c) {
    float* p = img.data() + static_cast<int64_t>(c) * height * width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        p[y * width + x] = static_cast<float>(base[c] + gx[c] * x + gy[c] * y);
  }
  // soft-edged rectangles and disks
  const int shapes = 6 + static_cast<int>(rng.uniform_int(0, 4));
  for (int s = 0; s < shapes; ++s) {
    const bool disk = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.1, 0.9) * width;
    const double cy = rng.uniform(0.1, 0.9) * height;
    const double rx = rng.uniform(0.05, 0.25) * width;
    const double ry = disk ? rx : rng.uniform(0.05, 0.25) * height;
    double col[3] = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    const double soft = rng.uniform(0.8, 2.5);
    for (int y = std::max(0, static_cast<int>(cy - ry - 4));
         y < std::min(height, static_cast<int>(cy + ry + 5)); ++y)
      for (int x = std::max(0, static_cast<int>(cx - rx - 4));
           x < std::min(width, static_cast<int>(cx + rx + 5)); ++x) {
        double d;
        if (disk) {
          d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) - rx;
        } else {
          d = std::max(std::abs(x - cx) - rx, std::abs(y - cy) - ry);
        }
        const double a = 1.0 / (1.0 + std::exp(d / soft));
        if (a < 1e-3) continue;
        for (int c = 0; c < 3; ++c) {
          float* p = img.data() + (static_cast<int64_t>(c) * height + y) * width + x;
          *p = static_cast<float>((1.0 - a) * *p + a * col[c]);
        }
      }
  }
  // low-amplitude texture
  const double fx = rng.uniform(0.05, 0.3), fy = rng.uniform(0.05, 0.3);
  const double ph = rng.uniform(0.0, 6.28);
  for (int c = 0; c < 3; ++c) {
    float* p = img.data() + static_cast<int64_t>(c) * height * width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double v = p[y * width + x] + 0.03 * std::sin(fx * x + fy * y + ph + c);
        p[y * width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return img;
}

}  // namespace hexburst
