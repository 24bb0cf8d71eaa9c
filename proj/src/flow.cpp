#include "hexburst/flow.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "hexburst/ftr.hpp"
#include "hexburst/losses.hpp"
#include "hexburst/nn_ops.hpp"
#include "hexburst/threadpool.hpp"

namespace hexburst {

using nlohmann::json;

namespace {

constexpr int kPatchRadius = 4;  // 9x9 SAD patches
const int kStackChannels[6] = {4, 8, 16, 16, 8, 2};

Tensor kaiming_conv(int oc, int ic, int k, Rng& rng) {
  Tensor w({oc, ic, k, k});
  const double std = std::sqrt(2.0 / (ic * k * k));
  for (int64_t i = 0; i < w.numel(); ++i)
    w.data()[i] = static_cast<float>(rng.normal() * std);
  return w;
}

std::string level_name(int level, int conv, const char* kind) {
  return "l" + std::to_string(level) + ".c" + std::to_string(conv) + "." + kind;
}

}  // namespace

FlowNetParams init_flownet(int levels, uint64_t seed, bool zero_init_last) {
  HEXB_CHECK(levels >= 1, "flownet: levels must be >= 1, got " << levels);
  FlowNetParams net;
  net.levels = levels;
  Rng rng(seed);
  for (int l = 0; l < levels; ++l) {
    for (int c = 0; c < 5; ++c) {
      const int ic = kStackChannels[c], oc = kStackChannels[c + 1];
      Tensor w = (c == 4 && zero_init_last) ? Tensor({oc, ic, 3, 3}) : kaiming_conv(oc, ic, 3, rng);
      net.params[level_name(l, c, "w")] = std::move(w);
      net.params[level_name(l, c, "b")] = Tensor({oc});
    }
  }
  return net;
}

void save_flownet(const std::string& dir, const FlowNetParams& net) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json meta;
  meta["levels"] = net.levels;
  meta["params"] = json::object();
  for (const auto& [name, t] : net.params) {
    meta["params"][name] = t.shape();
    write_ftr((fs::path(dir) / (name + ".ftr")).string(), t);
  }
  atomic_write_text((fs::path(dir) / "flownet.json").string(), meta.dump(2) + "\n");
}

FlowNetParams load_flownet(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "flownet.json");
  HEXB_CHECK_RUNTIME(f.good(), "flownet: cannot open " << dir << "/flownet.json");
  json meta = json::parse(f);
  FlowNetParams net;
  net.levels = meta.at("levels").get<int>();
  for (const auto& [name, shape] : meta.at("params").items()) {
    Tensor t = read_ftr((fs::path(dir) / (name + ".ftr")).string());
    HEXB_CHECK_RUNTIME(t.shape() == shape.get<std::vector<int>>(),
                       "flownet: shape mismatch for " << name);
    net.params[name] = std::move(t);
  }
  return net;
}

Tensor raw_to_flowinput(const HexadecaRaw& raw) {
  const int H = raw.height(), W = raw.width();
  auto lifted = reshape(raw.values, {1, 1, H, W});
  auto m = block_mean(lifted, raw.layout.block);
  return reshape(m, {H / raw.layout.block, W / raw.layout.block});
}

FlowField block_match(const Tensor& ref, const Tensor& other, int max_disp) {
  HEXB_CHECK(ref.rank() == 2 && other.rank() == 2,
             "block_match: expected (H,W) tensors, got " << shape_str(ref.shape()) << " and "
                                                         << shape_str(other.shape()));
  check_same_shape(ref, other, "block_match");
  HEXB_CHECK(max_disp >= 0, "block_match: max_disp must be >= 0, got " << max_disp);
  const int H = ref.dim(0), W = ref.dim(1);
  FlowField out;
  out.data = Tensor({2, H, W});
  const float* rp = ref.data();
  const float* op = other.data();
  float* fx = out.data.data();
  float* fy = out.data.data() + static_cast<int64_t>(H) * W;

  parallel_for(H, [&](int64_t y0, int64_t y1) {
    for (int y = static_cast<int>(y0); y < y1; ++y) {
      for (int x = 0; x < W; ++x) {
        int best_dx = 0, best_dy = 0;
        double best_sad = -1.0;
        int best_d2 = 0;
        for (int dy = -max_disp; dy <= max_disp; ++dy) {
          for (int dx = -max_disp; dx <= max_disp; ++dx) {
            double sad = 0.0;
            for (int j = -kPatchRadius; j <= kPatchRadius; ++j) {
              const int ry = std::clamp(y + j, 0, H - 1);
              const int oy = std::clamp(y + dy + j, 0, H - 1);
              for (int i = -kPatchRadius; i <= kPatchRadius; ++i) {
                const int rx = std::clamp(x + i, 0, W - 1);
                const int ox = std::clamp(x + dx + i, 0, W - 1);
                sad += std::abs(static_cast<double>(op[oy * W + ox]) - rp[ry * W + rx]);
              }
            }
            const int d2 = dy * dy + dx * dx;
            const bool better =
                best_sad < 0.0 || sad < best_sad ||
                (sad == best_sad && (d2 < best_d2 || (d2 == best_d2 && (dy < best_dy ||
                 (dy == best_dy && dx < best_dx)))));
            if (better) {
              best_sad = sad;
              best_d2 = d2;
              best_dy = dy;
              best_dx = dx;
            }
          }
        }
        fx[y * W + x] = static_cast<float>(best_dx);
        fy[y * W + x] = static_cast<float>(best_dy);
      }
    }
  });
  return out;
}

namespace {

Tensor flow_level_stack(const Tensor& input, const FlowNetParams& net, int level) {
  Tensor x = input;
  for (int c = 0; c < 5; ++c) {
    const auto& w = net.params.at(level_name(level, c, "w"));
    const auto& b = net.params.at(level_name(level, c, "b"));
    x = conv2d(x, w, b, 1, 1, 1, 1);
    if (c < 4) x = relu(x);
  }
  return x;
}

}  // namespace

FlowField estimate_flow(const Tensor& ref, const Tensor& other, const FlowNetParams& net) {
  HEXB_CHECK(ref.rank() == 2 && other.rank() == 2,
             "estimate_flow: expected (H,W) tensors, got " << shape_str(ref.shape()) << " and "
                                                           << shape_str(other.shape()));
  check_same_shape(ref, other, "estimate_flow");
  const int H = ref.dim(0), W = ref.dim(1);
  const int div = 1 << (net.levels - 1);
  HEXB_CHECK(H % div == 0 && W % div == 0, "estimate_flow: dims " << H << "x" << W
                                               << " not divisible by 2^(levels-1)=" << div);

  std::vector<Tensor> ref_pyr{reshape(ref, {1, 1, H, W})};
  std::vector<Tensor> oth_pyr{reshape(other, {1, 1, H, W})};
  for (int l = 1; l < net.levels; ++l) {
    ref_pyr.push_back(gauss_down2(ref_pyr.back()));
    oth_pyr.push_back(gauss_down2(oth_pyr.back()));
  }

  Tensor flow;
  for (int l = net.levels - 1; l >= 0; --l) {
    const int lh = ref_pyr[l].dim(2), lw = ref_pyr[l].dim(3);
    Tensor up = flow.defined() ? scale(bilinear_resize(flow, lh, lw), 2.0f)
                               : Tensor({1, 2, lh, lw});
    auto warped = bilinear_warp(oth_pyr[l], up);
    auto residual = flow_level_stack(concat_channels<float>({ref_pyr[l], warped, up}), net, l);
    flow = add(up, residual);
  }
  FlowField out;
  out.data = reshape(flow, {2, H, W});
  return out;
}

FlowField rescale_flow(const FlowField& flow, double factor) {
  HEXB_CHECK(factor > 0.0, "rescale_flow: factor must be positive, got " << factor);
  const int H = flow.height(), W = flow.width();
  const double th = H * factor, tw = W * factor;
  const int oh = static_cast<int>(std::lround(th));
  const int ow = static_cast<int>(std::lround(tw));
  HEXB_CHECK(std::abs(th - oh) < 1e-9 && std::abs(tw - ow) < 1e-9,
             "rescale_flow: factor " << factor << " gives non-integral target for " << H << "x"
                                     << W);
  FlowField out;
  if (oh == H && ow == W && factor == 1.0) {
    out.data = flow.data;
  } else {
    auto resized = bilinear_resize(reshape(flow.data, {1, 2, H, W}), oh, ow);
    out.data = reshape(scale(resized, static_cast<float>(factor)), {2, oh, ow});
  }
  out.scale = flow.scale * factor;
  return out;
}

double epe(const FlowField& flow, const FlowField& gt_flow, int margin) {
  HEXB_CHECK(flow.data.shape() == gt_flow.data.shape(),
             "epe: shape mismatch " << shape_str(flow.data.shape()) << " vs "
                                    << shape_str(gt_flow.data.shape()));
  HEXB_CHECK(flow.scale == gt_flow.scale,
             "epe: scale mismatch " << flow.scale << " vs " << gt_flow.scale);
  const int H = flow.height(), W = flow.width();
  HEXB_CHECK(2 * margin < H && 2 * margin < W, "epe: margin " << margin << " leaves no interior");
  const float* ax = flow.data.data();
  const float* ay = ax + static_cast<int64_t>(H) * W;
  const float* bx = gt_flow.data.data();
  const float* by = bx + static_cast<int64_t>(H) * W;
  double acc = 0.0;
  int64_t n = 0;
  for (int y = margin; y < H - margin; ++y)
    for (int x = margin; x < W - margin; ++x) {
      const double dx = static_cast<double>(ax[y * W + x]) - bx[y * W + x];
      const double dy = static_cast<double>(ay[y * W + x]) - by[y * W + x];
      acc += std::sqrt(dx * dx + dy * dy);
      ++n;
    }
  return acc / static_cast<double>(n);
}

FlowTrainResult photometric_finetune(const FlowNetParams& net, const std::vector<FlowPair>& pairs,
                                     int steps, double lr, uint64_t seed) {
  HEXB_CHECK(!pairs.empty(), "photometric_finetune: empty dataset");
  HEXB_CHECK(steps >= 0 && lr > 0.0, "photometric_finetune: bad steps/lr");

  FlowTrainResult result;
  result.net.levels = net.levels;
  for (const auto& [name, t] : net.params) {
    result.net.params[name] = t.clone();
    result.net.params[name].set_requires_grad(true);
  }
  if (steps == 0) return result;

  auto snapshot = [&] {
    ParamMap copy;
    for (const auto& [name, t] : result.net.params) copy[name] = t.clone();
    return copy;
  };
  ParamMap last_good = snapshot();

  AdamW::Config ocfg;
  ocfg.lr = static_cast<float>(lr);
  AdamW opt(ocfg);
  Rng rng(seed);

  for (int step = 0; step < steps; ++step) {
    const auto& pair = pairs[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pairs.size()) - 1))];
    double loss_val;
    {
      Tape tape;
      auto flow = estimate_flow(pair.ref, pair.other, result.net);
      const int H = flow.height(), W = flow.width();
      auto flow4 = reshape(flow.data, {1, 2, H, W});
      auto warped = bilinear_warp(reshape(pair.other, {1, 1, H, W}), flow4);
      auto photo = charbonnier_loss(warped, reshape(pair.ref, {1, 1, H, W}), 1e-3f);
      auto smooth = smoothness_loss(flow4, 1e-3f);
      auto loss = add(photo, scale(smooth, 0.1f));
      loss_val = loss.item();
      if (!std::isfinite(loss_val)) {
        // divergence: report and fall back to the last good parameters
        result.net.params = std::move(last_good);
        result.aborted = true;
        return result;
      }
      backward(loss);
    }
    opt.step(result.net.params);
    zero_grads(result.net.params);
    last_good = snapshot();
    result.curve.push_back({step, loss_val});
  }
  return result;
}

}  // namespace hexburst
