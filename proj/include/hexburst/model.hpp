#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hexburst/nn_ops.hpp"
#include "hexburst/optim.hpp"

namespace hexburst {

// Architecture hyperparameters. enc_dim/enc_nb/dec_nb are listed finest to
// deepest; dec_dim deepest to finest (matching the decoder's traversal).
struct ModelConfig {
  std::vector<int> enc_dim;
  std::vector<int> dec_dim;
  std::vector<int> enc_nb;
  std::vector<int> dec_nb;
  int num_nonref = 3;
  int sr_scale = 2;

  int depth() const { return static_cast<int>(enc_dim.size()); }
  void validate() const;
  // pixel-shuffle x2 stages in the head: H/4 -> sr_scale*H
  int head_stages() const;
};

// Named presets: "tiny" (CI scale), "tiny-l", "s" (LatentBurst-S), "l".
ModelConfig preset_config(const std::string& name);
std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json_text(const std::string& text);

// Enumerates every parameter (name, shape) this config instantiates.
void for_each_param(const ModelConfig& cfg,
                    const std::function<void(const std::string&, const std::vector<int>&)>& fn);
int64_t param_count(const ModelConfig& cfg);

// Kaiming fan-in init, zero biases. Residual-branch output convs are
// zero-initialized unless disabled (property tests disable it so every
// branch carries gradient from step 0).
template <typename T>
ParamMapT<T> init_model_params(const ModelConfig& cfg, uint64_t seed,
                               bool zero_init_residual = true);

// --- forward pipeline (all differentiable; batched NCHW tensors) ---

// (B,1,H,W) raw -> (B,enc_dim[0],H/4,W/4) via the stride-4 4x4 conv.
template <typename T>
TensorT<T> preprocess(const TensorT<T>& raw, const ParamMapT<T>& params, const ModelConfig& cfg);

// Residual-block pyramid; level features are captured before downsampling.
// Reference and non-reference frames use disjoint parameter sets.
template <typename T>
std::vector<TensorT<T>> encode(const TensorT<T>& feat, const ParamMapT<T>& params,
                               const ModelConfig& cfg, bool is_reference);

// Flows arrive at 1/4 scale; level l uses them rescaled by 2^-l. Warped
// non-reference features are concatenated with the reference and fused by a
// 1x1 conv to the decoder width of that level.
template <typename T>
std::vector<TensorT<T>> align_fuse(const std::vector<TensorT<T>>& ref_pyr,
                                   const std::vector<std::vector<TensorT<T>>>& nonref_pyrs,
                                   const std::vector<TensorT<T>>& flows,
                                   const ParamMapT<T>& params, const ModelConfig& cfg);

// UNet-style decoder: RBs at each depth, conv+pixel-shuffle upsampling,
// finer fused features merged by concat + 1x1 reduction.
template <typename T>
TensorT<T> decode(const std::vector<TensorT<T>>& fused, const ParamMapT<T>& params,
                  const ModelConfig& cfg);

// Three (conv to 4C, pixel-shuffle x2) stages then a 3x3 conv to RGB.
template <typename T>
TensorT<T> upsample_head(const TensorT<T>& feat, const ParamMapT<T>& params,
                         const ModelConfig& cfg);

// frames: N+1 tensors (B,1,H,W), index 0 = reference; flows: N tensors
// (B,2,H/4,W/4). Returns (B,3,sr*H,sr*W).
template <typename T>
TensorT<T> model_forward(const std::vector<TensorT<T>>& frames,
                         const std::vector<TensorT<T>>& flows, const ParamMapT<T>& params,
                         const ModelConfig& cfg);

// --- checkpoints (FTR per parameter + checkpoint.json) ---

struct Checkpoint {
  ModelConfig config;
  ParamMap params;
  int64_t step = 0;
};

void save_checkpoint(const std::string& dir, const ParamMap& params, const ModelConfig& cfg,
                     int64_t step);
Checkpoint load_checkpoint(const std::string& dir);

// ---------------------------------------------------------------------------
// template implementations
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
TensorT<T> rb_stack(const TensorT<T>& x, const ParamMapT<T>& params, const std::string& prefix,
                    int count) {
  TensorT<T> h = x;
  for (int k = 0; k < count; ++k) {
    const std::string p = prefix + ".rb" + std::to_string(k);
    h = residual_block(h, params.at(p + ".c1.w"), params.at(p + ".c1.b"), params.at(p + ".c2.w"),
                       params.at(p + ".c2.b"));
  }
  return h;
}

[[noreturn]] inline void rethrow_stage(const char* stage, const std::exception& e) {
  fail(std::string(stage) + ": " + e.what());
}

}  // namespace detail

template <typename T>
ParamMapT<T> init_model_params(const ModelConfig& cfg, uint64_t seed, bool zero_init_residual) {
  cfg.validate();
  ParamMapT<T> params;
  // Enumeration order is the name-sorted map order either way; draws are
  // consumed in enumeration order for determinism.
  std::vector<std::pair<std::string, std::vector<int>>> entries;
  for_each_param(cfg, [&](const std::string& n, const std::vector<int>& s) {
    entries.emplace_back(n, s);
  });
  Rng rng(seed);
  for (auto& [name, shape] : entries) {
    TensorT<T> t(shape);
    const bool is_bias = shape.size() == 1;
    const bool is_res_out = name.find(".c2.w") != std::string::npos;
    if (!is_bias && !(zero_init_residual && is_res_out)) {
      int64_t fan_in = 1;
      for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      // gain 2 ahead of a ReLU (first residual conv), gain 1 elsewhere so
      // the linear conv chains in the head do not inflate variance
      const double gain = name.find(".c1.w") != std::string::npos ? 2.0 : 1.0;
      const double std = std::sqrt(gain / static_cast<double>(fan_in));
      for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<T>(rng.normal() * std);
    }
    params[name] = std::move(t);
  }
  return params;
}

template <typename T>
TensorT<T> preprocess(const TensorT<T>& raw, const ParamMapT<T>& params, const ModelConfig& cfg) {
  cfg.validate();
  HEXB_CHECK(raw.rank() == 4 && raw.dim(1) == 1,
             "preprocess: expected (B,1,H,W) raw, got " << shape_str(raw.shape()));
  // stride-4 blocks plus one 2x downsample per extra pyramid level
  const int div = 4 << (cfg.depth() - 1);
  HEXB_CHECK(raw.dim(2) % div == 0 && raw.dim(3) % div == 0,
             "preprocess: raw dims " << raw.dim(2) << "x" << raw.dim(3)
                                     << " must be divisible by " << div);
  try {
    return conv2d(raw, params.at("pre.w"), params.at("pre.b"), 4, 4, 0, 0);
  } catch (const std::invalid_argument& e) {
    detail::rethrow_stage("preprocess", e);
  }
}

template <typename T>
std::vector<TensorT<T>> encode(const TensorT<T>& feat, const ParamMapT<T>& params,
                               const ModelConfig& cfg, bool is_reference) {
  const int L = cfg.depth();
  HEXB_CHECK(feat.rank() == 4 && feat.dim(1) == cfg.enc_dim[0],
             "encode: expected (B," << cfg.enc_dim[0] << ",H/4,W/4), got "
                                    << shape_str(feat.shape()));
  const std::string side = is_reference ? "enc.ref" : "enc.non";
  std::vector<TensorT<T>> pyr;
  TensorT<T> x = feat;
  try {
    for (int l = 0; l < L; ++l) {
      x = detail::rb_stack(x, params, side + ".l" + std::to_string(l), cfg.enc_nb[l]);
      pyr.push_back(x);
      if (l < L - 1) {
        const std::string d = side + ".down" + std::to_string(l);
        x = conv2d(x, params.at(d + ".w"), params.at(d + ".b"), 2, 2, 0, 0);
      }
    }
  } catch (const std::invalid_argument& e) {
    detail::rethrow_stage("encode", e);
  }
  return pyr;
}

template <typename T>
std::vector<TensorT<T>> align_fuse(const std::vector<TensorT<T>>& ref_pyr,
                                   const std::vector<std::vector<TensorT<T>>>& nonref_pyrs,
                                   const std::vector<TensorT<T>>& flows,
                                   const ParamMapT<T>& params, const ModelConfig& cfg) {
  const int L = cfg.depth();
  const int N = cfg.num_nonref;
  HEXB_CHECK(static_cast<int>(nonref_pyrs.size()) == N,
             "align_fuse: got " << nonref_pyrs.size() << " non-reference pyramids, config says "
                                << N);
  HEXB_CHECK(static_cast<int>(flows.size()) == N,
             "align_fuse: got " << flows.size() << " flows for " << N << " non-reference frames");
  HEXB_CHECK(static_cast<int>(ref_pyr.size()) == L, "align_fuse: incomplete reference pyramid");
  for (int i = 0; i < N; ++i) {
    HEXB_CHECK(flows[i].rank() == 4 && flows[i].dim(1) == 2 &&
                   flows[i].dim(2) == ref_pyr[0].dim(2) && flows[i].dim(3) == ref_pyr[0].dim(3),
               "align_fuse: flow " << i << " shape " << shape_str(flows[i].shape())
                                   << " does not match level-0 features "
                                   << shape_str(ref_pyr[0].shape()));
  }
  std::vector<TensorT<T>> fused;
  try {
    for (int l = 0; l < L; ++l) {
      const int lh = ref_pyr[l].dim(2), lw = ref_pyr[l].dim(3);
      const T factor = static_cast<T>(1.0 / (1 << l));
      std::vector<TensorT<T>> groups{ref_pyr[l]};
      for (int i = 0; i < N; ++i) {
        TensorT<T> f = flows[i];
        if (l > 0) f = scale(bilinear_resize(f, lh, lw), factor);
        groups.push_back(bilinear_warp(nonref_pyrs[i][l], f));
      }
      const std::string p = "fuse.l" + std::to_string(l);
      fused.push_back(conv2d(concat_channels<T>(groups), params.at(p + ".w"),
                             params.at(p + ".b"), 1, 1, 0, 0));
    }
  } catch (const std::invalid_argument& e) {
    detail::rethrow_stage("align_fuse", e);
  }
  return fused;
}

template <typename T>
TensorT<T> decode(const std::vector<TensorT<T>>& fused, const ParamMapT<T>& params,
                  const ModelConfig& cfg) {
  const int L = cfg.depth();
  HEXB_CHECK(static_cast<int>(fused.size()) == L, "decode: incomplete fused pyramid");
  try {
    TensorT<T> x = fused[L - 1];  // deepest level
    for (int d = 0; d < L; ++d) {
      x = detail::rb_stack(x, params, "dec.d" + std::to_string(d), cfg.dec_nb[L - 1 - d]);
      if (d < L - 1) {
        const std::string up = "dec.up" + std::to_string(d);
        x = pixel_shuffle(conv2d(x, params.at(up + ".w"), params.at(up + ".b"), 1, 1, 1, 1), 2);
        const std::string red = "dec.red" + std::to_string(d);
        x = conv2d(concat_channels<T>({x, fused[L - 2 - d]}), params.at(red + ".w"),
                   params.at(red + ".b"), 1, 1, 0, 0);
      }
    }
    return x;
  } catch (const std::invalid_argument& e) {
    detail::rethrow_stage("decode", e);
  }
}

template <typename T>
TensorT<T> upsample_head(const TensorT<T>& feat, const ParamMapT<T>& params,
                         const ModelConfig& cfg) {
  try {
    TensorT<T> x = feat;
    for (int s = 0; s < cfg.head_stages(); ++s) {
      const std::string p = "head.s" + std::to_string(s);
      x = pixel_shuffle(conv2d(x, params.at(p + ".w"), params.at(p + ".b"), 1, 1, 1, 1), 2);
    }
    return conv2d(x, params.at("head.out.w"), params.at("head.out.b"), 1, 1, 1, 1);
  } catch (const std::invalid_argument& e) {
    detail::rethrow_stage("upsample_head", e);
  }
}

template <typename T>
TensorT<T> model_forward(const std::vector<TensorT<T>>& frames,
                         const std::vector<TensorT<T>>& flows, const ParamMapT<T>& params,
                         const ModelConfig& cfg) {
  cfg.validate();
  HEXB_CHECK(static_cast<int>(frames.size()) == cfg.num_nonref + 1,
             "forward: got " << frames.size() << " frames, config wants " << cfg.num_nonref + 1);
  for (const auto& f : frames)
    HEXB_CHECK(f.shape() == frames[0].shape(), "forward: frame shape mismatch "
                                                   << shape_str(f.shape()) << " vs "
                                                   << shape_str(frames[0].shape()));
  auto ref_pyr = encode(preprocess(frames[0], params, cfg), params, cfg, true);
  std::vector<std::vector<TensorT<T>>> nonref_pyrs;
  for (int i = 1; i <= cfg.num_nonref; ++i)
    nonref_pyrs.push_back(encode(preprocess(frames[i], params, cfg), params, cfg, false));
  auto fused = align_fuse(ref_pyr, nonref_pyrs, flows, params, cfg);
  return upsample_head(decode(fused, params, cfg), params, cfg);
}

}  // namespace hexburst
