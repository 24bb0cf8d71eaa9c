#include "hexburst/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "hexburst/ftr.hpp"

namespace hexburst {

using nlohmann::json;

void ModelConfig::validate() const {
  const size_t L = enc_dim.size();
  HEXB_CHECK(L >= 1, "config: depth must be >= 1");
  HEXB_CHECK(dec_dim.size() == L && enc_nb.size() == L && dec_nb.size() == L,
             "config: enc_dim/dec_dim/enc_nb/dec_nb must all have length " << L);
  for (size_t i = 0; i < L; ++i) {
    HEXB_CHECK(enc_dim[i] > 0 && dec_dim[i] > 0 && enc_nb[i] > 0 && dec_nb[i] > 0,
               "config: all channel widths and block counts must be positive");
  }
  HEXB_CHECK(num_nonref >= 0, "config: num_nonref must be >= 0");
  HEXB_CHECK(sr_scale == 1 || sr_scale == 2,
             "config: sr_scale " << sr_scale << " unsupported (only x1/x2)");
}

int ModelConfig::head_stages() const {
  // total head upscale is 4 * sr_scale, in x2 pixel-shuffle stages
  return sr_scale == 2 ? 3 : 2;
}

ModelConfig preset_config(const std::string& name) {
  ModelConfig cfg;
  if (name == "s") {
    cfg.enc_dim = {32, 64, 128};
    cfg.dec_dim = {256, 128, 64};
    cfg.enc_nb = cfg.dec_nb = {2, 4, 8};
  } else if (name == "l") {
    cfg.enc_dim = {64, 128, 512};
    cfg.dec_dim = {512, 128, 64};
    cfg.enc_nb = cfg.dec_nb = {4, 8, 16};
  } else if (name == "tiny" || name == "tiny-s") {
    cfg.enc_dim = {8, 16, 32};
    cfg.dec_dim = {32, 16, 8};
    cfg.enc_nb = cfg.dec_nb = {1, 2, 2};
  } else if (name == "tiny-l") {
    cfg.enc_dim = {16, 32, 64};
    cfg.dec_dim = {64, 32, 16};
    cfg.enc_nb = cfg.dec_nb = {2, 2, 4};
  } else {
    fail("unknown config preset '" + name + "' (expected tiny, tiny-l, s or l)");
  }
  return cfg;
}

namespace {

json config_json(const ModelConfig& cfg) {
  return json{{"enc_dim", cfg.enc_dim}, {"dec_dim", cfg.dec_dim}, {"enc_nb", cfg.enc_nb},
              {"dec_nb", cfg.dec_nb},   {"num_nonref", cfg.num_nonref},
              {"sr_scale", cfg.sr_scale}};
}

ModelConfig config_parse(const json& j) {
  ModelConfig cfg;
  cfg.enc_dim = j.at("enc_dim").get<std::vector<int>>();
  cfg.dec_dim = j.at("dec_dim").get<std::vector<int>>();
  cfg.enc_nb = j.at("enc_nb").get<std::vector<int>>();
  cfg.dec_nb = j.at("dec_nb").get<std::vector<int>>();
  cfg.num_nonref = j.value("num_nonref", 3);
  cfg.sr_scale = j.value("sr_scale", 2);
  cfg.validate();
  return cfg;
}

}  // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(2); }

ModelConfig config_from_json_text(const std::string& text) {
  return config_parse(json::parse(text));
}

void for_each_param(const ModelConfig& cfg,
                    const std::function<void(const std::string&, const std::vector<int>&)>& fn) {
  cfg.validate();
  const int L = cfg.depth();
  const int N = cfg.num_nonref;

  fn("pre.w", {cfg.enc_dim[0], 1, 4, 4});
  fn("pre.b", {cfg.enc_dim[0]});

  auto rb = [&](const std::string& prefix, int channels, int count) {
    for (int k = 0; k < count; ++k) {
      const std::string p = prefix + ".rb" + std::to_string(k);
      fn(p + ".c1.w", {channels, channels, 3, 3});
      fn(p + ".c1.b", {channels});
      fn(p + ".c2.w", {channels, channels, 3, 3});
      fn(p + ".c2.b", {channels});
    }
  };

  for (const char* side : {"enc.ref", "enc.non"}) {
    for (int l = 0; l < L; ++l) {
      rb(std::string(side) + ".l" + std::to_string(l), cfg.enc_dim[l], cfg.enc_nb[l]);
      if (l < L - 1) {
        const std::string d = std::string(side) + ".down" + std::to_string(l);
        fn(d + ".w", {cfg.enc_dim[l + 1], cfg.enc_dim[l], 2, 2});
        fn(d + ".b", {cfg.enc_dim[l + 1]});
      }
    }
  }

  for (int l = 0; l < L; ++l) {
    const int out_c = cfg.dec_dim[L - 1 - l];
    const std::string p = "fuse.l" + std::to_string(l);
    fn(p + ".w", {out_c, (N + 1) * cfg.enc_dim[l], 1, 1});
    fn(p + ".b", {out_c});
  }

  for (int d = 0; d < L; ++d) {
    rb("dec.d" + std::to_string(d), cfg.dec_dim[d], cfg.dec_nb[L - 1 - d]);
    if (d < L - 1) {
      const std::string up = "dec.up" + std::to_string(d);
      fn(up + ".w", {4 * cfg.dec_dim[d + 1], cfg.dec_dim[d], 3, 3});
      fn(up + ".b", {4 * cfg.dec_dim[d + 1]});
      const std::string red = "dec.red" + std::to_string(d);
      fn(red + ".w", {cfg.dec_dim[d + 1], 2 * cfg.dec_dim[d + 1], 1, 1});
      fn(red + ".b", {cfg.dec_dim[d + 1]});
    }
  }

  const int c0 = cfg.dec_dim[L - 1];
  for (int s = 0; s < cfg.head_stages(); ++s) {
    const std::string p = "head.s" + std::to_string(s);
    fn(p + ".w", {4 * c0, c0, 3, 3});
    fn(p + ".b", {4 * c0});
  }
  fn("head.out.w", {3, c0, 3, 3});
  fn("head.out.b", {3});
}

int64_t param_count(const ModelConfig& cfg) {
  int64_t total = 0;
  for_each_param(cfg, [&](const std::string&, const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    total += n;
  });
  return total;
}

void save_checkpoint(const std::string& dir, const ParamMap& params, const ModelConfig& cfg,
                     int64_t step) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json meta;
  meta["config"] = config_json(cfg);
  meta["step"] = step;
  meta["params"] = json::object();
  for (const auto& [name, t] : params) {
    meta["params"][name] = t.shape();
    write_ftr((fs::path(dir) / (name + ".ftr")).string(), t);
  }
  atomic_write_text((fs::path(dir) / "checkpoint.json").string(), meta.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "checkpoint.json");
  HEXB_CHECK_RUNTIME(f.good(), "checkpoint: cannot open " << dir << "/checkpoint.json");
  json meta = json::parse(f);
  Checkpoint ck;
  ck.config = config_parse(meta.at("config"));
  ck.step = meta.value("step", 0);
  for (const auto& [name, shape] : meta.at("params").items()) {
    Tensor t = read_ftr((fs::path(dir) / (name + ".ftr")).string());
    HEXB_CHECK_RUNTIME(t.shape() == shape.get<std::vector<int>>(),
                       "checkpoint: shape mismatch for " << name << " in " << dir);
    ck.params[name] = std::move(t);
  }
  // every enumerated parameter must be present
  for_each_param(ck.config, [&](const std::string& name, const std::vector<int>& shape) {
    auto it = ck.params.find(name);
    HEXB_CHECK_RUNTIME(it != ck.params.end(), "checkpoint: missing parameter " << name);
    HEXB_CHECK_RUNTIME(it->second.shape() == shape,
                       "checkpoint: wrong shape for " << name << " in " << dir);
  });
  return ck;
}

}  // namespace hexburst
