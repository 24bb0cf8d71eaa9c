#pragma once

#include <map>
#include <string>

#include "hexburst/tensor.hpp"

namespace hexburst {

template <typename T>
using ParamMapT = std::map<std::string, TensorT<T>>;

using ParamMap = ParamMapT<float>;

// Decoupled weight decay Adam (AdamW). Moment buffers are keyed by parameter
// name; the step counter is shared.
template <typename T>
class AdamWT {
 public:
  struct Config {
    T lr = static_cast<T>(1e-4);
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
    T weight_decay = static_cast<T>(0);
  };

  explicit AdamWT(Config cfg = {}) : cfg_(cfg) {}

  const Config& config() const { return cfg_; }
  int64_t step_count() const { return step_; }
  void set_lr(T lr) { cfg_.lr = lr; }

  // One update over all parameters. A non-finite gradient rejects the whole
  // step before any parameter is touched.
  void step(ParamMapT<T>& params) {
    for (auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      for (T g : p.grad()) {
        HEXB_CHECK_RUNTIME(std::isfinite(static_cast<double>(g)),
                           "adamw: non-finite gradient in '" << name << "', step rejected");
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
    for (auto& [name, p] : params) {
      auto& slot = slots_[name];
      if (slot.m.empty()) {
        slot.m.assign(p.numel(), T(0));
        slot.v.assign(p.numel(), T(0));
      }
      HEXB_CHECK(static_cast<int64_t>(slot.m.size()) == p.numel(),
                 "adamw: state size " << slot.m.size() << " != param '" << name << "' size "
                                      << p.numel());
      T* pd = p.data();
      const bool has_g = p.has_grad();
      const T* gd = has_g ? p.grad().data() : nullptr;
      for (int64_t i = 0; i < p.numel(); ++i) {
        const T g = has_g ? gd[i] : T(0);
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1 - cfg_.beta1) * g;
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1 - cfg_.beta2) * g * g;
        const double mhat = static_cast<double>(slot.m[i]) / bc1;
        const double vhat = static_cast<double>(slot.v[i]) / bc2;
        double upd = mhat / (std::sqrt(vhat) + static_cast<double>(cfg_.eps)) +
                     static_cast<double>(cfg_.weight_decay) * static_cast<double>(pd[i]);
        pd[i] -= static_cast<T>(static_cast<double>(cfg_.lr) * upd);
      }
    }
  }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  Config cfg_;
  std::map<std::string, Slot> slots_;
  int64_t step_ = 0;
};

using AdamW = AdamWT<float>;

template <typename T>
void zero_grads(ParamMapT<T>& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

}  // namespace hexburst
