#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hexburst {

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }
[[noreturn]] inline void fail_runtime(const std::string& msg) { throw std::runtime_error(msg); }

// Validation check: throws std::invalid_argument with a streamed message.
#define HEXB_CHECK(cond, ...)                                  \
  do {                                                         \
    if (!(cond)) {                                             \
      std::ostringstream o_;                                   \
      o_ << __VA_ARGS__;                                       \
      ::hexburst::fail(o_.str());                              \
    }                                                          \
  } while (0)

#define HEXB_CHECK_RUNTIME(cond, ...)                          \
  do {                                                         \
    if (!(cond)) {                                             \
      std::ostringstream o_;                                   \
      o_ << __VA_ARGS__;                                       \
      ::hexburst::fail_runtime(o_.str());                      \
    }                                                          \
  } while (0)

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Deterministic RNG. mt19937_64's output sequence is pinned by the standard;
// the distributions are hand-rolled because the std:: ones are not.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  // In [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hexburst
