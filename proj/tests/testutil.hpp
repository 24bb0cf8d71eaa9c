#pragma once

// Test-side oracles and helpers. Everything here is deliberately independent
// of the library kernels it checks: plain nested loops, no shared code paths.

#include <cmath>
#include <functional>
#include <vector>

#include "hexburst/common.hpp"
#include "hexburst/tensor.hpp"

namespace testutil {

template <typename T>
hexburst::TensorT<T> rand_tensor(std::vector<int> shape, hexburst::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  hexburst::TensorT<T> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Textbook cross-correlation, zero padding. Direct nested loops.
inline hexburst::TensorT<double> conv2d_ref(const hexburst::TensorT<double>& in,
                                            const hexburst::TensorT<double>& w,
                                            const hexburst::TensorT<double>& bias, int sh, int sw,
                                            int ph, int pw) {
  const int B = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int OC = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const int OH = (H + 2 * ph - KH) / sh + 1;
  const int OW = (W + 2 * pw - KW) / sw + 1;
  hexburst::TensorT<double> out({B, OC, OH, OW});
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < OC; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = bias.defined() ? bias.data()[oc] : 0.0;
          for (int ic = 0; ic < IC; ++ic)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int iy = oy * sh + ky - ph;
                const int ix = ox * sw + kx - pw;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += in.data()[((static_cast<int64_t>(b) * IC + ic) * H + iy) * W + ix] *
                       w.data()[((static_cast<int64_t>(oc) * IC + ic) * KH + ky) * KW + kx];
              }
          out.data()[((static_cast<int64_t>(b) * OC + oc) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

// Central finite differences against an already-computed analytic gradient.
// loss() must be a pure forward evaluation (no tape).
struct FdReport {
  double max_err = 0.0;     // worst |analytic - fd| over checked entries
  double max_rel = 0.0;     // worst relative error
  int64_t checked = 0;
};

inline FdReport fd_check(hexburst::TensorT<double>& param, const std::vector<double>& analytic,
                         const std::function<double()>& loss, double eps = 1e-5,
                         int64_t max_entries = -1) {
  FdReport rep;
  const int64_t n = param.numel();
  const int64_t limit = max_entries < 0 ? n : std::min(n, max_entries);
  for (int64_t i = 0; i < limit; ++i) {
    double* slot = param.data() + i;
    const double orig = *slot;
    *slot = orig + eps;
    const double lp = loss();
    *slot = orig - eps;
    const double lm = loss();
    *slot = orig;
    const double fd = (lp - lm) / (2.0 * eps);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double err = std::abs(a - fd);
    const double rel = err / std::max({std::abs(a), std::abs(fd), 1e-4});
    rep.max_err = std::max(rep.max_err, err);
    rep.max_rel = std::max(rep.max_rel, rel);
    ++rep.checked;
  }
  return rep;
}

}  // namespace testutil
