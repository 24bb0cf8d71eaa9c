#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "hexburst/common.hpp"

namespace hexburst {

namespace detail {

template <typename T>
struct Storage {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};

template <typename T>
std::vector<T>& ensure_grad(const std::shared_ptr<Storage<T>>& s) {
  if (s->grad.empty()) s->grad.assign(s->data.size(), T(0));
  return s->grad;
}

}  // namespace detail

// N-D row-major float tensor. Copies share storage; op outputs are never
// mutated in place, so shared reads are safe.
template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;

  explicit TensorT(std::vector<int> shape, T fill = T(0)) {
    s_ = std::make_shared<detail::Storage<T>>();
    int64_t n = 1;
    for (int d : shape) {
      HEXB_CHECK(d > 0, "tensor: non-positive dim in shape " << shape_str(shape));
      n *= d;
    }
    s_->shape = std::move(shape);
    s_->data.assign(static_cast<size_t>(n), fill);
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }
  static TensorT full(std::vector<int> shape, T v) { return TensorT(std::move(shape), v); }

  static TensorT from(std::vector<int> shape, std::vector<T> values) {
    TensorT t(shape);
    HEXB_CHECK(static_cast<int64_t>(values.size()) == t.numel(),
               "tensor: " << values.size() << " values for shape " << shape_str(shape));
    t.s_->data = std::move(values);
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }
  const std::vector<int>& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  int dim(int i) const { return s_->shape[static_cast<size_t>(i)]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int d : s_->shape) n *= d;
    return n;
  }

  T* data() { return s_->data.data(); }
  const T* data() const { return s_->data.data(); }
  std::vector<T>& vec() { return s_->data; }
  const std::vector<T>& vec() const { return s_->data; }

  T item() const {
    HEXB_CHECK(numel() == 1, "item: tensor has shape " << shape_str(s_->shape));
    return s_->data[0];
  }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  TensorT& set_requires_grad(bool b) {
    s_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return s_ && !s_->grad.empty(); }
  const std::vector<T>& grad() const { return s_->grad; }
  std::vector<T>& grad() { return s_->grad; }
  void zero_grad() { s_->grad.clear(); }

  // Deep copy of the values (grad and tape state are not copied).
  TensorT clone() const {
    TensorT t;
    t.s_ = std::make_shared<detail::Storage<T>>();
    t.s_->shape = s_->shape;
    t.s_->data = s_->data;
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> t(s_->shape);
    for (size_t i = 0; i < s_->data.size(); ++i) t.data()[i] = static_cast<U>(s_->data[i]);
    return t;
  }

  bool all_finite() const {
    for (T v : s_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::shared_ptr<detail::Storage<T>> s_;
};

using Tensor = TensorT<float>;

// Define-by-run gradient tape. Constructing one makes it current for this
// thread; ops append nodes in execution order, which is already topological.
// backward() walks the record once in reverse and then consumes it.
template <typename T>
class TapeT {
 public:
  TapeT() {
    prev_ = current_;
    current_ = this;
  }
  ~TapeT() {
    if (current_ == this) current_ = prev_;
  }
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* current() { return current_; }

  void record(std::shared_ptr<detail::Storage<T>> out,
              std::function<void(const std::vector<T>&)> pull) {
    nodes_.push_back(Node{std::move(out), std::move(pull)});
  }

  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and pulls gradients back through the record.
  void backward(const TensorT<T>& loss) {
    HEXB_CHECK(loss.defined() && loss.numel() == 1,
               "backward: loss must be scalar, got shape "
                   << (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    detail::ensure_grad(loss.s_)[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->out->grad.empty()) it->pull(it->out->grad);
    }
    nodes_.clear();
  }

 private:
  struct Node {
    std::shared_ptr<detail::Storage<T>> out;
    std::function<void(const std::vector<T>&)> pull;
  };
  std::vector<Node> nodes_;
  TapeT* prev_ = nullptr;
  static thread_local TapeT* current_;
};

template <typename T>
thread_local TapeT<T>* TapeT<T>::current_ = nullptr;

using Tape = TapeT<float>;

namespace detail {

// Records the node when a tape is active and any input participates.
template <typename T, typename PullFn>
void maybe_record(TensorT<T>& out, bool any_input_grad, PullFn&& pull) {
  auto* tape = TapeT<T>::current();
  if (tape && any_input_grad) {
    out.set_requires_grad(true);
    tape->record(out.s_, std::forward<PullFn>(pull));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops and reductions
// ---------------------------------------------------------------------------

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  HEXB_CHECK(a.shape() == b.shape(),
             op << ": shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "add");
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  detail::maybe_record(out, a.requires_grad() || b.requires_grad(),
                       [as = a.s_, bs = b.s_](const std::vector<T>& g) {
                         if (as->requires_grad) {
                           auto& ga = detail::ensure_grad(as);
                           for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         }
                         if (bs->requires_grad) {
                           auto& gb = detail::ensure_grad(bs);
                           for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                         }
                       });
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "sub");
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  detail::maybe_record(out, a.requires_grad() || b.requires_grad(),
                       [as = a.s_, bs = b.s_](const std::vector<T>& g) {
                         if (as->requires_grad) {
                           auto& ga = detail::ensure_grad(as);
                           for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         }
                         if (bs->requires_grad) {
                           auto& gb = detail::ensure_grad(bs);
                           for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                         }
                       });
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "mul");
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  detail::maybe_record(out, a.requires_grad() || b.requires_grad(),
                       [as = a.s_, bs = b.s_](const std::vector<T>& g) {
                         if (as->requires_grad) {
                           auto& ga = detail::ensure_grad(as);
                           for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bs->data[i];
                         }
                         if (bs->requires_grad) {
                           auto& gb = detail::ensure_grad(bs);
                           for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * as->data[i];
                         }
                       });
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * s;
  detail::maybe_record(out, a.requires_grad(), [as = a.s_, s](const std::vector<T>& g) {
    auto& ga = detail::ensure_grad(as);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
  detail::maybe_record(out, a.requires_grad(), [as = a.s_](const std::vector<T>& g) {
    auto& ga = detail::ensure_grad(as);
    for (size_t i = 0; i < g.size(); ++i)
      if (as->data[i] > T(0)) ga[i] += g[i];
  });
  return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  double acc = 0.0;
  const T* pa = a.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(pa[i]);
  TensorT<T> out({1}, static_cast<T>(acc));
  detail::maybe_record(out, a.requires_grad(), [as = a.s_](const std::vector<T>& g) {
    auto& ga = detail::ensure_grad(as);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
  double acc = 0.0;
  const T* pa = a.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(pa[i]);
  TensorT<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
  detail::maybe_record(out, a.requires_grad(), [as = a.s_, n](const std::vector<T>& g) {
    auto& ga = detail::ensure_grad(as);
    T w = g[0] / static_cast<T>(n);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += w;
  });
  return out;
}

// Same data, new shape (row-major layout unchanged).
template <typename T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<int> shape) {
  TensorT<T> out(shape);
  HEXB_CHECK(out.numel() == x.numel(), "reshape: " << shape_str(x.shape()) << " -> "
                                                   << shape_str(shape) << " changes element count");
  std::copy(x.data(), x.data() + x.numel(), out.data());
  detail::maybe_record(out, x.requires_grad(), [xs = x.s_](const std::vector<T>& g) {
    auto& ga = detail::ensure_grad(xs);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

// Populates grads of all requires_grad tensors reachable from loss on the
// current tape, then consumes the tape.
template <typename T>
void backward(const TensorT<T>& loss) {
  auto* tape = TapeT<T>::current();
  HEXB_CHECK(tape != nullptr, "backward: no active tape on this thread");
  tape->backward(loss);
}

}  // namespace hexburst
