// Copyright 2026 The HoHoNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hoho/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace hoho {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

namespace {

void check_shape_positive(const Shape& s) {
  for (int64_t d : s) {
    if (d <= 0) throw std::invalid_argument("tensor shape has non-positive extent " + shape_str(s));
  }
}

void check_same_dtype(const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) {
    throw std::invalid_argument("operands have different precision modes");
  }
}

template <typename F>
auto dispatch(DType dt, F&& f) {
  if (dt == DType::kF32) return f(float{});
  return f(double{});
}

thread_local Tape* g_active_tape = nullptr;

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

template <typename T>
void Tensor::check_type() const {
  if (!st_) throw std::runtime_error("access to undefined tensor");
  const bool want32 = std::is_same_v<T, float>;
  if ((st_->dtype == DType::kF32) != want32) {
    throw std::runtime_error("tensor element type mismatch");
  }
}
template void Tensor::check_type<float>() const;
template void Tensor::check_type<double>() const;

Tensor Tensor::zeros(Shape shape, DType dt) {
  check_shape_positive(shape);
  auto st = std::make_shared<detail::Storage>();
  st->dtype = dt;
  const size_t n = static_cast<size_t>(shape_numel(shape));
  if (dt == DType::kF32) st->f32.assign(n, 0.0f);
  else st->f64.assign(n, 0.0);
  return Tensor(std::move(st), std::move(shape));
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (dt == DType::kF32) std::fill(t.st_->f32.begin(), t.st_->f32.end(), static_cast<float>(value));
  else std::fill(t.st_->f64.begin(), t.st_->f64.end(), value);
  return t;
}

Tensor Tensor::from(const std::vector<double>& values, Shape shape, DType dt) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), dt);
  if (dt == DType::kF32) {
    for (size_t i = 0; i < values.size(); ++i) t.st_->f32[i] = static_cast<float>(values[i]);
  } else {
    std::copy(values.begin(), values.end(), t.st_->f64.begin());
  }
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
  return at(0);
}

double Tensor::at(int64_t flat_index) const {
  if (!st_ || flat_index < 0 || flat_index >= numel()) {
    throw std::out_of_range("tensor index out of range");
  }
  return st_->dtype == DType::kF32 ? static_cast<double>(st_->f32[static_cast<size_t>(flat_index)])
                                   : st_->f64[static_cast<size_t>(flat_index)];
}

void Tensor::set(int64_t flat_index, double value) {
  if (!st_ || flat_index < 0 || flat_index >= numel()) {
    throw std::out_of_range("tensor index out of range");
  }
  if (st_->dtype == DType::kF32) st_->f32[static_cast<size_t>(flat_index)] = static_cast<float>(value);
  else st_->f64[static_cast<size_t>(flat_index)] = value;
}

void Tensor::set_requires_grad(bool on) {
  if (!st_) throw std::runtime_error("set_requires_grad on undefined tensor");
  st_->tracked = on;
  if (on) st_->ensure_grad();
}

Tensor Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("tensor has no gradient buffer");
  Tensor g = Tensor::zeros(shape_, dtype());
  if (dtype() == DType::kF32) g.st_->f32 = st_->g32;
  else g.st_->f64 = st_->g64;
  return g;
}

Tensor Tensor::astype(DType dt) const {
  if (!st_) return Tensor();
  Tensor out = Tensor::zeros(shape_, dt);
  const int64_t n = numel();
  for (int64_t i = 0; i < n; ++i) out.set(i, at(i));
  return out;
}

Tensor Tensor::clone() const {
  if (!st_) return Tensor();
  Tensor out = Tensor::zeros(shape_, dtype());
  if (dtype() == DType::kF32) out.st_->f32 = st_->f32;
  else out.st_->f64 = st_->f64;
  return out;
}

Tensor Tensor::detach() const { return clone(); }

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

int64_t Tape::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
  return static_cast<int64_t>(nodes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.tracked()) {
    throw std::invalid_argument("loss is not tracked on the tape");
  }
  loss.storage()->ensure_grad();
  if (loss.dtype() == DType::kF32) loss.storage()->g32[0] = 1.0f;
  else loss.storage()->g64[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear() { nodes_.clear(); }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

Tape* active_tape() { return g_active_tape; }

namespace detail {

bool maybe_record(Tensor& out, const std::vector<const Tensor*>& inputs,
                  const std::function<std::function<void()>()>& make_backward_fn) {
  Tape* tape = g_active_tape;
  if (!tape) return false;
  bool any = false;
  for (const Tensor* t : inputs) any = any || (t && t->tracked());
  if (!any) return false;
  out.storage()->tracked = true;
  out.storage()->ensure_grad();
  out.set_node(tape->record(make_backward_fn()));
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace {

enum class BinMode { kSame, kScalar, kBias };

BinMode binary_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return BinMode::kSame;
  if (b.numel() == 1) return BinMode::kScalar;
  if (b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.dim(a.rank() - 1)) return BinMode::kBias;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

using Spec = detail::Storage;

// out = f(a, b) elementwise under the broadcast mode; fg/gb are the
// accumulation rules for the two inputs.
template <typename T, typename FwdF>
void binary_fwd(const Tensor& a, const Tensor& b, Tensor& out, BinMode mode, FwdF f) {
  const T* pa = a.ptr<T>();
  const T* pb = b.ptr<T>();
  T* po = out.ptr<T>();
  const int64_t n = a.numel();
  if (mode == BinMode::kSame) {
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  } else if (mode == BinMode::kScalar) {
    const T s = pb[0];
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], s);
  } else {
    const int64_t c = b.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i % c]);
  }
}

template <typename T>
void accumulate_same(Spec& s, const T* g, int64_t n) {
  T* dst = s.grad<T>();
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 double db_sign_or_mul,  // +1 add, -1 sub, 0 => mul
                 bool is_mul) {
  check_same_dtype(a, b);
  BinMode mode = binary_mode(a, b, name);
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    if (is_mul) binary_fwd<T>(a, b, out, mode, [](T x, T y) { return x * y; });
    else if (db_sign_or_mul > 0) binary_fwd<T>(a, b, out, mode, [](T x, T y) { return x + y; });
    else binary_fwd<T>(a, b, out, mode, [](T x, T y) { return x - y; });
  });
  detail::maybe_record(out, {&a, &b}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto sb = b.storage();
    auto so = out.storage();
    const int64_t n = a.numel();
    const int64_t c = b.numel();
    const double sign = db_sign_or_mul;
    return [sa, sb, so, n, c, mode, sign, is_mul]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = so->grad<T>();
        if (sa->tracked) {
          sa->ensure_grad();
          T* ga = sa->grad<T>();
          if (is_mul) {
            const T* pb = sb->data<T>();
            if (mode == BinMode::kSame) for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i];
            else if (mode == BinMode::kScalar) for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * pb[0];
            else for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i % c];
          } else {
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
          }
        }
        if (sb->tracked) {
          sb->ensure_grad();
          T* gb = sb->grad<T>();
          const T* pa = sa->data<T>();
          if (is_mul) {
            if (mode == BinMode::kSame) for (int64_t i = 0; i < n; ++i) gb[i] += go[i] * pa[i];
            else if (mode == BinMode::kScalar) for (int64_t i = 0; i < n; ++i) gb[0] += go[i] * pa[i];
            else for (int64_t i = 0; i < n; ++i) gb[i % c] += go[i] * pa[i];
          } else {
            const T s = static_cast<T>(sign);
            if (mode == BinMode::kSame) for (int64_t i = 0; i < n; ++i) gb[i] += s * go[i];
            else if (mode == BinMode::kScalar) for (int64_t i = 0; i < n; ++i) gb[0] += s * go[i];
            else for (int64_t i = 0; i < n; ++i) gb[i % c] += s * go[i];
          }
        }
      });
    };
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", a, b, +1.0, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", a, b, -1.0, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", a, b, 0.0, true); }
Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s, a.dtype())); }
Tensor sub(const Tensor& a, double s) { return sub(a, Tensor::scalar(s, a.dtype())); }

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  const int64_t n = a.numel();
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.ptr<T>();
    T* po = out.ptr<T>();
    const T k = static_cast<T>(s);
    for (int64_t i = 0; i < n; ++i) po[i] = k * pa[i];
  });
  detail::maybe_record(out, {&a}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto so = out.storage();
    return [sa, so, n, s]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sa->tracked) return;
        sa->ensure_grad();
        const T* go = so->grad<T>();
        T* ga = sa->grad<T>();
        const T k = static_cast<T>(s);
        for (int64_t i = 0; i < n; ++i) ga[i] += k * go[i];
      });
    };
  });
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  const int64_t n = a.numel();
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.ptr<T>();
    T* po = out.ptr<T>();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
  });
  detail::maybe_record(out, {&a}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto so = out.storage();
    return [sa, so, n]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sa->tracked) return;
        sa->ensure_grad();
        const T* go = so->grad<T>();
        const T* pa = sa->data<T>();
        T* ga = sa->grad<T>();
        for (int64_t i = 0; i < n; ++i) ga[i] += pa[i] > T(0) ? go[i] : T(0);
      });
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace {

// C[M,P] += A[M,K] * B[K,P], ikj loop order.
template <typename T>
void mm_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
#pragma omp parallel for schedule(static) if (m * k * p > 16384)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = a[i * k + kk];
      const T* brow = b + kk * p;
      for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,P] += A[M,K] * B[P,K]^T
template <typename T>
void mm_nt_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
#pragma omp parallel for schedule(static) if (m * k * p > 16384)
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < p; ++j) {
      T acc = T(0);
      const T* arow = a + i * k;
      const T* brow = b + j * k;
      for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      c[i * p + j] += acc;
    }
  }
}

// C[K,P] += A[M,K]^T * B[M,P]
template <typename T>
void mm_tn_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
#pragma omp parallel for schedule(static) if (m * k * p > 16384)
  for (int64_t kk = 0; kk < k; ++kk) {
    T* crow = c + kk * p;
    for (int64_t i = 0; i < m; ++i) {
      const T av = a[i * k + kk];
      const T* brow = b + i * p;
      for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_dtype(a, b);
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out = Tensor::zeros({m, p}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    mm_acc<T>(a.ptr<T>(), b.ptr<T>(), out.ptr<T>(), m, k, p);
  });
  detail::maybe_record(out, {&a, &b}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto sb = b.storage();
    auto so = out.storage();
    return [sa, sb, so, m, k, p]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* gc = so->grad<T>();
        if (sa->tracked) {
          sa->ensure_grad();
          mm_nt_acc<T>(gc, sb->data<T>(), sa->grad<T>(), m, p, k);  // dA = dC * B^T
        }
        if (sb->tracked) {
          sb->ensure_grad();
          mm_tn_acc<T>(sa->data<T>(), gc, sb->grad<T>(), m, k, p);  // dB = A^T * dC
        }
      });
    };
  });
  return out;
}

Tensor bmatmul(const Tensor& a, const Tensor& b) {
  check_same_dtype(a, b);
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw std::invalid_argument("bmatmul shape mismatch: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), p = b.dim(2);
  Tensor out = Tensor::zeros({nb, m, p}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
#pragma omp parallel for schedule(static) if (nb > 1)
    for (int64_t i = 0; i < nb; ++i) {
      mm_acc<T>(a.ptr<T>() + i * m * k, b.ptr<T>() + i * k * p, out.ptr<T>() + i * m * p, m, k, p);
    }
  });
  detail::maybe_record(out, {&a, &b}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto sb = b.storage();
    auto so = out.storage();
    return [sa, sb, so, nb, m, k, p]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* gc = so->grad<T>();
        for (int64_t i = 0; i < nb; ++i) {
          if (sa->tracked) {
            sa->ensure_grad();
            mm_nt_acc<T>(gc + i * m * p, sb->data<T>() + i * k * p, sa->grad<T>() + i * m * k, m, p, k);
          }
          if (sb->tracked) {
            sb->ensure_grad();
            mm_tn_acc<T>(sa->data<T>() + i * m * k, gc + i * m * p, sb->grad<T>() + i * k * p, m, k, p);
          }
        }
      });
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace {

enum class RedOp { kSum, kMean, kMax };

Tensor reduce_impl(RedOp op, const Tensor& a, std::optional<int> axis) {
  if (axis && (*axis < 0 || *axis >= a.rank())) {
    throw std::invalid_argument("reduce axis " + std::to_string(*axis) + " out of range for shape " +
                                shape_str(a.shape()));
  }
  // Collapse to [outer, red, inner] around the reduced axis.
  int64_t outer = 1, red = a.numel(), inner = 1;
  Shape out_shape = {1};
  if (axis) {
    outer = 1;
    for (int i = 0; i < *axis; ++i) outer *= a.dim(i);
    red = a.dim(*axis);
    inner = 1;
    for (int i = *axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    out_shape.clear();
    for (int i = 0; i < a.rank(); ++i) {
      if (i != *axis) out_shape.push_back(a.dim(i));
    }
    if (out_shape.empty()) out_shape = {1};
  }
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  std::vector<int64_t> argmax;
  if (op == RedOp::kMax) argmax.assign(static_cast<size_t>(outer * inner), 0);

  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.ptr<T>();
    T* po = out.ptr<T>();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const T* base = pa + o * red * inner + in;
        if (op == RedOp::kMax) {
          T best = base[0];
          int64_t bi = 0;
          for (int64_t r = 1; r < red; ++r) {
            const T v = base[r * inner];
            if (v > best) { best = v; bi = r; }  // ties keep the lowest index
          }
          po[o * inner + in] = best;
          argmax[static_cast<size_t>(o * inner + in)] = bi;
        } else {
          T acc = T(0);
          for (int64_t r = 0; r < red; ++r) acc += base[r * inner];
          po[o * inner + in] = op == RedOp::kMean ? acc / static_cast<T>(red) : acc;
        }
      }
    }
  });

  detail::maybe_record(out, {&a}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto so = out.storage();
    auto am = std::make_shared<std::vector<int64_t>>(std::move(argmax));
    return [sa, so, am, op, outer, red, inner]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sa->tracked) return;
        sa->ensure_grad();
        const T* go = so->grad<T>();
        T* ga = sa->grad<T>();
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t in = 0; in < inner; ++in) {
            const T g = go[o * inner + in];
            T* base = ga + o * red * inner + in;
            if (op == RedOp::kMax) {
              base[(*am)[static_cast<size_t>(o * inner + in)] * inner] += g;
            } else if (op == RedOp::kMean) {
              const T g1 = g / static_cast<T>(red);
              for (int64_t r = 0; r < red; ++r) base[r * inner] += g1;
            } else {
              for (int64_t r = 0; r < red; ++r) base[r * inner] += g;
            }
          }
        }
      });
    };
  });
  return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, std::optional<int> axis) { return reduce_impl(RedOp::kSum, a, axis); }
Tensor reduce_mean(const Tensor& a, std::optional<int> axis) { return reduce_impl(RedOp::kMean, a, axis); }
Tensor reduce_max(const Tensor& a, std::optional<int> axis) { return reduce_impl(RedOp::kMax, a, axis); }

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape from " + shape_str(a.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  }
  check_shape_positive(shape);
  // A view: same storage, so gradients flow through without a tape node.
  return Tensor(a.storage(), std::move(shape), a.node());
}

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw std::invalid_argument("transpose perm rank mismatch");
  }
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)]) throw std::invalid_argument("transpose perm is not a permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = a.dim(perm[static_cast<size_t>(i)]);

  // Strides of the input walked in output order.
  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * a.dim(i + 1);
  std::vector<int64_t> walk(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) walk[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

  Tensor out = Tensor::zeros(out_shape, a.dtype());
  const int64_t n = a.numel();
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.ptr<T>();
    T* po = out.ptr<T>();
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    int64_t src = 0;
    for (int64_t i = 0; i < n; ++i) {
      po[i] = pa[src];
      for (int d = r - 1; d >= 0; --d) {
        idx[static_cast<size_t>(d)]++;
        src += walk[static_cast<size_t>(d)];
        if (idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
        src -= walk[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
        idx[static_cast<size_t>(d)] = 0;
      }
    }
  });
  detail::maybe_record(out, {&a}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto so = out.storage();
    auto walk_c = walk;
    auto oshape = out_shape;
    return [sa, so, walk_c, oshape, n, r]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sa->tracked) return;
        sa->ensure_grad();
        const T* go = so->grad<T>();
        T* ga = sa->grad<T>();
        std::vector<int64_t> idx(static_cast<size_t>(r), 0);
        int64_t src = 0;
        for (int64_t i = 0; i < n; ++i) {
          ga[src] += go[i];
          for (int d = r - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            src += walk_c[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < oshape[static_cast<size_t>(d)]) break;
            src -= walk_c[static_cast<size_t>(d)] * oshape[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
          }
        }
      });
    };
  });
  return out;
}

Tensor softmax_lastdim(const Tensor& a) {
  if (a.rank() < 1) throw std::invalid_argument("softmax needs rank >= 1");
  const int64_t c = a.dim(a.rank() - 1);
  const int64_t rows = a.numel() / c;
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.ptr<T>();
    T* po = out.ptr<T>();
    for (int64_t rix = 0; rix < rows; ++rix) {
      const T* x = pa + rix * c;
      T* y = po + rix * c;
      T mx = x[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
      T sum = T(0);
      for (int64_t j = 0; j < c; ++j) { y[j] = std::exp(x[j] - mx); sum += y[j]; }
      const T inv = T(1) / sum;
      for (int64_t j = 0; j < c; ++j) y[j] *= inv;
    }
  });
  detail::maybe_record(out, {&a}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto so = out.storage();
    return [sa, so, rows, c]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sa->tracked) return;
        sa->ensure_grad();
        const T* y = so->data<T>();
        const T* gy = so->grad<T>();
        T* gx = sa->grad<T>();
        for (int64_t rix = 0; rix < rows; ++rix) {
          const T* yr = y + rix * c;
          const T* gr = gy + rix * c;
          T dot = T(0);
          for (int64_t j = 0; j < c; ++j) dot += yr[j] * gr[j];
          T* gxr = gx + rix * c;
          for (int64_t j = 0; j < c; ++j) gxr[j] += yr[j] * (gr[j] - dot);
        }
      });
    };
  });
  return out;
}

Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len) {
  if (axis < 0 || axis >= a.rank()) throw std::invalid_argument("narrow axis out of range");
  if (start < 0 || len <= 0 || start + len > a.dim(axis)) {
    throw std::invalid_argument("narrow range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") exceeds extent " +
                                std::to_string(a.dim(axis)));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const int64_t red = a.dim(axis);
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.ptr<T>();
    T* po = out.ptr<T>();
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(po + o * len * inner, pa + (o * red + start) * inner,
                  static_cast<size_t>(len * inner) * sizeof(T));
    }
  });
  detail::maybe_record(out, {&a}, [&]() -> std::function<void()> {
    auto sa = a.storage();
    auto so = out.storage();
    return [sa, so, outer, inner, red, start, len]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sa->tracked) return;
        sa->ensure_grad();
        const T* go = so->grad<T>();
        T* ga = sa->grad<T>();
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = go + o * len * inner;
          T* dst = ga + (o * red + start) * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      });
    };
  });
  return out;
}

}  // namespace hoho
