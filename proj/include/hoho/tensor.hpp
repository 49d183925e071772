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

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hoho {

/// Element precision of a tensor. F32 is the training/inference mode,
/// F64 is used for gradient checks and numeric oracles.
enum class DType { kF32, kF64 };

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct Storage {
  DType dtype = DType::kF32;
  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<float> g32;
  std::vector<double> g64;
  bool tracked = false;

  int64_t numel() const {
    return dtype == DType::kF32 ? static_cast<int64_t>(f32.size())
                                : static_cast<int64_t>(f64.size());
  }
  void ensure_grad() {
    if (dtype == DType::kF32) {
      if (g32.size() != f32.size()) g32.assign(f32.size(), 0.0f);
    } else {
      if (g64.size() != f64.size()) g64.assign(f64.size(), 0.0);
    }
  }
  void zero_grad() {
    if (dtype == DType::kF32) std::fill(g32.begin(), g32.end(), 0.0f);
    else std::fill(g64.begin(), g64.end(), 0.0);
  }
  bool has_grad() const {
    return dtype == DType::kF32 ? !g32.empty() : !g64.empty();
  }

  template <typename T> T* data();
  template <typename T> const T* data() const;
  template <typename T> T* grad();
  template <typename T> const T* grad() const;
};

template <> inline float* Storage::data<float>() { return f32.data(); }
template <> inline double* Storage::data<double>() { return f64.data(); }
template <> inline const float* Storage::data<float>() const { return f32.data(); }
template <> inline const double* Storage::data<double>() const { return f64.data(); }
template <> inline float* Storage::grad<float>() { return g32.data(); }
template <> inline double* Storage::grad<double>() { return g64.data(); }
template <> inline const float* Storage::grad<float>() const { return g32.data(); }
template <> inline const double* Storage::grad<double>() const { return g64.data(); }

}  // namespace detail

/// Dense N-dimensional array with row-major elements, an optional gradient
/// buffer, and an optional handle into the active Tape. Value semantics:
/// copies share the underlying storage, and storages of op results are
/// treated as immutable once produced. Leaf parameters are the exception;
/// their buffers are updated in place by the optimizer between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dt = DType::kF32);
  static Tensor full(Shape shape, double value, DType dt = DType::kF32);
  static Tensor ones(Shape shape, DType dt = DType::kF32) { return full(std::move(shape), 1.0, dt); }
  static Tensor scalar(double value, DType dt = DType::kF32) { return full({1}, value, dt); }
  static Tensor from(const std::vector<double>& values, Shape shape, DType dt = DType::kF32);

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return st_ ? st_->numel() : 0; }
  DType dtype() const { return st_ ? st_->dtype : DType::kF32; }

  template <typename T> T* ptr() { check_type<T>(); return st_->data<T>(); }
  template <typename T> const T* ptr() const { check_type<T>(); return st_->data<T>(); }

  /// Scalar read regardless of precision mode.
  double item() const;
  double at(int64_t flat_index) const;
  void set(int64_t flat_index, double value);

  /// Marks a leaf tensor for gradient accumulation (allocates the buffer).
  void set_requires_grad(bool on = true);
  bool tracked() const { return st_ && st_->tracked; }
  bool has_grad() const { return st_ && st_->has_grad(); }
  Tensor grad() const;
  void zero_grad() { if (st_) st_->zero_grad(); }

  Tensor astype(DType dt) const;
  Tensor clone() const;
  /// Same values, no tape handle, no gradient tracking.
  Tensor detach() const;

  int64_t node() const { return node_; }

  // Internal plumbing for op implementations.
  Tensor(std::shared_ptr<detail::Storage> st, Shape shape, int64_t node = -1)
      : st_(std::move(st)), shape_(std::move(shape)), node_(node) {}
  const std::shared_ptr<detail::Storage>& storage() const { return st_; }
  void set_node(int64_t n) { node_ = n; }

 private:
  template <typename T> void check_type() const;

  std::shared_ptr<detail::Storage> st_;
  Shape shape_;
  int64_t node_ = -1;
};

/// Reverse-mode tape. Recorded nodes are closures that scatter the output
/// gradient into the inputs' buffers; creation order is topological by
/// construction, and backward() runs the closures exactly once in reverse.
/// One tape per training thread.
class Tape {
 public:
  int64_t record(std::function<void()> backward_fn);
  /// Seeds d(loss)/d(loss)=1 and propagates through every recorded node.
  void backward(const Tensor& loss);
  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

/// Installs a tape as the thread's active tape for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

namespace detail {
/// Registers `backward_fn` for `out` if a tape is active and any input is
/// tracked. Returns true when recording happened.
bool maybe_record(Tensor& out, const std::vector<const Tensor*>& inputs,
                  const std::function<std::function<void()>()>& make_backward_fn);
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / linear-algebra ops. All record backward rules on the active
// tape. Binary ops accept equal shapes, a scalar (numel 1) right operand, or
// a rank-1 right operand matching the trailing axis (bias addition).
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double s);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);

/// [M,K] x [K,P] -> [M,P]. Backward: dA = dC.B^T, dB = A^T.dC.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched variant: [B,M,K] x [B,K,P] -> [B,M,P].
Tensor bmatmul(const Tensor& a, const Tensor& b);

/// Reductions. Without an axis the whole tensor reduces to a scalar shape {1};
/// with an axis the axis is removed. Mean backward distributes 1/n; max
/// backward routes to the first argmax (lowest index on ties).
Tensor reduce_sum(const Tensor& a, std::optional<int> axis = std::nullopt);
Tensor reduce_mean(const Tensor& a, std::optional<int> axis = std::nullopt);
Tensor reduce_max(const Tensor& a, std::optional<int> axis = std::nullopt);

/// Zero-copy view with a new shape (same element order).
Tensor reshape(const Tensor& a, Shape shape);
/// Axis permutation (copies). Round-trip with the inverse perm is bit-exact.
Tensor transpose(const Tensor& a, const std::vector<int>& perm);
/// Softmax over the last axis, numerically stabilized.
Tensor softmax_lastdim(const Tensor& a);
/// Contiguous sub-range along one axis (copies).
Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len);

}  // namespace hoho
