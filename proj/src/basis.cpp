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

#include "hoho/basis.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace hoho::basis {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor build_idct(int64_t h, int64_t r) {
  Tensor m = Tensor::zeros({h, r}, DType::kF64);
  double* p = m.ptr<double>();
  for (int64_t row = 0; row < h; ++row) {
    p[row * r + 0] = 0.5;
    for (int64_t n = 1; n < r; ++n) {
      p[row * r + n] =
          std::cos(kPi * static_cast<double>(n) * (static_cast<double>(row) + 0.5) / static_cast<double>(h));
    }
  }
  return m;
}

Tensor build_interp(int64_t h, int64_t r) {
  Tensor m = Tensor::zeros({h, r}, DType::kF64);
  double* p = m.ptr<double>();
  const double scalef = static_cast<double>(r) / static_cast<double>(h);
  for (int64_t row = 0; row < h; ++row) {
    const double src = (static_cast<double>(row) + 0.5) * scalef - 0.5;
    double f = std::floor(src);
    double t = src - f;
    int64_t a = static_cast<int64_t>(f);
    if (a < 0) { a = 0; t = 0.0; }
    if (a > r - 1) { a = r - 1; t = 0.0; }
    const int64_t b = std::min<int64_t>(a + 1, r - 1);
    p[row * r + a] += 1.0 - t;
    p[row * r + b] += t;
  }
  return m;
}

// Analysis matrix D [H, r]: x = X^T D per column.
Tensor build_dct_analysis(int64_t h, int64_t r) {
  Tensor d = Tensor::zeros({h, r}, DType::kF64);
  double* p = d.ptr<double>();
  const double norm = 2.0 / static_cast<double>(h);
  for (int64_t row = 0; row < h; ++row) {
    for (int64_t n = 0; n < r; ++n) {
      p[row * r + n] =
          norm * std::cos(kPi * static_cast<double>(n) * (static_cast<double>(row) + 0.5) / static_cast<double>(h));
    }
  }
  return d;
}

std::mutex g_cache_mu;
std::map<std::tuple<int, int64_t, int64_t>, BasisMatrix> g_basis_cache;
struct AnalysisPair {
  Tensor d32, d64;
};
std::map<std::pair<int64_t, int64_t>, AnalysisPair> g_analysis_cache;

}  // namespace

const BasisMatrix& make_basis(Kind kind, int64_t h, int64_t r) {
  if (r < 1 || r > h) {
    throw std::invalid_argument("basis needs 1 <= r <= H, got r=" + std::to_string(r) +
                                " H=" + std::to_string(h));
  }
  std::lock_guard<std::mutex> lock(g_cache_mu);
  const auto key = std::make_tuple(static_cast<int>(kind), h, r);
  auto it = g_basis_cache.find(key);
  if (it == g_basis_cache.end()) {
    BasisMatrix b;
    b.kind = kind;
    b.h = h;
    b.r = r;
    b.mt64 = transpose(kind == Kind::kIdct ? build_idct(h, r) : build_interp(h, r), {1, 0});
    b.m = transpose(b.mt64, {1, 0}).astype(DType::kF32);
    b.mt = b.mt64.astype(DType::kF32);
    it = g_basis_cache.emplace(key, std::move(b)).first;
  }
  return it->second;
}

Tensor apply_basis(const Tensor& x, const BasisMatrix& b) {
  if (x.rank() < 1 || x.dim(x.rank() - 1) != b.r) {
    throw std::invalid_argument("apply_basis: trailing extent of " + shape_str(x.shape()) +
                                " != r=" + std::to_string(b.r));
  }
  const int64_t rows = x.numel() / b.r;
  const Tensor& mt = x.dtype() == DType::kF64 ? b.mt64 : b.mt;
  Tensor flat = reshape(x, {rows, b.r});
  Tensor lifted = matmul(flat, mt);  // [rows, H]
  Shape out_shape = x.shape();
  out_shape.back() = b.h;
  return reshape(lifted, std::move(out_shape));
}

Tensor forward_dct(const Tensor& x, int64_t r) {
  if (x.rank() < 1) throw std::invalid_argument("forward_dct needs rank >= 1");
  const int64_t h = x.dim(x.rank() - 1);
  if (r < 1 || r > h) {
    throw std::invalid_argument("forward_dct needs 1 <= r <= H, got r=" + std::to_string(r) +
                                " H=" + std::to_string(h));
  }
  Tensor d;
  {
    std::lock_guard<std::mutex> lock(g_cache_mu);
    auto it = g_analysis_cache.find({h, r});
    if (it == g_analysis_cache.end()) {
      AnalysisPair pair;
      pair.d64 = build_dct_analysis(h, r);
      pair.d32 = pair.d64.astype(DType::kF32);
      it = g_analysis_cache.emplace(std::make_pair(h, r), std::move(pair)).first;
    }
    d = x.dtype() == DType::kF32 ? it->second.d32 : it->second.d64;
  }
  const int64_t rows = x.numel() / h;
  Tensor coeffs = matmul(reshape(x, {rows, h}), d);
  Shape out_shape = x.shape();
  out_shape.back() = r;
  return reshape(coeffs, std::move(out_shape));
}

std::pair<Tensor, Tensor> compress_columns(const Tensor& map, int64_t k) {
  if (map.rank() != 2) throw std::invalid_argument("compress_columns expects an [H,W] map");
  const int64_t h = map.dim(0);
  if (k > h || k < 1) {
    throw std::invalid_argument("compress_columns: K=" + std::to_string(k) + " out of range for H=" +
                                std::to_string(h));
  }
  Tensor cols = transpose(map, {1, 0});  // [W, H]; each row is one image column
  Tensor coeffs = forward_dct(cols, k);
  Tensor recon_cols = apply_basis(coeffs, make_basis(Kind::kIdct, h, k));
  Tensor recon = transpose(recon_cols, {1, 0});

  Tensor err = Tensor::zeros(map.shape(), map.dtype());
  const int64_t n = map.numel();
  if (map.dtype() == DType::kF32) {
    const float* a = map.ptr<float>();
    const float* b = recon.ptr<float>();
    float* e = err.ptr<float>();
    for (int64_t i = 0; i < n; ++i) e[i] = std::abs(a[i] - b[i]);
  } else {
    const double* a = map.ptr<double>();
    const double* b = recon.ptr<double>();
    double* e = err.ptr<double>();
    for (int64_t i = 0; i < n; ++i) e[i] = std::abs(a[i] - b[i]);
  }
  return {recon, err};
}

}  // namespace hoho::basis
