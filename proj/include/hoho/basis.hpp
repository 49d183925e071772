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

#include <utility>

#include "hoho/tensor.hpp"

namespace hoho::basis {

enum class Kind { kIdct, kInterp };

/// The H x r matrix M that lifts r per-column components to H rows, X = M x.
///
/// idct kind (truncated DCT-III synthesis):
///   M[m][0] = 1/2,  M[m][n] = cos(pi * n * (m + 1/2) / H) for n >= 1,
/// so M^T M is diagonal with H/4 at (0,0) and H/2 elsewhere.
///
/// interp kind: each row linearly interpolates the r components under the
/// half-pixel-center convention of nn::bilinear_resize (clamped ends);
/// every row sums to 1 with at most 2 nonzeros, and r = H is the identity.
struct BasisMatrix {
  Kind kind;
  int64_t h = 0;
  int64_t r = 0;
  Tensor m;     // [H, r], f32
  Tensor mt;    // [r, H], cached transpose used by apply_basis
  Tensor mt64;  // [r, H], f64 mirror for oracle/gradient-check paths
};

/// Returns the cached immutable basis for (kind, H, r). 1 <= r <= H.
const BasisMatrix& make_basis(Kind kind, int64_t h, int64_t r);

/// Lifts the trailing axis: x [..., r] -> [..., H]. Differentiable in x.
Tensor apply_basis(const Tensor& x, const BasisMatrix& b);

/// DCT-II analysis scaled to invert apply_basis exactly at r = H:
///   x_n = (2/H) * sum_m X_m cos(pi n (m+1/2) / H),  n = 0..r-1.
/// X [..., H] -> [..., r].
Tensor forward_dct(const Tensor& x, int64_t r);

/// Per-column truncated-DCT compression of a [H, W] map to K coefficients.
/// Returns (reconstruction, |original - reconstruction|).
std::pair<Tensor, Tensor> compress_columns(const Tensor& map, int64_t k);

}  // namespace hoho::basis
