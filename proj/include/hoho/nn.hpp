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

#include <optional>
#include <utility>
#include <vector>

#include "hoho/tensor.hpp"

namespace hoho::nn {

/// Width padding of convolutions. ERP images wrap horizontally, so circular
/// is the default everywhere in the model; height always zero-pads.
enum class PadModeW { kCircular, kZero };

enum class Mode { kTrain, kEval };

struct Conv2DParams {
  Tensor weight;               // [C_out, C_in/groups, k_h, k_w]
  std::optional<Tensor> bias;  // [C_out]
  std::pair<int, int> stride{1, 1};
  std::pair<int, int> pad{0, 0};
  int groups = 1;
  PadModeW pad_mode_w = PadModeW::kCircular;
};

/// x: [B, C_in, H, W] -> [B, C_out, H', W'] with
/// H' = (H + 2*p_h - k_h)/s_h + 1 and the analogous W'.
Tensor conv2d(const Tensor& x, const Conv2DParams& p);

/// Depthwise convolution with kernel (h, 1) covering the full feature height,
/// never padded: [B, C, h, W] -> [B, C, 1, W]. weight: [C, 1, h, 1].
Tensor conv_squeeze_h(const Tensor& x, const Tensor& weight,
                      const std::optional<Tensor>& bias = std::nullopt);

/// 1D convolution over width: x [B, C, W], weight [C_out, C_in, k],
/// stride 1, same-width padding. k must be odd.
Tensor conv1d(const Tensor& x, const Tensor& weight,
              const std::optional<Tensor>& bias = std::nullopt,
              PadModeW pad_mode = PadModeW::kCircular);

struct BatchNormState {
  Tensor gamma, beta;               // [C]
  Tensor running_mean, running_var; // [C], not gradient-tracked
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Channel axis is axis 1. Train mode normalizes with batch statistics over
/// all other axes and updates the running stats; eval mode is a per-channel
/// affine map from the running stats.
Tensor batch_norm(const Tensor& x, BatchNormState& s, Mode mode);

/// Separable linear interpolation with half-pixel centers; width wraps
/// circularly, height clamps. x: [..., H, W].
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);

/// Max pooling, circular width wrap; rows outside the image do not
/// contribute candidates. Ties route to the first window position.
Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad);

struct MHSAParams {
  Tensor wq, wk, wv, wo;  // [D, D]
  int heads = 1;
};

/// Scaled dot-product self-attention over the width positions of
/// x [B, D, W], with residual: out = x + proj(attention(x)).
/// No positional encoding.
Tensor mhsa(const Tensor& x, const MHSAParams& p);

Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Adam with polynomial learning-rate decay
/// lr(t) = base_lr * (1 - t/total_steps)^poly_power.
struct AdamState {
  std::vector<Tensor> m, v;  // aligned with the registered parameter order
  int64_t t = 0;
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double poly_power = 0.9;
  int64_t total_steps = 1;
  bool lr_clamped = false;  // set once t reaches total_steps
};

AdamState make_adam(const std::vector<Tensor>& params, double base_lr,
                    double poly_power, int64_t total_steps);
double adam_lr(const AdamState& s);
/// One bias-corrected update from the gradients currently stored on `params`.
void adam_step(const std::vector<Tensor>& params, AdamState& s);

}  // namespace hoho::nn
