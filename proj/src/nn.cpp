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

#include "hoho/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

namespace hoho::nn {

namespace {

template <typename F>
auto dispatch(DType dt, F&& f) {
  if (dt == DType::kF32) return f(float{});
  return f(double{});
}

// Copies x into a buffer padded by (ph, pw): height rows zero-fill, width
// columns wrap or zero-fill.
template <typename T>
void pad_into(const T* x, T* xp, int64_t planes, int64_t h, int64_t w, int ph, int pw,
              bool circular_w) {
  const int64_t hp = h + 2 * ph, wp = w + 2 * pw;
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* src = x + pl * h * w;
    T* dst = xp + pl * hp * wp;
    for (int64_t y = 0; y < h; ++y) {
      const T* srow = src + y * w;
      T* drow = dst + (y + ph) * wp;
      std::memcpy(drow + pw, srow, static_cast<size_t>(w) * sizeof(T));
      if (circular_w) {
        for (int i = 0; i < pw; ++i) {
          drow[i] = srow[w - pw + i];
          drow[pw + w + i] = srow[i];
        }
      }
    }
  }
}

// Accumulates a padded-gradient buffer back onto the unpadded gradient.
template <typename T>
void fold_pad(const T* gxp, T* gx, int64_t planes, int64_t h, int64_t w, int ph, int pw,
              bool circular_w) {
  const int64_t hp = h + 2 * ph, wp = w + 2 * pw;
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* src = gxp + pl * hp * wp;
    T* dst = gx + pl * h * w;
    for (int64_t y = 0; y < h; ++y) {
      const T* srow = src + (y + ph) * wp;
      T* drow = dst + y * w;
      for (int64_t i = 0; i < w; ++i) drow[i] += srow[pw + i];
      if (circular_w) {
        for (int i = 0; i < pw; ++i) {
          drow[w - pw + i] += srow[i];
          drow[i] += srow[pw + w + i];
        }
      }
    }
  }
}

struct ConvDims {
  int64_t b, cin, h, w, cout, ho, wo, hp, wp;
  int kh, kw, sh, sw, ph, pw, groups;
  bool circ;
};

template <typename T>
void conv2d_fwd(const T* xp, const T* w, const T* bias, T* out, const ConvDims& d) {
  const int64_t cig = d.cin / d.groups, cog = d.cout / d.groups;
#pragma omp parallel for schedule(static)
  for (int64_t bc = 0; bc < d.b * d.cout; ++bc) {
    const int64_t b = bc / d.cout, co = bc % d.cout;
    const int64_t g = co / cog;
    T* obase = out + bc * d.ho * d.wo;
    const T bv = bias ? bias[co] : T(0);
    std::fill(obase, obase + d.ho * d.wo, bv);
    for (int64_t ci = 0; ci < cig; ++ci) {
      const T* xc = xp + (b * d.cin + g * cig + ci) * d.hp * d.wp;
      const T* wc = w + (co * cig + ci) * d.kh * d.kw;
      for (int64_t oy = 0; oy < d.ho; ++oy) {
        T* orow = obase + oy * d.wo;
        for (int ky = 0; ky < d.kh; ++ky) {
          const T* xrow = xc + (oy * d.sh + ky) * d.wp;
          const T* wrow = wc + ky * d.kw;
          for (int kx = 0; kx < d.kw; ++kx) {
            const T wv = wrow[kx];
            const T* xs = xrow + kx;
            if (d.sw == 1) {
              for (int64_t ox = 0; ox < d.wo; ++ox) orow[ox] += wv * xs[ox];
            } else {
              for (int64_t ox = 0; ox < d.wo; ++ox) orow[ox] += wv * xs[ox * d.sw];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_bwd_w(const T* xp, const T* gy, T* gw, const ConvDims& d) {
  const int64_t cig = d.cin / d.groups, cog = d.cout / d.groups;
#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < d.cout; ++co) {
    const int64_t g = co / cog;
    for (int64_t ci = 0; ci < cig; ++ci) {
      for (int ky = 0; ky < d.kh; ++ky) {
        for (int kx = 0; kx < d.kw; ++kx) {
          T acc = T(0);
          for (int64_t b = 0; b < d.b; ++b) {
            const T* xc = xp + (b * d.cin + g * cig + ci) * d.hp * d.wp;
            const T* gyb = gy + (b * d.cout + co) * d.ho * d.wo;
            for (int64_t oy = 0; oy < d.ho; ++oy) {
              const T* xrow = xc + (oy * d.sh + ky) * d.wp + kx;
              const T* grow = gyb + oy * d.wo;
              if (d.sw == 1) {
                for (int64_t ox = 0; ox < d.wo; ++ox) acc += grow[ox] * xrow[ox];
              } else {
                for (int64_t ox = 0; ox < d.wo; ++ox) acc += grow[ox] * xrow[ox * d.sw];
              }
            }
          }
          gw[((co * cig + ci) * d.kh + ky) * d.kw + kx] += acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_bwd_x(const T* gy, const T* w, T* gxp, const ConvDims& d) {
  const int64_t cig = d.cin / d.groups, cog = d.cout / d.groups;
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < d.b; ++b) {
    for (int64_t co = 0; co < d.cout; ++co) {
      const int64_t g = co / cog;
      const T* gyb = gy + (b * d.cout + co) * d.ho * d.wo;
      for (int64_t ci = 0; ci < cig; ++ci) {
        T* xc = gxp + (b * d.cin + g * cig + ci) * d.hp * d.wp;
        const T* wc = w + (co * cig + ci) * d.kh * d.kw;
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          const T* grow = gyb + oy * d.wo;
          for (int ky = 0; ky < d.kh; ++ky) {
            T* xrow = xc + (oy * d.sh + ky) * d.wp;
            const T* wrow = wc + ky * d.kw;
            for (int kx = 0; kx < d.kw; ++kx) {
              const T wv = wrow[kx];
              T* xs = xrow + kx;
              if (d.sw == 1) {
                for (int64_t ox = 0; ox < d.wo; ++ox) xs[ox] += wv * grow[ox];
              } else {
                for (int64_t ox = 0; ox < d.wo; ++ox) xs[ox * d.sw] += wv * grow[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Conv2DParams& p) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d input must be [B,C,H,W], got " + shape_str(x.shape()));
  if (p.weight.rank() != 4) throw std::invalid_argument("conv2d weight must be rank 4");
  ConvDims d;
  d.b = x.dim(0); d.cin = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
  d.cout = p.weight.dim(0);
  d.kh = static_cast<int>(p.weight.dim(2));
  d.kw = static_cast<int>(p.weight.dim(3));
  d.sh = p.stride.first; d.sw = p.stride.second;
  d.ph = p.pad.first; d.pw = p.pad.second;
  d.groups = p.groups;
  d.circ = p.pad_mode_w == PadModeW::kCircular;
  if (d.groups < 1 || d.cin % d.groups != 0 || d.cout % d.groups != 0) {
    throw std::invalid_argument("conv2d: channels not divisible by groups");
  }
  if (p.weight.dim(1) != d.cin / d.groups) {
    throw std::invalid_argument("conv2d: weight shape " + shape_str(p.weight.shape()) +
                                " inconsistent with input channels " + std::to_string(d.cin));
  }
  if (p.bias && (p.bias->rank() != 1 || p.bias->dim(0) != d.cout)) {
    throw std::invalid_argument("conv2d: bias shape mismatch");
  }
  d.hp = d.h + 2 * d.ph; d.wp = d.w + 2 * d.pw;
  if (d.hp < d.kh || d.wp < d.kw) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
  d.ho = (d.hp - d.kh) / d.sh + 1;
  d.wo = (d.wp - d.kw) / d.sw + 1;

  Tensor xp = Tensor::zeros({d.b, d.cin, d.hp, d.wp}, x.dtype());
  Tensor out = Tensor::zeros({d.b, d.cout, d.ho, d.wo}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    pad_into<T>(x.ptr<T>(), xp.ptr<T>(), d.b * d.cin, d.h, d.w, d.ph, d.pw, d.circ);
    conv2d_fwd<T>(xp.ptr<T>(), p.weight.ptr<T>(), p.bias ? p.bias->ptr<T>() : nullptr,
                  out.ptr<T>(), d);
  });

  const Tensor* bias_ptr = p.bias ? &*p.bias : nullptr;
  std::vector<const Tensor*> ins = {&x, &p.weight};
  if (bias_ptr) ins.push_back(bias_ptr);
  detail::maybe_record(out, ins, [&]() -> std::function<void()> {
    auto sx = x.storage();
    auto sw = p.weight.storage();
    auto sb = p.bias ? p.bias->storage() : nullptr;
    auto sxp = xp.storage();
    auto so = out.storage();
    return [sx, sw, sb, sxp, so, d]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* gy = so->grad<T>();
        if (sb && sb->tracked) {
          sb->ensure_grad();
          T* gb = sb->grad<T>();
          for (int64_t bc = 0; bc < d.b * d.cout; ++bc) {
            const T* grow = gy + bc * d.ho * d.wo;
            T acc = T(0);
            for (int64_t i = 0; i < d.ho * d.wo; ++i) acc += grow[i];
            gb[bc % d.cout] += acc;
          }
        }
        if (sw->tracked) {
          sw->ensure_grad();
          conv2d_bwd_w<T>(sxp->data<T>(), gy, sw->grad<T>(), d);
        }
        if (sx->tracked) {
          sx->ensure_grad();
          std::vector<T> gxp(static_cast<size_t>(d.b * d.cin * d.hp * d.wp), T(0));
          conv2d_bwd_x<T>(gy, sw->data<T>(), gxp.data(), d);
          fold_pad<T>(gxp.data(), sx->grad<T>(), d.b * d.cin, d.h, d.w, d.ph, d.pw, d.circ);
        }
      });
    };
  });
  return out;
}

Tensor conv_squeeze_h(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  if (x.rank() != 4) throw std::invalid_argument("conv_squeeze_h input must be [B,C,h,W]");
  const int64_t c = x.dim(1), h = x.dim(2);
  if (weight.rank() != 4 || weight.dim(0) != c || weight.dim(1) != 1 || weight.dim(3) != 1) {
    throw std::invalid_argument("conv_squeeze_h weight must be [C,1,h,1], got " + shape_str(weight.shape()));
  }
  if (weight.dim(2) != h) {
    throw std::invalid_argument("conv_squeeze_h: kernel height " + std::to_string(weight.dim(2)) +
                                " != input feature height " + std::to_string(h) + " (this layer never pads)");
  }
  Conv2DParams p;
  p.weight = weight;
  p.bias = bias;
  p.stride = {1, 1};
  p.pad = {0, 0};
  p.groups = static_cast<int>(c);
  return conv2d(x, p);
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
              PadModeW pad_mode) {
  if (x.rank() != 3) throw std::invalid_argument("conv1d input must be [B,C,W]");
  if (weight.rank() != 3) throw std::invalid_argument("conv1d weight must be [C_out,C_in,k]");
  const int k = static_cast<int>(weight.dim(2));
  if (k % 2 == 0) throw std::invalid_argument("conv1d kernel must be odd");
  Tensor x4 = reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)});
  Conv2DParams p;
  p.weight = reshape(weight, {weight.dim(0), weight.dim(1), 1, weight.dim(2)});
  p.bias = bias;
  p.stride = {1, 1};
  p.pad = {0, (k - 1) / 2};
  p.groups = 1;
  p.pad_mode_w = pad_mode;
  Tensor y = conv2d(x4, p);
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& x, BatchNormState& s, Mode mode) {
  if (x.rank() < 2) throw std::invalid_argument("batch_norm input must have a channel axis 1");
  const int64_t b = x.dim(0), c = x.dim(1);
  const int64_t sp = x.numel() / (b * c);
  const int64_t n = b * sp;
  if (s.gamma.dim(0) != c) throw std::invalid_argument("batch_norm: state/channel mismatch");
  if (mode == Mode::kTrain && n == 1) {
    throw std::invalid_argument("batch_norm train mode needs more than one value per channel");
  }

  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(c), 0.0);
  auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(c), 0.0);

  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.ptr<T>();
    T* po = out.ptr<T>();
    if (mode == Mode::kTrain) {
      for (int64_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int64_t bb = 0; bb < b; ++bb) {
          const T* base = px + (bb * c + ch) * sp;
          for (int64_t i = 0; i < sp; ++i) sum += static_cast<double>(base[i]);
        }
        const double mu = sum / static_cast<double>(n);
        double var = 0.0;
        for (int64_t bb = 0; bb < b; ++bb) {
          const T* base = px + (bb * c + ch) * sp;
          for (int64_t i = 0; i < sp; ++i) {
            const double dlt = static_cast<double>(base[i]) - mu;
            var += dlt * dlt;
          }
        }
        var /= static_cast<double>(n);
        (*mean)[static_cast<size_t>(ch)] = mu;
        (*invstd)[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + s.eps);
        // Unbiased variance feeds the running estimate.
        const double var_u = var * static_cast<double>(n) / static_cast<double>(n - 1);
        s.running_mean.set(ch, (1.0 - s.momentum) * s.running_mean.at(ch) + s.momentum * mu);
        s.running_var.set(ch, (1.0 - s.momentum) * s.running_var.at(ch) + s.momentum * var_u);
      }
    } else {
      for (int64_t ch = 0; ch < c; ++ch) {
        (*mean)[static_cast<size_t>(ch)] = s.running_mean.at(ch);
        (*invstd)[static_cast<size_t>(ch)] = 1.0 / std::sqrt(s.running_var.at(ch) + s.eps);
      }
    }
    const T* pg = s.gamma.ptr<T>();
    const T* pb = s.beta.ptr<T>();
    for (int64_t bb = 0; bb < b; ++bb) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* xi = px + (bb * c + ch) * sp;
        T* yo = po + (bb * c + ch) * sp;
        const T mu = static_cast<T>((*mean)[static_cast<size_t>(ch)]);
        const T is = static_cast<T>((*invstd)[static_cast<size_t>(ch)]);
        const T g = pg[ch], bt = pb[ch];
        for (int64_t i = 0; i < sp; ++i) yo[i] = g * (xi[i] - mu) * is + bt;
      }
    }
  });

  detail::maybe_record(out, {&x, &s.gamma, &s.beta}, [&]() -> std::function<void()> {
    auto sx = x.storage();
    auto sg = s.gamma.storage();
    auto sbt = s.beta.storage();
    auto so = out.storage();
    const bool train = mode == Mode::kTrain;
    return [sx, sg, sbt, so, mean, invstd, b, c, sp, n, train]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* gy = so->grad<T>();
        const T* px = sx->data<T>();
        const T* pg = sg->data<T>();
        for (int64_t ch = 0; ch < c; ++ch) {
          const double mu = (*mean)[static_cast<size_t>(ch)];
          const double is = (*invstd)[static_cast<size_t>(ch)];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int64_t bb = 0; bb < b; ++bb) {
            const T* gr = gy + (bb * c + ch) * sp;
            const T* xr = px + (bb * c + ch) * sp;
            for (int64_t i = 0; i < sp; ++i) {
              const double xhat = (static_cast<double>(xr[i]) - mu) * is;
              sum_dy += static_cast<double>(gr[i]);
              sum_dy_xhat += static_cast<double>(gr[i]) * xhat;
            }
          }
          if (sg->tracked) {
            sg->ensure_grad();
            sg->grad<T>()[ch] += static_cast<T>(sum_dy_xhat);
          }
          if (sbt->tracked) {
            sbt->ensure_grad();
            sbt->grad<T>()[ch] += static_cast<T>(sum_dy);
          }
          if (sx->tracked) {
            sx->ensure_grad();
            T* gx = sx->grad<T>();
            const double g = static_cast<double>(pg[ch]);
            const double mean_dy = sum_dy / static_cast<double>(n);
            const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(n);
            for (int64_t bb = 0; bb < b; ++bb) {
              const T* gr = gy + (bb * c + ch) * sp;
              const T* xr = px + (bb * c + ch) * sp;
              T* gxr = gx + (bb * c + ch) * sp;
              for (int64_t i = 0; i < sp; ++i) {
                const double xhat = (static_cast<double>(xr[i]) - mu) * is;
                double dx;
                if (train) {
                  dx = g * is * (static_cast<double>(gr[i]) - mean_dy - xhat * mean_dy_xhat);
                } else {
                  dx = g * is * static_cast<double>(gr[i]);
                }
                gxr[i] += static_cast<T>(dx);
              }
            }
          }
        }
      });
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear resize
// ---------------------------------------------------------------------------

namespace {

struct Taps {
  std::vector<int64_t> i0, i1;
  std::vector<double> t;  // weight of i1
};

// Half-pixel-center source coordinates; clamps or wraps at the borders.
Taps make_taps(int64_t in, int64_t out, bool wrap) {
  Taps taps;
  taps.i0.resize(static_cast<size_t>(out));
  taps.i1.resize(static_cast<size_t>(out));
  taps.t.resize(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    double f = std::floor(src);
    double t = src - f;
    int64_t a = static_cast<int64_t>(f);
    int64_t b;
    if (wrap) {
      a = ((a % in) + in) % in;
      b = (a + 1) % in;
    } else {
      if (a < 0) { a = 0; t = 0.0; }
      if (a > in - 1) { a = in - 1; t = 0.0; }
      b = std::min<int64_t>(a + 1, in - 1);
    }
    taps.i0[static_cast<size_t>(o)] = a;
    taps.i1[static_cast<size_t>(o)] = b;
    taps.t[static_cast<size_t>(o)] = t;
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
  if (x.rank() < 2) throw std::invalid_argument("bilinear_resize input must have H,W axes");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize output extents must be >= 1");
  const int r = x.rank();
  const int64_t h = x.dim(r - 2), w = x.dim(r - 1);
  const int64_t lead = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(r - 2)] = out_h;
  out_shape[static_cast<size_t>(r - 1)] = out_w;

  auto ty = std::make_shared<Taps>(make_taps(h, out_h, false));
  auto tx = std::make_shared<Taps>(make_taps(w, out_w, true));

  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.ptr<T>();
    T* po = out.ptr<T>();
#pragma omp parallel for schedule(static) if (lead > 1)
    for (int64_t pl = 0; pl < lead; ++pl) {
      const T* xin = px + pl * h * w;
      T* yo = po + pl * out_h * out_w;
      for (int64_t oy = 0; oy < out_h; ++oy) {
        const T* r0 = xin + ty->i0[static_cast<size_t>(oy)] * w;
        const T* r1 = xin + ty->i1[static_cast<size_t>(oy)] * w;
        const T wy = static_cast<T>(ty->t[static_cast<size_t>(oy)]);
        T* orow = yo + oy * out_w;
        for (int64_t ox = 0; ox < out_w; ++ox) {
          const int64_t a = tx->i0[static_cast<size_t>(ox)], bcl = tx->i1[static_cast<size_t>(ox)];
          const T wx = static_cast<T>(tx->t[static_cast<size_t>(ox)]);
          const T top = (T(1) - wx) * r0[a] + wx * r0[bcl];
          const T bot = (T(1) - wx) * r1[a] + wx * r1[bcl];
          orow[ox] = (T(1) - wy) * top + wy * bot;
        }
      }
    }
  });

  detail::maybe_record(out, {&x}, [&]() -> std::function<void()> {
    auto sx = x.storage();
    auto so = out.storage();
    return [sx, so, ty, tx, lead, h, w, out_h, out_w]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sx->tracked) return;
        sx->ensure_grad();
        const T* go = so->grad<T>();
        T* gx = sx->grad<T>();
        for (int64_t pl = 0; pl < lead; ++pl) {
          const T* gyo = go + pl * out_h * out_w;
          T* gxi = gx + pl * h * w;
          for (int64_t oy = 0; oy < out_h; ++oy) {
            const int64_t y0 = ty->i0[static_cast<size_t>(oy)], y1 = ty->i1[static_cast<size_t>(oy)];
            const T wy = static_cast<T>(ty->t[static_cast<size_t>(oy)]);
            const T* grow = gyo + oy * out_w;
            for (int64_t ox = 0; ox < out_w; ++ox) {
              const int64_t a = tx->i0[static_cast<size_t>(ox)], bcl = tx->i1[static_cast<size_t>(ox)];
              const T wx = static_cast<T>(tx->t[static_cast<size_t>(ox)]);
              const T g = grow[ox];
              gxi[y0 * w + a] += (T(1) - wy) * (T(1) - wx) * g;
              gxi[y0 * w + bcl] += (T(1) - wy) * wx * g;
              gxi[y1 * w + a] += wy * (T(1) - wx) * g;
              gxi[y1 * w + bcl] += wy * wx * g;
            }
          }
        }
      });
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad) {
  if (x.rank() != 4) throw std::invalid_argument("max_pool2d input must be [B,C,H,W]");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = (h + 2 * pad - kernel) / stride + 1;
  const int64_t wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho < 1 || wo < 1) throw std::invalid_argument("max_pool2d: kernel larger than padded input");

  Tensor out = Tensor::zeros({b, c, ho, wo}, x.dtype());
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(b * c * ho * wo), 0);
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.ptr<T>();
    T* po = out.ptr<T>();
    for (int64_t pl = 0; pl < b * c; ++pl) {
      const T* xin = px + pl * h * w;
      for (int64_t oy = 0; oy < ho; ++oy) {
        for (int64_t ox = 0; ox < wo; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t bi = -1;
          for (int ky = 0; ky < kernel; ++ky) {
            const int64_t y = oy * stride + ky - pad;
            if (y < 0 || y >= h) continue;  // height never wraps
            for (int kx = 0; kx < kernel; ++kx) {
              int64_t xx = ox * stride + kx - pad;
              xx = ((xx % w) + w) % w;
              const T v = xin[y * w + xx];
              if (v > best) { best = v; bi = y * w + xx; }
            }
          }
          po[(pl * ho + oy) * wo + ox] = best;
          (*argmax)[static_cast<size_t>((pl * ho + oy) * wo + ox)] = bi;
        }
      }
    }
  });
  detail::maybe_record(out, {&x}, [&]() -> std::function<void()> {
    auto sx = x.storage();
    auto so = out.storage();
    const int64_t planes = b * c, plane_in = h * w, plane_out = ho * wo;
    return [sx, so, argmax, planes, plane_in, plane_out]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sx->tracked) return;
        sx->ensure_grad();
        const T* go = so->grad<T>();
        T* gx = sx->grad<T>();
        for (int64_t pl = 0; pl < planes; ++pl) {
          for (int64_t i = 0; i < plane_out; ++i) {
            const int64_t bi = (*argmax)[static_cast<size_t>(pl * plane_out + i)];
            if (bi >= 0) gx[pl * plane_in + bi] += go[pl * plane_out + i];
          }
        }
      });
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention
// ---------------------------------------------------------------------------

namespace {

// [B*W, D] -> [B*heads, W, dh]
Tensor split_heads(const Tensor& x2, int64_t b, int64_t w, int heads, int64_t dh) {
  Tensor t = reshape(x2, {b, w, heads, dh});
  t = transpose(t, {0, 2, 1, 3});
  return reshape(t, {b * heads, w, dh});
}

}  // namespace

Tensor mhsa(const Tensor& x, const MHSAParams& p) {
  if (x.rank() != 3) throw std::invalid_argument("mhsa input must be [B,D,W]");
  const int64_t b = x.dim(0), d = x.dim(1), w = x.dim(2);
  if (p.wq.rank() != 2 || p.wq.dim(0) != d || p.wq.dim(1) != d) {
    throw std::invalid_argument("mhsa: projection shape mismatch with D=" + std::to_string(d));
  }
  if (p.heads < 1 || d % p.heads != 0) {
    throw std::invalid_argument("mhsa: heads " + std::to_string(p.heads) + " must divide D " + std::to_string(d));
  }
  const int64_t dh = d / p.heads;

  Tensor cols = reshape(transpose(x, {0, 2, 1}), {b * w, d});  // rows are positions
  Tensor q = matmul(cols, p.wq);
  Tensor k = matmul(cols, p.wk);
  Tensor v = matmul(cols, p.wv);
  Tensor qh = split_heads(q, b, w, p.heads, dh);
  Tensor kh = split_heads(k, b, w, p.heads, dh);
  Tensor vh = split_heads(v, b, w, p.heads, dh);

  Tensor scores = scale(bmatmul(qh, transpose(kh, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = softmax_lastdim(scores);
  Tensor ctx = bmatmul(attn, vh);  // [B*heads, W, dh]

  Tensor merged = reshape(transpose(reshape(ctx, {b, static_cast<int64_t>(p.heads), w, dh}), {0, 2, 1, 3}),
                          {b * w, d});
  Tensor o = matmul(merged, p.wo);
  Tensor o_bdw = transpose(reshape(o, {b, w, d}), {0, 2, 1});
  return add(x, o_bdw);
}

// ---------------------------------------------------------------------------
// Pointwise activations
// ---------------------------------------------------------------------------

Tensor softplus(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  const int64_t n = x.numel();
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.ptr<T>();
    T* po = out.ptr<T>();
    for (int64_t i = 0; i < n; ++i) {
      const T v = px[i];
      po[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
    }
  });
  detail::maybe_record(out, {&x}, [&]() -> std::function<void()> {
    auto sx = x.storage();
    auto so = out.storage();
    return [sx, so, n]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sx->tracked) return;
        sx->ensure_grad();
        const T* go = so->grad<T>();
        const T* px = sx->data<T>();
        T* gx = sx->grad<T>();
        for (int64_t i = 0; i < n; ++i) {
          const T sig = T(1) / (T(1) + std::exp(-px[i]));
          gx[i] += go[i] * sig;
        }
      });
    };
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  const int64_t n = x.numel();
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.ptr<T>();
    T* po = out.ptr<T>();
    for (int64_t i = 0; i < n; ++i) po[i] = T(1) / (T(1) + std::exp(-px[i]));
  });
  detail::maybe_record(out, {&x}, [&]() -> std::function<void()> {
    auto sx = x.storage();
    auto so = out.storage();
    return [sx, so, n]() {
      dispatch(so->dtype, [&](auto tag) {
        using T = decltype(tag);
        if (!sx->tracked) return;
        sx->ensure_grad();
        const T* go = so->grad<T>();
        const T* y = so->data<T>();
        T* gx = sx->grad<T>();
        for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * y[i] * (T(1) - y[i]);
      });
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState make_adam(const std::vector<Tensor>& params, double base_lr, double poly_power,
                    int64_t total_steps) {
  if (total_steps < 1) throw std::invalid_argument("adam: total_steps must be >= 1");
  AdamState s;
  s.base_lr = base_lr;
  s.poly_power = poly_power;
  s.total_steps = total_steps;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor& p : params) {
    s.m.push_back(Tensor::zeros(p.shape(), p.dtype()));
    s.v.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
  return s;
}

double adam_lr(const AdamState& s) {
  if (s.t >= s.total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(s.t) / static_cast<double>(s.total_steps);
  return s.base_lr * std::pow(frac, s.poly_power);
}

void adam_step(const std::vector<Tensor>& params, AdamState& s) {
  if (params.size() != s.m.size()) throw std::invalid_argument("adam: parameter list changed size");
  const double lr = adam_lr(s);
  if (s.t >= s.total_steps && !s.lr_clamped) {
    s.lr_clamped = true;
    std::fprintf(stderr, "warning: adam step %lld past schedule end, lr clamped to 0\n",
                 static_cast<long long>(s.t));
  }
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t + 1));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t + 1));
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i];
    if (!p.has_grad()) throw std::runtime_error("adam: parameter without gradient");
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto st = p.storage();
      const T* g = st->grad<T>();
      T* pm = s.m[i].ptr<T>();
      T* pv = s.v[i].ptr<T>();
      T* pd = st->data<T>();
      const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
      const T lrT = static_cast<T>(lr), epsT = static_cast<T>(s.eps);
      const T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
      const int64_t n = p.numel();
      for (int64_t j = 0; j < n; ++j) {
        pm[j] = b1 * pm[j] + (T(1) - b1) * g[j];
        pv[j] = b2 * pv[j] + (T(1) - b2) * g[j] * g[j];
        const T mhat = pm[j] * ibc1;
        const T vhat = pv[j] * ibc2;
        pd[j] -= lrT * mhat / (std::sqrt(vhat) + epsT);
      }
    });
  }
  s.t += 1;
}

}  // namespace hoho::nn
