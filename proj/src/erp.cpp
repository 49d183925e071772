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

#include "hoho/erp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hoho::erp {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Mat3 {
  double a[3][3];
  Vec3 apply(const Vec3& v) const {
    return {a[0][0] * v.x + a[0][1] * v.y + a[0][2] * v.z,
            a[1][0] * v.x + a[1][1] * v.y + a[1][2] * v.z,
            a[2][0] * v.x + a[2][1] * v.y + a[2][2] * v.z};
  }
};

Mat3 rotation_matrix(RotAxis axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  switch (axis) {
    case RotAxis::kYaw:  // about z
      return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    case RotAxis::kPitch:  // about y
      return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
    case RotAxis::kRoll:  // about x
    default:
      return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
  }
}

int64_t wrap_col(int64_t u, int64_t w) { return ((u % w) + w) % w; }

}  // namespace

void CuboidScene::validate() const {
  if (lx <= 0 || ly <= 0 || lz <= 0) throw std::invalid_argument("cuboid extents must be positive");
  if (px <= 0 || px >= lx || py <= 0 || py >= ly || pz <= 0 || pz >= lz) {
    throw std::invalid_argument("camera must be strictly inside the room");
  }
}

double CuboidScene::diagonal() const { return std::sqrt(lx * lx + ly * ly + lz * lz); }

Vec3 pixel_to_ray(double u, double v, int64_t h, int64_t w) {
  if (u < 0 || u >= static_cast<double>(w) || v < 0 || v >= static_cast<double>(h)) {
    throw std::invalid_argument("pixel_to_ray: coordinates out of range");
  }
  const double phi = 2.0 * kPi * (u + 0.5) / static_cast<double>(w) - kPi;
  const double theta = kPi / 2.0 - kPi * (v + 0.5) / static_cast<double>(h);
  const double ct = std::cos(theta);
  return {ct * std::cos(phi), ct * std::sin(phi), std::sin(theta)};
}

void ray_to_pixel(const Vec3& d, int64_t h, int64_t w, double* u, double* v) {
  const double phi = std::atan2(d.y, d.x);
  const double horiz = std::sqrt(d.x * d.x + d.y * d.y);
  const double theta = std::atan2(d.z, horiz);
  *u = (phi + kPi) * static_cast<double>(w) / (2.0 * kPi) - 0.5;
  *v = (kPi / 2.0 - theta) * static_cast<double>(h) / kPi - 0.5;
}

Tensor rotate_erp(const Tensor& img, const Rotation& rot, Interp interp) {
  if (img.rank() != 3) throw std::invalid_argument("rotate_erp expects [C,H,W]");
  if (std::abs(rot.angle) > kPi + 1e-12) throw std::invalid_argument("rotation angle must satisfy |angle| <= pi");
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const Mat3 rinv = rotation_matrix(rot.axis, -rot.angle);

  // Source coordinates are shared by all channels.
  std::vector<double> su(static_cast<size_t>(h * w)), sv(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const Vec3 d = rinv.apply(pixel_to_ray(static_cast<double>(x), static_cast<double>(y), h, w));
      ray_to_pixel(d, h, w, &su[static_cast<size_t>(y * w + x)], &sv[static_cast<size_t>(y * w + x)]);
    }
  }

  Tensor out = Tensor::zeros(img.shape(), img.dtype());
  const bool f32 = img.dtype() == DType::kF32;
  auto read = [&](int64_t ch, int64_t y, int64_t x) -> double {
    const int64_t i = (ch * h + y) * w + x;
    return f32 ? static_cast<double>(img.ptr<float>()[i]) : img.ptr<double>()[i];
  };
  auto write = [&](int64_t ch, int64_t y, int64_t x, double val) {
    const int64_t i = (ch * h + y) * w + x;
    if (f32) out.ptr<float>()[i] = static_cast<float>(val);
    else out.ptr<double>()[i] = val;
  };

  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const double uu = su[static_cast<size_t>(y * w + x)];
        const double vv = sv[static_cast<size_t>(y * w + x)];
        if (interp == Interp::kNearest) {
          const int64_t xi = wrap_col(static_cast<int64_t>(std::lround(uu)), w);
          const int64_t yi = std::clamp<int64_t>(std::lround(vv), 0, h - 1);
          write(ch, y, x, read(ch, yi, xi));
        } else {
          const double fu = std::floor(uu);
          const double fv = std::floor(vv);
          const double tu = uu - fu, tv = vv - fv;
          const int64_t x0 = wrap_col(static_cast<int64_t>(fu), w);
          const int64_t x1 = (x0 + 1) % w;
          const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(fv), 0, h - 1);
          const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
          const double top = (1.0 - tu) * read(ch, y0, x0) + tu * read(ch, y0, x1);
          const double bot = (1.0 - tu) * read(ch, y1, x0) + tu * read(ch, y1, x1);
          write(ch, y, x, (1.0 - tv) * top + tv * bot);
        }
      }
    }
  }
  return out;
}

namespace {

// Horizontal distance from the camera to the first wall along longitude phi.
double wall_distance(const CuboidScene& s, double phi) {
  const double cx = std::cos(phi), cy = std::sin(phi);
  double t = std::numeric_limits<double>::infinity();
  if (cx > 0) t = std::min(t, (s.lx - s.px) / cx);
  else if (cx < 0) t = std::min(t, -s.px / cx);
  if (cy > 0) t = std::min(t, (s.ly - s.py) / cy);
  else if (cy < 0) t = std::min(t, -s.py / cy);
  return t;
}

double theta_to_row(double theta, int64_t h) {
  return (kPi / 2.0 - theta) * static_cast<double>(h) / kPi - 0.5;
}

}  // namespace

RenderResult render_cuboid(const CuboidScene& scene, int64_t h, int64_t w) {
  scene.validate();
  RenderResult res;
  res.depth = Tensor::zeros({h, w}, DType::kF32);
  res.sem = Tensor::zeros({h, w}, DType::kF32);
  float* dp = res.depth.ptr<float>();
  float* sp = res.sem.ptr<float>();

  const double lims[3][2] = {{0.0, scene.lx}, {0.0, scene.ly}, {0.0, scene.lz}};
  const double pos[3] = {scene.px, scene.py, scene.pz};

  for (int64_t v = 0; v < h; ++v) {
    for (int64_t u = 0; u < w; ++u) {
      const Vec3 d = pixel_to_ray(static_cast<double>(u), static_cast<double>(v), h, w);
      const double dir[3] = {d.x, d.y, d.z};
      double t_exit = std::numeric_limits<double>::infinity();
      int axis = 0;
      int side = 0;
      // Exit distance of the interior ray; equal exits (edge hits) resolve
      // toward the lower axis index.
      for (int i = 0; i < 3; ++i) {
        double t;
        if (dir[i] > 0) t = (lims[i][1] - pos[i]) / dir[i];
        else if (dir[i] < 0) t = (lims[i][0] - pos[i]) / dir[i];
        else continue;
        if (t < t_exit) {
          t_exit = t;
          axis = i;
          side = dir[i] > 0 ? 1 : 0;
        }
      }
      dp[v * w + u] = static_cast<float>(t_exit);
      int label = scene.wall_class;
      if (axis == 2) label = side == 1 ? scene.ceiling_class : scene.floor_class;
      sp[v * w + u] = static_cast<float>(label);
    }
  }

  res.layout.ceil_v.resize(static_cast<size_t>(w));
  res.layout.floor_v.resize(static_cast<size_t>(w));
  res.layout.corner_prob.resize(static_cast<size_t>(w));

  // Corner longitudes in continuous column coordinates.
  const double corners[4][2] = {{0, 0}, {scene.lx, 0}, {scene.lx, scene.ly}, {0, scene.ly}};
  double corner_u[4];
  for (int i = 0; i < 4; ++i) {
    const double phi = std::atan2(corners[i][1] - scene.py, corners[i][0] - scene.px);
    corner_u[i] = (phi + kPi) * static_cast<double>(w) / (2.0 * kPi) - 0.5;
  }
  const double sigma = static_cast<double>(w) / 256.0;

  for (int64_t u = 0; u < w; ++u) {
    const double phi = 2.0 * kPi * (static_cast<double>(u) + 0.5) / static_cast<double>(w) - kPi;
    const double rho = wall_distance(scene, phi);
    const double theta_c = std::atan((scene.lz - scene.pz) / rho);
    const double theta_f = -std::atan(scene.pz / rho);
    res.layout.ceil_v[static_cast<size_t>(u)] = std::clamp(theta_to_row(theta_c, h), 0.0, static_cast<double>(h) - 1.0);
    res.layout.floor_v[static_cast<size_t>(u)] = std::clamp(theta_to_row(theta_f, h), 0.0, static_cast<double>(h) - 1.0);

    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
      double du = std::abs(static_cast<double>(u) - corner_u[i]);
      du = std::min(du, static_cast<double>(w) - du);
      best = std::min(best, du);
    }
    res.layout.corner_prob[static_cast<size_t>(u)] = std::exp(-best * best / (2.0 * sigma * sigma));
  }
  return res;
}

CuboidScene sample_scene(uint64_t seed, uint64_t index, const SceneRanges& r) {
  const double min_extent = 2.0 * r.cam_margin + 1e-6;
  if (r.min_lx < min_extent || r.min_ly < min_extent || r.min_lz < min_extent ||
      r.max_lx < r.min_lx || r.max_ly < r.min_ly || r.max_lz < r.min_lz) {
    throw std::invalid_argument("scene ranges cannot keep the camera margin from every face");
  }
  SplitMix64 rng = make_stream(seed, RngStream::kScene, index);
  CuboidScene s;
  s.lx = rng.uniform(r.min_lx, r.max_lx);
  s.ly = rng.uniform(r.min_ly, r.max_ly);
  s.lz = rng.uniform(r.min_lz, r.max_lz);
  s.px = rng.uniform(r.cam_margin, s.lx - r.cam_margin);
  s.py = rng.uniform(r.cam_margin, s.ly - r.cam_margin);
  s.pz = rng.uniform(r.cam_margin, s.lz - r.cam_margin);
  s.validate();
  return s;
}

std::vector<SceneSample> generate_dataset(uint64_t seed, int count, int64_t h, int64_t w,
                                          const SceneRanges& ranges) {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  std::vector<SceneSample> out(static_cast<size_t>(count));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < count; ++i) {
    out[static_cast<size_t>(i)].scene = sample_scene(seed, static_cast<uint64_t>(i), ranges);
    out[static_cast<size_t>(i)].render = render_cuboid(out[static_cast<size_t>(i)].scene, h, w);
  }
  return out;
}

Tensor synth_input(const Tensor& depth, const Tensor& sem, int num_classes) {
  if (depth.rank() != 2 || sem.rank() != 2 || depth.shape() != sem.shape()) {
    throw std::invalid_argument("synth_input expects matching [H,W] depth and label maps");
  }
  const int64_t h = depth.dim(0), w = depth.dim(1);
  Tensor out = Tensor::zeros({3, h, w}, DType::kF32);
  float* po = out.ptr<float>();
  const float* pd = depth.ptr<float>();
  const float* ps = sem.ptr<float>();
  for (int64_t y = 0; y < h; ++y) {
    const int64_t ym = std::max<int64_t>(y - 1, 0), yp = std::min<int64_t>(y + 1, h - 1);
    for (int64_t x = 0; x < w; ++x) {
      const int64_t xm = wrap_col(x - 1, w), xp = wrap_col(x + 1, w);
      const double gu = 0.5 * (static_cast<double>(pd[y * w + xp]) - static_cast<double>(pd[y * w + xm]));
      const double gv = 0.5 * (static_cast<double>(pd[yp * w + x]) - static_cast<double>(pd[ym * w + x]));
      const double g = std::abs(gu) + std::abs(gv);
      po[y * w + x] = static_cast<float>(g / (1.0 + g));
      po[(h + y) * w + x] =
          static_cast<float>((1.0 + static_cast<double>(ps[y * w + x])) / (1.0 + static_cast<double>(num_classes)));
      po[(2 * h + y) * w + x] = static_cast<float>((static_cast<double>(y) + 0.5) / static_cast<double>(h));
    }
  }
  return out;
}

}  // namespace hoho::erp
