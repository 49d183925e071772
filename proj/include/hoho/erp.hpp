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
#include <vector>

#include "hoho/rng.hpp"
#include "hoho/tensor.hpp"

namespace hoho::erp {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

/// Axis-aligned room [0,Lx] x [0,Ly] x [0,Lz] with the camera strictly
/// inside. World frame is z-up; gravity alignment means the camera frame
/// shares the world z axis.
struct CuboidScene {
  double lx = 4.0, ly = 4.0, lz = 3.0;
  double px = 2.0, py = 2.0, pz = 1.5;
  int wall_class = 0;
  int floor_class = 1;
  int ceiling_class = 2;

  void validate() const;
  double diagonal() const;
};

enum class RotAxis { kYaw, kPitch, kRoll };

struct Rotation {
  RotAxis axis = RotAxis::kYaw;
  double angle = 0.0;  // radians, |angle| <= pi
};

enum class Interp { kNearest, kBilinear };

/// Per-column layout ground truth in the HorizonNet-style 1D encoding:
/// fractional row coordinates of the wall-ceiling and wall-floor boundaries
/// plus a smoothed corner-probability signal.
struct LayoutGT1D {
  std::vector<double> ceil_v;
  std::vector<double> floor_v;
  std::vector<double> corner_prob;
};

/// ERP pixel to unit ray: longitude phi = 2*pi*(u+1/2)/W - pi,
/// latitude theta = pi/2 - pi*(v+1/2)/H, z up.
Vec3 pixel_to_ray(double u, double v, int64_t h, int64_t w);

/// Inverse mapping of a direction to fractional pixel coordinates.
void ray_to_pixel(const Vec3& d, int64_t h, int64_t w, double* u, double* v);

/// Resamples an ERP image under a sphere rotation: output pixel (u,v) reads
/// the input at R^-1 * pixel_to_ray(u,v). Yaw rotates about z, pitch about
/// y, roll about x. Bilinear sampling wraps in width and clamps in height.
Tensor rotate_erp(const Tensor& img, const Rotation& rot, Interp interp);

struct RenderResult {
  Tensor depth;  // [H, W], Euclidean ray distance in meters
  Tensor sem;    // [H, W], face class labels stored as floats
  LayoutGT1D layout;
};

/// Analytic render: closed-form ray/box exit distance per pixel, face labels,
/// and exact per-column layout boundaries. Corner probability is a Gaussian
/// of the circular column distance to the nearest corner, sigma = W/256.
RenderResult render_cuboid(const CuboidScene& scene, int64_t h, int64_t w);

struct SceneRanges {
  double min_lx = 2.5, max_lx = 8.0;
  double min_ly = 2.5, max_ly = 8.0;
  double min_lz = 2.4, max_lz = 3.6;
  double cam_margin = 0.3;  // min camera distance to every face
};

/// Scene parameters drawn from the stream mix(seed, kScene, index):
/// Lx, Ly, Lz then px, py, pz, uniform in their ranges.
CuboidScene sample_scene(uint64_t seed, uint64_t index, const SceneRanges& ranges);

struct SceneSample {
  CuboidScene scene;
  RenderResult render;
};

std::vector<SceneSample> generate_dataset(uint64_t seed, int count, int64_t h, int64_t w,
                                          const SceneRanges& ranges);

/// The deterministic 3-channel network input synthesized from ground truth:
/// channel 0 is the normalized depth-gradient magnitude g/(1+g), channel 1 a
/// per-class albedo (1+label)/(1+num_classes), channel 2 the normalized row
/// coordinate (v+1/2)/H.
Tensor synth_input(const Tensor& depth, const Tensor& sem, int num_classes);

}  // namespace hoho::erp
