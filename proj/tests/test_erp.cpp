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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hoho/basis.hpp"
#include "hoho/erp.hpp"
#include "test_util.hpp"

using namespace hoho;
using namespace hoho::erp;
using testutil::max_abs_diff;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent exit-distance oracle: march until outside the box, bisect.
double march_exit(const CuboidScene& s, const Vec3& d) {
  auto inside = [&](double t) {
    const double x = s.px + t * d.x, y = s.py + t * d.y, z = s.pz + t * d.z;
    return x >= 0 && x <= s.lx && y >= 0 && y <= s.ly && z >= 0 && z <= s.lz;
  };
  double t = 0.0;
  const double step = 1e-3;
  while (inside(t + step)) t += step;
  double lo = t, hi = t + step;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (inside(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("pixel_to_ray produces unit directions and known angles") {
  SplitMix64 rng(1);
  for (int i = 0; i < 64; ++i) {
    const double u = rng.uniform(0.0, 255.999);
    const double v = rng.uniform(0.0, 127.999);
    const Vec3 d = pixel_to_ray(u, v, 128, 256);
    CHECK(std::abs(std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z) - 1.0) < 1e-6);
  }

  // image center: phi = 0; for H = 4, v = 1: theta = pi/8
  const Vec3 c = pixel_to_ray(256.0 / 2 - 0.5, 1.0, 4, 256);
  CHECK(std::abs(std::atan2(c.y, c.x)) < 1e-12);
  CHECK(c.z == doctest::Approx(std::sin(kPi / 8)));

  // top row at H = 512: theta = pi/2 - pi/1024
  const Vec3 t = pixel_to_ray(0.0, 0.0, 512, 1024);
  CHECK(t.z == doctest::Approx(std::sin(kPi / 2 - kPi / 1024.0)));

  CHECK_THROWS_AS(pixel_to_ray(-0.1, 0, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(pixel_to_ray(0, 4.0, 4, 4), std::invalid_argument);
}

TEST_CASE("rotate_erp angle zero is the identity (nearest, bit-exact)") {
  SplitMix64 rng(2);
  Tensor img = testutil::random_tensor({2, 16, 32}, rng, DType::kF32);
  Tensor out = rotate_erp(img, {RotAxis::kYaw, 0.0}, Interp::kNearest);
  CHECK(max_abs_diff(out, img) == 0.0);
}

TEST_CASE("yaw by pixel multiples is an exact circular column shift") {
  SplitMix64 rng(3);
  const int64_t h = 8, w = 16;
  Tensor img = testutil::random_tensor({1, h, w}, rng, DType::kF32);
  const int64_t k = 3;
  Tensor out = rotate_erp(img, {RotAxis::kYaw, 2.0 * kPi * k / w}, Interp::kNearest);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      CHECK(out.at(y * w + x) == img.at(y * w + ((x - k + w) % w)));
    }
  }
  // opposite yaw inverts it exactly
  Tensor back = rotate_erp(out, {RotAxis::kYaw, -2.0 * kPi * k / w}, Interp::kNearest);
  CHECK(max_abs_diff(back, img) == 0.0);
}

TEST_CASE("pitch roundtrip keeps mid-latitude content") {
  CuboidScene s;
  auto r = render_cuboid(s, 256, 512);
  // unit-range image from normalized depth
  Tensor img = Tensor::zeros({1, 256, 512}, DType::kF32);
  const double dmax = s.diagonal();
  for (int64_t i = 0; i < 256 * 512; ++i) img.set(i, r.depth.at(i) / dmax);

  const double a = 10.0 * kPi / 180.0;
  Tensor fwd = rotate_erp(img, {RotAxis::kPitch, a}, Interp::kBilinear);
  Tensor back = rotate_erp(fwd, {RotAxis::kPitch, -a}, Interp::kBilinear);

  double err = 0.0;
  int64_t count = 0;
  for (int64_t y = 26; y < 230; ++y) {  // exclude top/bottom 10% of rows
    for (int64_t x = 0; x < 512; ++x) {
      err += std::abs(back.at(y * 512 + x) - img.at(y * 512 + x));
      ++count;
    }
  }
  CHECK(err / static_cast<double>(count) < 0.05);
}

TEST_CASE("render_cuboid analytic values on a centered cube") {
  CuboidScene s;
  s.lx = s.ly = s.lz = 2.0;
  s.px = s.py = s.pz = 1.0;

  // H=3,W=5: pixel (u=2, v=1) looks along phi=0, theta=0
  auto r = render_cuboid(s, 3, 5);
  CHECK(r.depth.at(1 * 5 + 2) == doctest::Approx(1.0));
  CHECK(r.sem.at(1 * 5 + 2) == doctest::Approx(s.wall_class));

  // W=4: pixel u=2 has phi=pi/4 -> corner direction, depth sqrt(2)
  auto r2 = render_cuboid(s, 3, 4);
  CHECK(r2.depth.at(1 * 4 + 2) == doctest::Approx(std::sqrt(2.0)));

  // straight down at high H: depth -> pz, floor class
  auto r3 = render_cuboid(s, 512, 8);
  CHECK(r3.depth.at(511 * 8 + 3) == doctest::Approx(s.pz).epsilon(1e-4));
  CHECK(r3.sem.at(511 * 8 + 3) == doctest::Approx(s.floor_class));
  CHECK(r3.sem.at(0 * 8 + 3) == doctest::Approx(s.ceiling_class));

  // ceiling boundary at the phi=0 column sits at 45 deg for this cube
  auto r4 = render_cuboid(s, 512, 5);
  CHECK(r4.layout.ceil_v[2] == doctest::Approx(512.0 / 4 - 0.5).epsilon(1e-9));
  CHECK(r4.layout.floor_v[2] == doctest::Approx(3.0 * 512 / 4 - 0.5).epsilon(1e-9));
}

TEST_CASE("render depth matches the ray-marching oracle") {
  SplitMix64 rng(4);
  SceneRanges ranges;
  for (uint64_t idx = 0; idx < 3; ++idx) {
    CuboidScene s = sample_scene(99, idx, ranges);
    auto r = render_cuboid(s, 32, 64);
    for (int trial = 0; trial < 12; ++trial) {
      const int64_t u = static_cast<int64_t>(rng.next_below(64));
      const int64_t v = static_cast<int64_t>(rng.next_below(32));
      const Vec3 d = pixel_to_ray(static_cast<double>(u), static_cast<double>(v), 32, 64);
      const double expect = march_exit(s, d);
      CHECK(std::abs(r.depth.at(v * 64 + u) - expect) < 1e-4);
    }
  }
}

TEST_CASE("render depth is positive and bounded by the scene diagonal") {
  SceneRanges ranges;
  for (uint64_t idx = 0; idx < 4; ++idx) {
    CuboidScene s = sample_scene(7, idx, ranges);
    auto r = render_cuboid(s, 64, 128);
    const double diag = s.diagonal();
    for (int64_t i = 0; i < r.depth.numel(); ++i) {
      CHECK(r.depth.at(i) > 0.0);
      CHECK(r.depth.at(i) <= diag + 1e-9);
    }
  }
}

TEST_CASE("layout ground truth shape and corner probability peaks") {
  CuboidScene s;
  s.lx = 6.0; s.ly = 3.0; s.lz = 2.6;
  s.px = 2.0; s.py = 1.2; s.pz = 1.3;
  const int64_t h = 128, w = 256;
  auto r = render_cuboid(s, h, w);
  // boundaries are ordered and inside the image
  for (int64_t u = 0; u < w; ++u) {
    CHECK(r.layout.ceil_v[static_cast<size_t>(u)] >= 0.0);
    CHECK(r.layout.ceil_v[static_cast<size_t>(u)] < r.layout.floor_v[static_cast<size_t>(u)]);
    CHECK(r.layout.floor_v[static_cast<size_t>(u)] < static_cast<double>(h));
  }
  // thresholding the corner signal at 0.5 leaves exactly 4 peak groups
  int groups = 0;
  bool prev = r.layout.corner_prob[static_cast<size_t>(w - 1)] > 0.5;
  for (int64_t u = 0; u < w; ++u) {
    const bool cur = r.layout.corner_prob[static_cast<size_t>(u)] > 0.5;
    if (cur && !prev) ++groups;
    prev = cur;
  }
  CHECK(groups == 4);
}

TEST_CASE("rendered columns have at most two boundary kinks") {
  SceneRanges ranges;
  for (uint64_t idx = 0; idx < 3; ++idx) {
    CuboidScene s = sample_scene(21, idx, ranges);
    const int64_t h = 128, w = 64;
    auto r = render_cuboid(s, h, w);
    for (int64_t u = 0; u < w; ++u) {
      // second differences; large ones cluster only at the two face boundaries
      std::vector<double> d2(static_cast<size_t>(h - 2));
      double med_src = 0.0;
      for (int64_t v = 1; v + 1 < h; ++v) {
        d2[static_cast<size_t>(v - 1)] = std::abs(r.depth.at((v + 1) * w + u) - 2 * r.depth.at(v * w + u) +
                                                  r.depth.at((v - 1) * w + u));
        med_src = std::max(med_src, r.depth.at(v * w + u));
      }
      std::vector<double> sorted = d2;
      std::sort(sorted.begin(), sorted.end());
      const double med = sorted[sorted.size() / 2];
      const double tau = std::max(12.0 * med, 0.02 * med_src);
      // A kink between sample rows can mark two rows with one quiet row in
      // between; marks closer than 3 rows belong to one boundary event.
      int events = 0;
      int64_t last_mark = -10;
      for (int64_t i = 0; i < static_cast<int64_t>(d2.size()); ++i) {
        if (d2[static_cast<size_t>(i)] > tau) {
          if (i - last_mark > 2) ++events;
          last_mark = i;
        }
      }
      CHECK(events <= 2);
    }
  }
}

TEST_CASE("generate_dataset determinism and validation") {
  SceneRanges ranges;
  CuboidScene a = sample_scene(42, 3, ranges);
  CuboidScene b = sample_scene(42, 3, ranges);
  CHECK(a.lx == b.lx);
  CHECK(a.px == b.px);
  CHECK(a.pz == b.pz);
  CuboidScene c = sample_scene(42, 4, ranges);
  CHECK(a.lx != c.lx);

  CHECK_THROWS_AS(generate_dataset(1, 0, 16, 32, ranges), std::invalid_argument);
  SceneRanges bad;
  bad.min_lx = bad.max_lx = 0.5;  // cannot fit the camera margin
  CHECK_THROWS_AS(sample_scene(1, 0, bad), std::invalid_argument);

  auto ds = generate_dataset(5, 8, 16, 32, ranges);
  CHECK(ds.size() == 8);
  for (const auto& s : ds) {
    s.scene.validate();
    CHECK(s.scene.px >= ranges.cam_margin);
    CHECK(s.scene.px <= s.scene.lx - ranges.cam_margin);
  }
}

TEST_CASE("compression of rotated renders stays well defined and bounded") {
  // The Fig. 2 alignment-ordering claim itself is evaluated by acceptance
  // criterion 4; at unit level we pin down the machinery: rotation plus
  // per-column compression runs, errors are finite, and K=H collapses the
  // error regardless of rotation.
  SceneRanges ranges;
  auto ds = generate_dataset(11, 3, 64, 128, ranges);
  for (const auto& s : ds) {
    Tensor depth3 = reshape(s.render.depth, {1, 64, 128});
    Tensor rot = rotate_erp(depth3, {RotAxis::kPitch, 10 * kPi / 180}, Interp::kNearest);
    auto [recon, err] = basis::compress_columns(reshape(rot, {64, 128}), 16);
    double mean = 0.0;
    for (int64_t i = 0; i < err.numel(); ++i) mean += err.at(i);
    mean /= static_cast<double>(err.numel());
    CHECK(mean > 0.0);
    CHECK(mean < 1.0);
    auto [recon_full, err_full] = basis::compress_columns(reshape(rot, {64, 128}), 64);
    for (int64_t i = 0; i < err_full.numel(); i += 97) CHECK(err_full.at(i) < 1e-3);
  }
}

TEST_CASE("synth_input channels are deterministic and in range") {
  CuboidScene s;
  auto r = render_cuboid(s, 32, 64);
  Tensor in1 = synth_input(r.depth, r.sem, 3);
  Tensor in2 = synth_input(r.depth, r.sem, 3);
  CHECK(in1.shape() == Shape{3, 32, 64});
  CHECK(max_abs_diff(in1, in2) == 0.0);
  for (int64_t i = 0; i < in1.numel(); ++i) {
    CHECK(in1.at(i) >= 0.0);
    CHECK(in1.at(i) <= 1.0);
  }
}
