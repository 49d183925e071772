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

#include <string>
#include <utility>
#include <vector>

#include "hoho/erp.hpp"
#include "hoho/tensor.hpp"

namespace hoho::io {

/// F32R raster: magic "F32R", u32-LE channels/height/width, then the payload
/// channel-major, row-major, 32-bit LE IEEE-754. Accepts [C,H,W] or [H,W].
void write_f32r(const std::string& path, const Tensor& t);
Tensor read_f32r(const std::string& path);  // always returns [C,H,W] f32

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples) for label maps.
void write_pgm16(const std::string& path, const Tensor& labels);
Tensor read_pgm16(const std::string& path);  // [H,W] f32 with integer values

/// Checkpoint container: magic "HOHO", u32-LE version=1, u32-LE tensor
/// count; per tensor u32-LE name length, UTF-8 name, u32-LE ndim, ndim
/// u32-LE dims, then the row-major f32-LE payload.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

/// One dataset scene directory: depth.f32r, sem.pgm, layout.f32r (3 x W:
/// ceil_v, floor_v, corner_prob), scene.json.
void write_scene_dir(const std::string& dir, const erp::CuboidScene& scene,
                     const erp::RenderResult& render, uint64_t seed, uint64_t index);

struct SceneOnDisk {
  erp::CuboidScene scene;
  Tensor depth;  // [H,W]
  Tensor sem;    // [H,W]
  erp::LayoutGT1D layout;
};
SceneOnDisk read_scene_dir(const std::string& dir);

/// Scene directories listed by a manifest.json at the dataset root.
void write_manifest(const std::string& dir, const std::vector<std::string>& scene_dirs,
                    uint64_t seed, int64_t h, int64_t w);
std::vector<std::string> read_manifest(const std::string& dir);

}  // namespace hoho::io
