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

#include "hoho/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace hoho::io {

namespace {

using nlohmann::json;

void put_u32le(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("unexpected end of file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32le(std::ostream& os, float v) { put_u32le(os, std::bit_cast<uint32_t>(v)); }
float get_f32le(std::istream& is) { return std::bit_cast<float>(get_u32le(is)); }

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return is;
}

}  // namespace

void write_f32r(const std::string& path, const Tensor& t) {
  if (t.rank() != 2 && t.rank() != 3) {
    throw std::invalid_argument("F32R raster must be [H,W] or [C,H,W], got " + shape_str(t.shape()));
  }
  const int64_t c = t.rank() == 3 ? t.dim(0) : 1;
  const int64_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  std::ofstream os = open_out(path);
  os.write("F32R", 4);
  put_u32le(os, static_cast<uint32_t>(c));
  put_u32le(os, static_cast<uint32_t>(h));
  put_u32le(os, static_cast<uint32_t>(w));
  for (int64_t i = 0; i < t.numel(); ++i) put_f32le(os, static_cast<float>(t.at(i)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor read_f32r(const std::string& path) {
  std::ifstream is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "F32R", 4) != 0) {
    throw std::runtime_error(path + ": bad F32R magic");
  }
  const int64_t c = get_u32le(is), h = get_u32le(is), w = get_u32le(is);
  Tensor t = Tensor::zeros({c, h, w}, DType::kF32);
  float* p = t.ptr<float>();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = get_f32le(is);
  if (!is) throw std::runtime_error(path + ": truncated F32R payload");
  return t;
}

void write_pgm16(const std::string& path, const Tensor& labels) {
  if (labels.rank() != 2) throw std::invalid_argument("PGM label map must be [H,W]");
  const int64_t h = labels.dim(0), w = labels.dim(1);
  std::ofstream os = open_out(path);
  os << "P5\n" << w << " " << h << "\n65535\n";
  for (int64_t i = 0; i < labels.numel(); ++i) {
    const double v = labels.at(i);
    if (v < 0 || v > 65535 || v != std::floor(v)) {
      throw std::invalid_argument("PGM16 labels must be integers in [0, 65535]");
    }
    const uint16_t s = static_cast<uint16_t>(v);
    const unsigned char b[2] = {static_cast<unsigned char>(s >> 8),
                                static_cast<unsigned char>(s & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor read_pgm16(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string magic;
  int64_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535) throw std::runtime_error(path + ": not a 16-bit P5 PGM");
  is.get();  // single whitespace after the header
  Tensor t = Tensor::zeros({h, w}, DType::kF32);
  float* p = t.ptr<float>();
  for (int64_t i = 0; i < t.numel(); ++i) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    p[i] = static_cast<float>((static_cast<uint16_t>(b[0]) << 8) | b[1]);
  }
  if (!is) throw std::runtime_error(path + ": truncated PGM payload");
  return t;
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream os = open_out(path);
  os.write("HOHO", 4);
  put_u32le(os, 1);  // version
  put_u32le(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32le(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32le(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32le(os, static_cast<uint32_t>(t.dim(i)));
    if (t.dtype() == DType::kF32) {
      const float* p = t.ptr<float>();
      for (int64_t i = 0; i < t.numel(); ++i) put_f32le(os, p[i]);
    } else {
      for (int64_t i = 0; i < t.numel(); ++i) put_f32le(os, static_cast<float>(t.at(i)));
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "HOHO", 4) != 0) {
    throw std::runtime_error(path + ": bad checkpoint magic");
  }
  const uint32_t version = get_u32le(is);
  if (version != 1) throw std::runtime_error(path + ": unsupported checkpoint version");
  const uint32_t count = get_u32le(is);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32le(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = get_u32le(is);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = get_u32le(is);
    Tensor t = Tensor::zeros(shape, DType::kF32);
    float* p = t.ptr<float>();
    for (int64_t e = 0; e < t.numel(); ++e) p[e] = get_f32le(is);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void write_scene_dir(const std::string& dir, const erp::CuboidScene& scene,
                     const erp::RenderResult& render, uint64_t seed, uint64_t index) {
  write_f32r(dir + "/depth.f32r", render.depth);
  write_pgm16(dir + "/sem.pgm", render.sem);
  const int64_t w = render.depth.dim(1);
  Tensor layout = Tensor::zeros({3, 1, w}, DType::kF32);
  for (int64_t u = 0; u < w; ++u) {
    layout.set(u, render.layout.ceil_v[static_cast<size_t>(u)]);
    layout.set(w + u, render.layout.floor_v[static_cast<size_t>(u)]);
    layout.set(2 * w + u, render.layout.corner_prob[static_cast<size_t>(u)]);
  }
  write_f32r(dir + "/layout.f32r", layout);

  json j;
  j["size"] = {scene.lx, scene.ly, scene.lz};
  j["camera"] = {scene.px, scene.py, scene.pz};
  j["classes"] = {{"wall", scene.wall_class}, {"floor", scene.floor_class}, {"ceiling", scene.ceiling_class}};
  j["seed"] = seed;
  j["index"] = index;
  j["input_synthesis"] =
      "3 channels synthesized from ground truth at load time: "
      "[0] depth-gradient magnitude g/(1+g) with central differences (width wraps, height clamps); "
      "[1] per-class albedo (1+label)/(1+num_classes); "
      "[2] normalized row (v+0.5)/H";
  std::ofstream os(dir + "/scene.json");
  if (!os) throw std::runtime_error("cannot write " + dir + "/scene.json");
  os << j.dump(2) << "\n";
}

SceneOnDisk read_scene_dir(const std::string& dir) {
  SceneOnDisk s;
  Tensor depth = read_f32r(dir + "/depth.f32r");
  s.depth = reshape(depth, {depth.dim(1), depth.dim(2)});
  s.sem = read_pgm16(dir + "/sem.pgm");
  Tensor layout = read_f32r(dir + "/layout.f32r");
  if (layout.dim(0) != 3) throw std::runtime_error(dir + ": layout.f32r must have 3 channels");
  const int64_t w = layout.dim(2);
  s.layout.ceil_v.resize(static_cast<size_t>(w));
  s.layout.floor_v.resize(static_cast<size_t>(w));
  s.layout.corner_prob.resize(static_cast<size_t>(w));
  for (int64_t u = 0; u < w; ++u) {
    s.layout.ceil_v[static_cast<size_t>(u)] = layout.at(u);
    s.layout.floor_v[static_cast<size_t>(u)] = layout.at(w + u);
    s.layout.corner_prob[static_cast<size_t>(u)] = layout.at(2 * w + u);
  }

  std::ifstream is(dir + "/scene.json");
  if (!is) throw std::runtime_error("cannot read " + dir + "/scene.json");
  json j = json::parse(is);
  s.scene.lx = j["size"][0];
  s.scene.ly = j["size"][1];
  s.scene.lz = j["size"][2];
  s.scene.px = j["camera"][0];
  s.scene.py = j["camera"][1];
  s.scene.pz = j["camera"][2];
  s.scene.wall_class = j["classes"]["wall"];
  s.scene.floor_class = j["classes"]["floor"];
  s.scene.ceiling_class = j["classes"]["ceiling"];
  return s;
}

void write_manifest(const std::string& dir, const std::vector<std::string>& scene_dirs,
                    uint64_t seed, int64_t h, int64_t w) {
  json j;
  j["scenes"] = scene_dirs;
  j["count"] = scene_dirs.size();
  j["seed"] = seed;
  j["height"] = h;
  j["width"] = w;
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw std::runtime_error("cannot write " + dir + "/manifest.json");
  os << j.dump(2) << "\n";
}

std::vector<std::string> read_manifest(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("cannot read " + dir + "/manifest.json (not a dataset directory?)");
  json j = json::parse(is);
  std::vector<std::string> out;
  for (const auto& s : j["scenes"]) out.push_back(dir + "/" + s.get<std::string>());
  return out;
}

}  // namespace hoho::io
