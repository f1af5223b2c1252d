// Copyright 2026 The Hydra Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hydra/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "hydra/errors.hpp"

namespace hydra {
namespace {

constexpr char kMagic[8] = {'H', 'Y', 'D', 'R', 'A', 'C', 'K', 'P'};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open checkpoint for writing: " + path);
  }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path);
  }

 private:
  void le(std::uint64_t v, int bytes) {
    char buf[8];
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, bytes);
  }
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open checkpoint: " + path);
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1ull << 30)) throw IoError("corrupt checkpoint string length in " + path_);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void raw(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated checkpoint: " + path_);
  }

 private:
  std::uint64_t le(int bytes) {
    unsigned char buf[8];
    raw(reinterpret_cast<char*>(buf), static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::string path_;
  std::ifstream in_;
};

CheckpointHeader read_header(Reader& r, const std::string& path) {
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a hydra checkpoint: " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointHeader h;
  h.kind = r.str();
  h.config = ModelConfig::from_text(r.str());
  return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind, const ModelConfig& config,
                     const ParamList& params) {
  Writer w(path);
  w.raw(kMagic, 8);
  w.u32(kCheckpointVersion);
  w.str(kind);
  w.str(config.to_text());
  w.u64(params.items().size());
  for (const Param& p : params.items()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t dim : p.value.shape()) w.u64(dim);
    for (double v : p.value.data()) w.f64(v);
  }
  w.finish(path);
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  Reader r(path);
  return read_header(r, path);
}

CheckpointHeader load_checkpoint(const std::string& path, ParamList& params) {
  Reader r(path);
  CheckpointHeader h = read_header(r, path);
  std::map<std::string, Param*> by_name;
  for (Param& p : params.items()) by_name[p.name] = &p;

  const std::uint64_t n = r.u64();
  if (n != params.items().size()) {
    throw InputError("checkpoint has " + std::to_string(n) + " parameters, model has " +
                     std::to_string(params.items().size()));
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("checkpoint parameter not in model: " + name);
    Tensor& t = it->second->value;
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& dim : shape) dim = r.u64();
    if (shape != t.shape()) {
      throw InputError("checkpoint shape " + shape_str(shape) + " for " + name + ", model has " +
                       shape_str(t.shape()));
    }
    for (double& v : t.data()) v = r.f64();
  }
  return h;
}

}  // namespace hydra
