/* Copyright 2026 The Skelevision Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "skelevision/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "skelevision/errors.hpp"

namespace skv::model {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'V', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void Put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void PutString(std::ostream& os, const std::string& s) {
  Put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T Get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("truncated checkpoint " + path.string());
  }
  return v;
}

std::string GetString(std::istream& is, const std::filesystem::path& path) {
  const auto n = Get<uint32_t>(is, path);
  if (n > (1u << 20)) throw DataError("corrupt string length in checkpoint " + path.string());
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw DataError("truncated checkpoint " + path.string());
  return s;
}

std::ifstream OpenAndCheckMagic(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint archive: " + path.string());
  }
  return is;
}

}  // namespace

void SaveCheckpoint(SiamRpn& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    PutString(os, model->config().Digest());
    PutString(os, model->config().Canonical());
    const auto params = model->named_parameters(/*recurse=*/true);
    Put<uint32_t>(os, static_cast<uint32_t>(params.size()));
    for (const auto& item : params) {
      PutString(os, item.key());
      const auto t = item.value().detach().to(torch::kCPU, torch::kFloat32).contiguous();
      Put<uint32_t>(os, static_cast<uint32_t>(t.dim()));
      for (int64_t d : t.sizes()) Put<int64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
               static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!os) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string ReadCheckpointDigest(const std::filesystem::path& path) {
  auto is = OpenAndCheckMagic(path);
  return GetString(is, path);
}

void LoadCheckpoint(SiamRpn& model, const std::filesystem::path& path) {
  auto is = OpenAndCheckMagic(path);
  const std::string digest = GetString(is, path);
  const std::string canonical = GetString(is, path);
  if (digest != model->config().Digest()) {
    throw DataError("checkpoint " + path.string() + " has config digest " + digest + " (" +
                    canonical + "), model expects " + model->config().Digest() + " (" +
                    model->config().Canonical() + ")");
  }
  auto params = model->named_parameters(/*recurse=*/true);
  const auto count = Get<uint32_t>(is, path);
  if (count != params.size()) {
    throw DataError("checkpoint parameter count " + std::to_string(count) + " != model " +
                    std::to_string(params.size()));
  }
  torch::NoGradGuard no_grad;
  for (auto& item : params) {
    const std::string name = GetString(is, path);
    if (name != item.key()) {
      throw DataError("checkpoint entry '" + name + "' where '" + item.key() + "' was expected");
    }
    const auto rank = Get<uint32_t>(is, path);
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = Get<int64_t>(is, path);
    if (torch::IntArrayRef(dims) != item.value().sizes()) {
      throw DataError("shape mismatch for " + name);
    }
    auto buf = torch::empty(dims, torch::kFloat32);
    if (!is.read(reinterpret_cast<char*>(buf.data_ptr<float>()),
                 static_cast<std::streamsize>(buf.numel() * sizeof(float)))) {
      throw DataError("truncated checkpoint " + path.string());
    }
    item.value().copy_(buf.to(item.value().dtype()));
  }
}

}  // namespace skv::model
