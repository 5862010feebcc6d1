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

#ifndef SKELEVISION_CHECKPOINT_HPP_
#define SKELEVISION_CHECKPOINT_HPP_

#include <filesystem>
#include <string>

#include "skelevision/model.hpp"

namespace skv::model {

// Checkpoint archive layout (little-endian):
//   magic "SKVCKPT1"
//   u32 length + model config digest (16 hex chars)
//   u32 length + canonical model config text
//   u32 entry count, then per entry in parameter registration order:
//     u32 length + dot-path name, u32 rank, i64 dims[rank], float32 data
// The archive holds no timestamps, so saving identical parameters always
// produces identical bytes.
void SaveCheckpoint(SiamRpn& model, const std::filesystem::path& path);

// Refuses (DataError) when the digest, a parameter name, or a shape differs.
void LoadCheckpoint(SiamRpn& model, const std::filesystem::path& path);

std::string ReadCheckpointDigest(const std::filesystem::path& path);

}  // namespace skv::model

#endif  // SKELEVISION_CHECKPOINT_HPP_
