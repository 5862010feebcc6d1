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

#ifndef SKELEVISION_IMAGE_IO_HPP_
#define SKELEVISION_IMAGE_IO_HPP_

#include <torch/torch.h>

#include <filesystem>

namespace skv::image_io {

// Reads an 8- or 16-bit image as a [3, H, W] float32 RGB tensor in [0, 1].
torch::Tensor ReadImage(const std::filesystem::path& path);

// Writes a [3, H, W] tensor in [0, 1] as lossless PNG. With 8 bits, values
// that are multiples of 1/255 round-trip exactly.
void WriteImage(const std::filesystem::path& path, const torch::Tensor& image, int bits = 8);

// Single-channel boolean masks stored as 0/255 PNG.
torch::Tensor ReadMask(const std::filesystem::path& path);
void WriteMask(const std::filesystem::path& path, const torch::Tensor& mask);

}  // namespace skv::image_io

#endif  // SKELEVISION_IMAGE_IO_HPP_
