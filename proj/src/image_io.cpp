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

#include "skelevision/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "skelevision/errors.hpp"

namespace skv::image_io {

torch::Tensor ReadImage(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR | cv::IMREAD_ANYDEPTH);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  double max_value = 255.0;
  if (bgr.depth() == CV_16U) {
    max_value = 65535.0;
  } else if (bgr.depth() != CV_8U) {
    throw DataError("unsupported image depth in " + path.string());
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat f;
  rgb.convertTo(f, CV_64FC3);
  auto t = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat64);
  return (t.permute({2, 0, 1}) / max_value).to(torch::kFloat32).contiguous();
}

void WriteImage(const std::filesystem::path& path, const torch::Tensor& image, int bits) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("images must be [3, H, W]");
  if (bits != 8 && bits != 16) throw ConfigError("image bit depth must be 8 or 16");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const double max_value = bits == 8 ? 255.0 : 65535.0;
  const auto hwc = (image.detach().to(torch::kCPU, torch::kFloat64).clamp(0, 1) * max_value)
                       .round()
                       .permute({1, 2, 0})
                       .contiguous()
                       .to(bits == 8 ? torch::kUInt8 : torch::kInt32);
  cv::Mat rgb;
  if (bits == 8) {
    rgb = cv::Mat(static_cast<int>(image.size(1)), static_cast<int>(image.size(2)), CV_8UC3,
                  hwc.data_ptr<uint8_t>())
              .clone();
  } else {
    cv::Mat wide(static_cast<int>(image.size(1)), static_cast<int>(image.size(2)), CV_32SC3,
                 hwc.data_ptr<int32_t>());
    wide.convertTo(rgb, CV_16UC3);
  }
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

torch::Tensor ReadMask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DataError("cannot read mask " + path.string());
  auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
  return t > 127;
}

void WriteMask(const std::filesystem::path& path, const torch::Tensor& mask) {
  if (mask.dim() != 2) throw ShapeError("masks must be [H, W]");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto bytes = (mask.to(torch::kCPU).to(torch::kBool).to(torch::kUInt8) * 255).contiguous();
  cv::Mat m(static_cast<int>(mask.size(0)), static_cast<int>(mask.size(1)), CV_8UC1,
            bytes.data_ptr<uint8_t>());
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write mask " + path.string());
}

}  // namespace skv::image_io
