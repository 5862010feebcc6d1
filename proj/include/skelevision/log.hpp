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

#ifndef SKELEVISION_LOG_HPP_
#define SKELEVISION_LOG_HPP_

#include <sstream>
#include <string>

namespace skv::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

// Messages below the threshold are dropped. Default kInfo; the
// SKELEVISION_LOG environment variable (debug|info|warn|error|off) overrides it.
void SetLevel(Level level);
Level GetLevel();

void Write(Level level, const std::string& message);

// Concatenates arguments with operator<<.
template <typename... Args>
void Info(const Args&... args) {
  if (GetLevel() > Level::kInfo) return;
  std::ostringstream os;
  (os << ... << args);
  Write(Level::kInfo, os.str());
}

template <typename... Args>
void Warn(const Args&... args) {
  if (GetLevel() > Level::kWarn) return;
  std::ostringstream os;
  (os << ... << args);
  Write(Level::kWarn, os.str());
}

}  // namespace skv::log

#endif  // SKELEVISION_LOG_HPP_
