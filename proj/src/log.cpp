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

#include "skelevision/log.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <cstdio>
#include <string>

namespace skv::log {

namespace {

Level FromEnv() {
  const char* env = std::getenv("SKELEVISION_LOG");
  if (env == nullptr) return Level::kInfo;
  if (std::strcmp(env, "debug") == 0) return Level::kDebug;
  if (std::strcmp(env, "warn") == 0) return Level::kWarn;
  if (std::strcmp(env, "error") == 0) return Level::kError;
  if (std::strcmp(env, "off") == 0) return Level::kOff;
  return Level::kInfo;
}

std::atomic<Level>& Threshold() {
  static std::atomic<Level> level{FromEnv()};
  return level;
}

const char* Tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warning";
    case Level::kError: return "error";
    case Level::kOff: break;
  }
  return "";
}

}  // namespace

void SetLevel(Level level) { Threshold().store(level); }
Level GetLevel() { return Threshold().load(); }

void Write(Level level, const std::string& message) {
  if (level < GetLevel()) return;
  // One write per line keeps lines whole across forked workers.
  const std::string line = std::string("[") + Tag(level) + "] " + message + "\n";
  std::fwrite(line.data(), 1, line.size(), stderr);
}

}  // namespace skv::log
