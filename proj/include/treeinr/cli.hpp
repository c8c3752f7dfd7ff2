// Copyright 2026 The treeinr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TREEINR_CLI_HPP
#define TREEINR_CLI_HPP

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace treeinr {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitFormat = 3,
  kExitDiverged = 4,
  kExitIo = 5,
};

/// Runs one command. `args` excludes the program name. Reports go to `out`,
/// a single-line JSON error to `err`. Returns the process exit code.
///
/// Commands: compress, decompress, eval, analyze, sweep, replay. Every file
/// written is accompanied by `<file>.manifest.json`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Path of the manifest written next to `output`.
std::string manifest_path(const std::string& output);

}  // namespace treeinr

#endif  // TREEINR_CLI_HPP
