/* Copyright 2026 The aqtune Authors. All Rights Reserved.

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

#ifndef AQ_CLI_HPP_
#define AQ_CLI_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aq/json_io.hpp"
#include "aq/types.hpp"

namespace aq::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitTraining = 3,
};

// args[0] is the program name. Results go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

// Accepts a bare array of configs, {"configs": [...]}, or a single-selection
// export {"config": [...], ...}. Throws kInput naming the offending index and
// layer; layer_count, when given, must match every config.
std::vector<QuantConfig> parse_config_document(const Json& doc, std::optional<std::size_t> layer_count);
std::vector<QuantConfig> read_config_document(const std::filesystem::path& path,
                                              std::optional<std::size_t> layer_count);

}  // namespace aq::cli

#endif  // AQ_CLI_HPP_
