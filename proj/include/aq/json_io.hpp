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

#ifndef AQ_JSON_IO_HPP_
#define AQ_JSON_IO_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"

namespace aq {

using Json = nlohmann::json;

// Formats a double with 17 significant digits, which round-trips any
// IEEE-754 binary64 value exactly.
std::string format_double(double value);

// Serializes a document. Floating-point numbers are always written with 17
// significant digits; object keys keep nlohmann's sorted order so output is
// byte-stable. indent < 0 produces a single line.
std::string dump_json(const Json& doc, int indent = -1);

Json parse_json(const std::string& text, const std::string& what);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace aq

#endif  // AQ_JSON_IO_HPP_
