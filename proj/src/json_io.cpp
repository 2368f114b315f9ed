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

#include "aq/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aq/error.hpp"

namespace aq {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kDegenerateRange: return "degenerate-range";
    case ErrorKind::kUnsupportedStructure: return "unsupported-structure";
    case ErrorKind::kTooFewSamples: return "too-few-samples";
    case ErrorKind::kDegenerateEnvironment: return "degenerate-environment";
    case ErrorKind::kEncoding: return "encoding";
    case ErrorKind::kConsistency: return "consistency";
    case ErrorKind::kDescriptor: return "descriptor";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kEnvironmentBuild: return "environment-build";
    case ErrorKind::kInvariant: return "invariant";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

std::string format_double(double value) {
  if (!std::isfinite(value)) fail(ErrorKind::kInput, "cannot serialize non-finite number");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  std::string out(buf);
  // Keep the token recognizably floating point for readers that care.
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

namespace {

void emit(const Json& doc, int indent, int depth, std::string& out) {
  const bool pretty = indent >= 0;
  auto newline = [&](int d) {
    if (!pretty) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (doc.type()) {
    case Json::value_t::number_float:
      out += format_double(doc.get<double>());
      return;
    case Json::value_t::object: {
      if (doc.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += pretty ? ": " : ":";
        emit(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      // Arrays of scalars stay on one line even in pretty mode.
      bool scalar = true;
      for (const auto& v : doc) scalar = scalar && v.is_primitive();
      out += '[';
      bool first = true;
      for (const auto& v : doc) {
        if (!first) out += pretty && scalar ? ", " : ",";
        first = false;
        if (!scalar) newline(depth + 1);
        emit(v, indent, depth + 1, out);
      }
      if (!scalar && !doc.empty()) newline(depth);
      out += ']';
      return;
    }
    default:
      out += doc.dump();
  }
}

}  // namespace

std::string dump_json(const Json& doc, int indent) {
  std::string out;
  emit(doc, indent, 0, out);
  return out;
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::kParse, what + ": " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::filesystem::path& path) {
  return parse_json(read_text_file(path), path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace aq
