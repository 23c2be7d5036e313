// Copyright 2026 The Tabaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary payload helpers. Every binary file in the toolkit is one JSON header
// line followed by little-endian float64 arrays.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabaudit/error.hpp"

namespace tabaudit {

inline constexpr int kSchemaVersion = 1;

inline void WriteF64(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap64(bits);
    }
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
}

inline std::vector<double> ReadF64(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (auto& v : values) {
    char bytes[8];
    if (!in.read(bytes, 8)) {
      Fail(ErrorCode::kIo, "truncated float64 payload");
    }
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap64(bits);
    }
    v = std::bit_cast<double>(bits);
  }
  return values;
}

inline void WriteHeaderLine(std::ostream& out, const nlohmann::json& header) {
  out << header.dump() << '\n';
}

inline nlohmann::json ReadHeaderLine(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kIo, "missing JSON header line");
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, std::string("bad JSON header: ") + e.what());
  }
}

inline nlohmann::json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kMissingFile, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, path + ": " + e.what());
  }
}

inline void WriteJsonFile(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace tabaudit
