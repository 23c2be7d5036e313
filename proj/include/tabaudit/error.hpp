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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tabaudit {

enum class ErrorCode {
  kInvalidArgument,
  kDegenerateInput,
  kMissingFile,
  kHeaderMismatch,
  kOutOfRange,
  kUnknownLevel,
  kMissingValue,
  kMalformedValue,
  kDuplicateRecord,
  kIncompatibleMode,
  kNoGuarantee,
  kDegenerateMarginal,
  kConfig,
  kIo,
};

constexpr std::string_view ToString(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDegenerateInput: return "degenerate_input";
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kHeaderMismatch: return "header_mismatch";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kUnknownLevel: return "unknown_level";
    case ErrorCode::kMissingValue: return "missing_value";
    case ErrorCode::kMalformedValue: return "malformed_value";
    case ErrorCode::kDuplicateRecord: return "duplicate_record";
    case ErrorCode::kIncompatibleMode: return "incompatible_mode";
    case ErrorCode::kNoGuarantee: return "no_guarantee";
    case ErrorCode::kDegenerateMarginal: return "degenerate_marginal";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

// The single exception type thrown by the library. The code lets callers
// (tests, the CLI exit-code mapping) branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, const std::string& message,
                    ErrorCode code = ErrorCode::kInvalidArgument) {
  if (!condition) throw Error(code, message);
}

}  // namespace tabaudit
