// Copyright 2026 The Clustered Sampling Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CLSAMP_ERROR_H_
#define CLSAMP_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace clsamp {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidAllocation,
  kDimensionMismatch,
  kBadMagic,
  kCountMismatch,
  kTruncatedFile,
  kIo,
  kFormat,
  kPoolExhausted,
  kLeafOverCapacity,
  kDegenerateConfig,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "InvalidArgument";
    case ErrorCode::kInvalidAllocation:
      return "InvalidAllocation";
    case ErrorCode::kDimensionMismatch:
      return "DimensionMismatch";
    case ErrorCode::kBadMagic:
      return "BadMagic";
    case ErrorCode::kCountMismatch:
      return "CountMismatch";
    case ErrorCode::kTruncatedFile:
      return "TruncatedFile";
    case ErrorCode::kIo:
      return "Io";
    case ErrorCode::kFormat:
      return "Format";
    case ErrorCode::kPoolExhausted:
      return "PoolExhausted";
    case ErrorCode::kLeafOverCapacity:
      return "LeafOverCapacity";
    case ErrorCode::kDegenerateConfig:
      return "DegenerateConfig";
  }
  return "Unknown";
}

}  // namespace clsamp

#endif  // CLSAMP_ERROR_H_
