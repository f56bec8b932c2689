// Copyright 2026 The PatchContrast Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace patchcontrast {

// Values mirror the pc_status codes exported by the C API.
enum class ErrorCode : int {
  kDimension = 1,
  kFormat = 2,
  kArgument = 3,
  kContract = 4,
  kFit = 5,
  kConfig = 6,
  kIo = 7,
  kNumeric = 8,
  kCheckpoint = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define PC_DEFINE_ERROR(Name, Code) \
  class Name : public Error {       \
   public:                          \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

PC_DEFINE_ERROR(DimensionError, kDimension)
PC_DEFINE_ERROR(FormatError, kFormat)
PC_DEFINE_ERROR(ArgumentError, kArgument)
PC_DEFINE_ERROR(ContractViolation, kContract)
PC_DEFINE_ERROR(FitError, kFit)
PC_DEFINE_ERROR(ConfigError, kConfig)
PC_DEFINE_ERROR(IoError, kIo)
PC_DEFINE_ERROR(NumericError, kNumeric)
PC_DEFINE_ERROR(CheckpointError, kCheckpoint)

#undef PC_DEFINE_ERROR

}  // namespace patchcontrast
