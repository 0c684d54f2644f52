// Copyright 2026 The qmejump Authors
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

#include <optional>
#include <stdexcept>
#include <string>

namespace qme {

enum class ErrorCode {
    InvalidDimension,
    InvalidParameter,
    HermiticityViolation,
    InvalidSpec,
    OutOfRange,
    DegeneratePair,
    StepSize,
    TrajectoryDeath,
    EmptyEnsemble,
    BlowUp,
    Truncation,
    InvalidInput,
    Config,
    GridMismatch,
};

const char* to_string(ErrorCode code);

// Every failure in the library is reported through this type. Some errors
// carry a number with them (the Hermiticity residual, the offending rate, ...).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what, std::optional<double> value = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), value_(value) {}

    ErrorCode code() const noexcept { return code_; }
    std::optional<double> value() const noexcept { return value_; }

private:
    ErrorCode code_;
    std::optional<double> value_;
};

}  // namespace qme
