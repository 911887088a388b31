/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mesbench {

/// Row-major dense matrix; most algorithms here walk samples row by row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
    Io,
    MissingColumn,
    UnknownFeature,
    InsufficientCompleteRows,
    TooFewRows,
    InvalidConfig,
    EmptyTable,
    SchemaMismatch,
    InvalidSpec,
    FoldTooSmall,
    AllTrialsFailed,
    ZeroTrueValue,
    LengthMismatch,
    TooFewRepetitions,
    InvalidAlpha,
    ZeroWeightSum,
    AllMethodsFailed,
    HandshakeMismatch,
    AdapterTimeout,
    ProtocolViolation,
    AdapterError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), m_code(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

}  // namespace mesbench
