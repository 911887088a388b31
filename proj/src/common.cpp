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

#include "mesbench/common.hpp"

namespace mesbench {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Io: return "IoError";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::UnknownFeature: return "UnknownFeature";
        case ErrorCode::InsufficientCompleteRows: return "InsufficientCompleteRows";
        case ErrorCode::TooFewRows: return "TooFewRows";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::EmptyTable: return "EmptyTable";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::FoldTooSmall: return "FoldTooSmall";
        case ErrorCode::AllTrialsFailed: return "AllTrialsFailed";
        case ErrorCode::ZeroTrueValue: return "ZeroTrueValue";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooFewRepetitions: return "TooFewRepetitions";
        case ErrorCode::InvalidAlpha: return "InvalidAlpha";
        case ErrorCode::ZeroWeightSum: return "ZeroWeightSum";
        case ErrorCode::AllMethodsFailed: return "AllMethodsFailed";
        case ErrorCode::HandshakeMismatch: return "HandshakeMismatch";
        case ErrorCode::AdapterTimeout: return "AdapterTimeout";
        case ErrorCode::ProtocolViolation: return "ProtocolViolation";
        case ErrorCode::AdapterError: return "AdapterError";
    }
    return "Unknown";
}

}  // namespace mesbench
