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

#include "mesbench/common.hpp"
#include "mesbench/table.hpp"

#include <string>
#include <vector>

namespace mesbench {

/// One-hot encoding for categorical columns and standard scaling for numeric
/// ones, fitted on training rows only. Immutable after `fit`.
///
/// Unknown categories encode as an all-zero block. Numeric standard deviations
/// are population deviations; a constant column stores 1.0.
class Preprocessor {
public:
    struct ColumnState {
        std::string name;
        ColumnKind kind = ColumnKind::numeric;
        std::vector<std::string> vocabulary;  ///< first-appearance order
        double mean = 0.0;
        double scale = 1.0;
    };

    /// `standardize = false` keeps raw numeric values (mean 0, scale 1).
    static Preprocessor fit(const FeatureTable& train, bool standardize = true);

    [[nodiscard]] Matrix transform(const FeatureTable& table) const;

    [[nodiscard]] std::size_t output_width() const noexcept { return m_width; }
    [[nodiscard]] const std::vector<ColumnState>& columns() const noexcept { return m_columns; }
    [[nodiscard]] bool standardizes() const noexcept { return m_standardize; }

private:
    std::vector<ColumnState> m_columns;
    std::size_t m_width = 0;
    bool m_standardize = true;
};

}  // namespace mesbench
