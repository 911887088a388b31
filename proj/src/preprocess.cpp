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

#include "mesbench/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace mesbench {

Preprocessor Preprocessor::fit(const FeatureTable& train, bool standardize) {
    if (train.rows() == 0) {
        throw Error(ErrorCode::EmptyTable, "cannot fit a preprocessor on zero rows");
    }
    Preprocessor p;
    p.m_standardize = standardize;
    for (const auto& column : train.columns()) {
        ColumnState state;
        state.name = column.name;
        state.kind = column.kind;
        if (column.kind == ColumnKind::categorical) {
            for (const auto& label : column.labels) {
                if (std::find(state.vocabulary.begin(), state.vocabulary.end(), label) ==
                    state.vocabulary.end()) {
                    state.vocabulary.push_back(label);
                }
            }
            p.m_width += state.vocabulary.size();
        } else {
            if (standardize) {
                const auto n = static_cast<double>(column.values.size());
                double sum = 0.0;
                for (double v : column.values) {
                    sum += v;
                }
                state.mean = sum / n;
                double ss = 0.0;
                for (double v : column.values) {
                    ss += (v - state.mean) * (v - state.mean);
                }
                const double sd = std::sqrt(ss / n);
                state.scale = sd > 0.0 ? sd : 1.0;
            }
            p.m_width += 1;
        }
        p.m_columns.push_back(std::move(state));
    }
    return p;
}

Matrix Preprocessor::transform(const FeatureTable& table) const {
    const auto& columns = table.columns();
    if (columns.size() != m_columns.size()) {
        throw Error(ErrorCode::SchemaMismatch, "expected " + std::to_string(m_columns.size()) +
                                                   " columns, got " +
                                                   std::to_string(columns.size()));
    }
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j].name != m_columns[j].name || columns[j].kind != m_columns[j].kind) {
            throw Error(ErrorCode::SchemaMismatch,
                        "column " + std::to_string(j) + " is '" + columns[j].name +
                            "', fitted as '" + m_columns[j].name + "'");
        }
    }

    const auto n = static_cast<Eigen::Index>(table.rows());
    Matrix out = Matrix::Zero(n, static_cast<Eigen::Index>(m_width));
    Eigen::Index offset = 0;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const auto& state = m_columns[j];
        if (state.kind == ColumnKind::categorical) {
            std::unordered_map<std::string, Eigen::Index> slot;
            for (std::size_t k = 0; k < state.vocabulary.size(); ++k) {
                slot.emplace(state.vocabulary[k], static_cast<Eigen::Index>(k));
            }
            for (Eigen::Index i = 0; i < n; ++i) {
                if (auto it = slot.find(columns[j].labels[static_cast<std::size_t>(i)]);
                    it != slot.end()) {
                    out(i, offset + it->second) = 1.0;
                }
            }
            offset += static_cast<Eigen::Index>(state.vocabulary.size());
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                out(i, offset) =
                    (columns[j].values[static_cast<std::size_t>(i)] - state.mean) / state.scale;
            }
            offset += 1;
        }
    }
    return out;
}

}  // namespace mesbench
