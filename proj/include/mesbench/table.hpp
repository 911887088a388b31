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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mesbench {

enum class ColumnKind { categorical, numeric };

/// One named feature column. Exactly one of `labels` / `values` is populated,
/// depending on `kind`.
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<std::string> labels;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const noexcept {
        return kind == ColumnKind::categorical ? labels.size() : values.size();
    }
};

/// Column-oriented table of raw (unencoded) features.
class FeatureTable {
public:
    FeatureTable() = default;

    void add_categorical(std::string name, std::vector<std::string> labels);
    void add_numeric(std::string name, std::vector<double> values);

    [[nodiscard]] const std::vector<Column>& columns() const noexcept { return m_columns; }
    [[nodiscard]] std::size_t rows() const noexcept { return m_rows; }
    [[nodiscard]] std::size_t width() const noexcept { return m_columns.size(); }
    [[nodiscard]] std::vector<std::string> names() const;

    /// Rows in the given order; indices may repeat.
    [[nodiscard]] FeatureTable select_rows(std::span<const std::size_t> indices) const;
    [[nodiscard]] FeatureTable row(std::size_t index) const;

    /// Same names and kinds, in the same order.
    [[nodiscard]] bool same_schema(const FeatureTable& other) const noexcept;

    /// Header line plus one line per row.
    [[nodiscard]] std::string to_csv(const std::vector<double>* target = nullptr,
                                     const std::string& target_name = "price") const;

private:
    void check_length(std::size_t n);

    std::vector<Column> m_columns;
    std::size_t m_rows = 0;
};

/// Parses csv text produced by `FeatureTable::to_csv`. Columns listed in
/// `categorical` are read as labels, the rest as numbers; `target_name`, when
/// present, is split off into `target`.
FeatureTable table_from_csv(const std::string& text, const std::vector<std::string>& categorical,
                            const std::string& target_name, std::vector<double>* target);

}  // namespace mesbench
