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

#include "mesbench/table.hpp"

#include "mesbench/common.hpp"
#include "mesbench/csv.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace mesbench {

void FeatureTable::check_length(std::size_t n) {
    if (!m_columns.empty() && n != m_rows) {
        throw Error(ErrorCode::SchemaMismatch, "column length " + std::to_string(n) +
                                                   " differs from table rows " +
                                                   std::to_string(m_rows));
    }
    m_rows = n;
}

void FeatureTable::add_categorical(std::string name, std::vector<std::string> labels) {
    check_length(labels.size());
    m_columns.push_back(Column{std::move(name), ColumnKind::categorical, std::move(labels), {}});
}

void FeatureTable::add_numeric(std::string name, std::vector<double> values) {
    check_length(values.size());
    m_columns.push_back(Column{std::move(name), ColumnKind::numeric, {}, std::move(values)});
}

std::vector<std::string> FeatureTable::names() const {
    std::vector<std::string> out;
    out.reserve(m_columns.size());
    for (const auto& c : m_columns) {
        out.push_back(c.name);
    }
    return out;
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> indices) const {
    FeatureTable out;
    for (const auto& c : m_columns) {
        if (c.kind == ColumnKind::categorical) {
            std::vector<std::string> labels;
            labels.reserve(indices.size());
            for (auto i : indices) {
                labels.push_back(c.labels.at(i));
            }
            out.add_categorical(c.name, std::move(labels));
        } else {
            std::vector<double> values;
            values.reserve(indices.size());
            for (auto i : indices) {
                values.push_back(c.values.at(i));
            }
            out.add_numeric(c.name, std::move(values));
        }
    }
    out.m_rows = indices.size();
    return out;
}

FeatureTable FeatureTable::row(std::size_t index) const {
    const std::size_t one[] = {index};
    return select_rows(one);
}

bool FeatureTable::same_schema(const FeatureTable& other) const noexcept {
    if (m_columns.size() != other.m_columns.size()) {
        return false;
    }
    for (std::size_t j = 0; j < m_columns.size(); ++j) {
        if (m_columns[j].name != other.m_columns[j].name ||
            m_columns[j].kind != other.m_columns[j].kind) {
            return false;
        }
    }
    return true;
}

std::string FeatureTable::to_csv(const std::vector<double>* target,
                                 const std::string& target_name) const {
    std::ostringstream out;
    std::vector<std::string> fields = names();
    if (target != nullptr) {
        fields.push_back(target_name);
    }
    csv::write_row(out, fields);
    for (std::size_t i = 0; i < m_rows; ++i) {
        fields.clear();
        for (const auto& c : m_columns) {
            fields.push_back(c.kind == ColumnKind::categorical ? c.labels[i]
                                                               : csv::format_double(c.values[i]));
        }
        if (target != nullptr) {
            fields.push_back(csv::format_double(target->at(i)));
        }
        csv::write_row(out, fields);
    }
    return out.str();
}

namespace {
double parse_number(const std::string& text, std::size_t line, const std::string& column) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(line) + " column '" +
                                                   column + "': not a number: '" + text + "'");
    }
    return v;
}
}  // namespace

FeatureTable table_from_csv(const std::string& text, const std::vector<std::string>& categorical,
                            const std::string& target_name, std::vector<double>* target) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::EmptyTable, "csv text has no header");
    }
    const auto header = csv::split_line(line);
    std::vector<std::vector<std::string>> cells(header.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto fields = csv::split_line(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::SchemaMismatch,
                        "line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            cells[j].push_back(std::move(fields[j]));
        }
    }
    FeatureTable table;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const bool is_cat =
            std::find(categorical.begin(), categorical.end(), header[j]) != categorical.end();
        if (header[j] == target_name) {
            if (target != nullptr) {
                target->clear();
                for (std::size_t i = 0; i < cells[j].size(); ++i) {
                    target->push_back(parse_number(cells[j][i], i + 2, header[j]));
                }
            }
            continue;
        }
        if (is_cat) {
            table.add_categorical(header[j], std::move(cells[j]));
        } else {
            std::vector<double> values;
            values.reserve(cells[j].size());
            for (std::size_t i = 0; i < cells[j].size(); ++i) {
                values.push_back(parse_number(cells[j][i], i + 2, header[j]));
            }
            table.add_numeric(header[j], std::move(values));
        }
    }
    return table;
}

}  // namespace mesbench
