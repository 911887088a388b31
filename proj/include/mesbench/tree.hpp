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
#include "mesbench/rng.hpp"

#include "json.hpp"

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace mesbench {

enum class SplitCriterion { squared_error, absolute_error, poisson };

std::string_view to_string(SplitCriterion c) noexcept;
SplitCriterion parse_criterion(std::string_view text);

struct TreeParams {
    std::size_t max_depth = 0;  ///< 0 means unlimited
    SplitCriterion criterion = SplitCriterion::squared_error;
    std::size_t min_samples_split = 2;
    std::size_t max_features = 0;  ///< candidate features per split; 0 means all
};

/// Binary regression tree (CART). Samples with x[feature] <= threshold go left.
class RegressionTree {
public:
    struct Node {
        int feature = -1;  ///< -1 for leaves
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
    };

    /// Greedy fit on the rows listed in `sample` (repeats allowed, as produced
    /// by bootstrapping). Throws InvalidSpec for the poisson criterion when a
    /// target is not strictly positive.
    static RegressionTree fit(const Matrix& x, const Vector& y, std::span<const std::size_t> sample,
                              const TreeParams& params, Rng& rng);

    [[nodiscard]] double predict_row(const double* row) const noexcept;
    [[nodiscard]] Vector predict(const Matrix& x) const;

    [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return m_nodes; }
    [[nodiscard]] std::size_t depth() const noexcept;
    [[nodiscard]] std::size_t leaf_count() const noexcept;

    [[nodiscard]] nlohmann::json to_json() const;
    static RegressionTree from_json(const nlohmann::json& j);

private:
    std::vector<Node> m_nodes;
};

}  // namespace mesbench
