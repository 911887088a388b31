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

#include "mesbench/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace mesbench {

std::string_view to_string(SplitCriterion c) noexcept {
    switch (c) {
        case SplitCriterion::squared_error: return "squared_error";
        case SplitCriterion::absolute_error: return "absolute_error";
        case SplitCriterion::poisson: return "poisson";
    }
    return "unknown";
}

SplitCriterion parse_criterion(std::string_view text) {
    for (auto c : {SplitCriterion::squared_error, SplitCriterion::absolute_error,
                   SplitCriterion::poisson}) {
        if (to_string(c) == text) {
            return c;
        }
    }
    throw Error(ErrorCode::InvalidSpec, "unknown split criterion '" + std::string(text) + "'");
}

namespace {

/// Running sum of absolute deviations from the median, one insertion at a time.
class RunningAbsDeviation {
public:
    /// Empties both halves while keeping their capacity.
    void clear() {
        m_low.clear();
        m_high.clear();
        m_low_sum = 0.0;
        m_high_sum = 0.0;
    }

    void push(double v) {
        if (m_low.empty() || v <= m_low.front()) {
            m_low.push_back(v);
            std::push_heap(m_low.begin(), m_low.end(), std::less<>());
            m_low_sum += v;
        } else {
            m_high.push_back(v);
            std::push_heap(m_high.begin(), m_high.end(), std::greater<>());
            m_high_sum += v;
        }
        if (m_low.size() > m_high.size() + 1) {
            move(m_low, m_low_sum, std::less<>(), m_high, m_high_sum, std::greater<>());
        } else if (m_high.size() > m_low.size()) {
            move(m_high, m_high_sum, std::greater<>(), m_low, m_low_sum, std::less<>());
        }
    }

    /// Sum |v - median|; any point between the two middle values minimises it.
    [[nodiscard]] double value() const {
        if (m_low.empty()) {
            return 0.0;
        }
        const double median = m_low.front();
        return (median * static_cast<double>(m_low.size()) - m_low_sum) +
               (m_high_sum - median * static_cast<double>(m_high.size()));
    }

private:
    template <typename FromCmp, typename ToCmp>
    static void move(std::vector<double>& from, double& from_sum, FromCmp from_cmp, std::vector<double>& to,
                     double& to_sum, ToCmp to_cmp) {
        std::pop_heap(from.begin(), from.end(), from_cmp);
        const double v = from.back();
        from.pop_back();
        from_sum -= v;
        to.push_back(v);
        std::push_heap(to.begin(), to.end(), to_cmp);
        to_sum += v;
    }

    std::vector<double> m_low;   // max-heap of the lower half
    std::vector<double> m_high;  // min-heap of the upper half
    double m_low_sum = 0.0;
    double m_high_sum = 0.0;
};

double median_of(std::vector<double> values) {
    const auto n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (n % 2 == 1) {
        return *mid;
    }
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, const Vector& y, std::span<const std::size_t> sample,
                const TreeParams& params, Rng& rng)
        : m_x(x), m_params(params), m_rng(rng), m_rows(sample.begin(), sample.end()) {
        const auto m = m_rows.size();
        m_targets.resize(m);
        for (std::size_t s = 0; s < m; ++s) {
            m_targets[s] = y(static_cast<Eigen::Index>(m_rows[s]));
        }
        const auto d = static_cast<std::size_t>(x.cols());
        m_orders.resize(d);
        for (std::size_t f = 0; f < d; ++f) {
            auto& order = m_orders[f];
            order.resize(m);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return value(a, f) < value(b, f);
            });
        }
        m_goes_left.assign(m, 0);
        m_scratch.resize(m);
    }

    std::vector<RegressionTree::Node> build() {
        struct Pending {
            int node;
            std::size_t begin;
            std::size_t end;
            std::size_t depth;
        };
        std::vector<RegressionTree::Node> nodes(1);
        std::vector<Pending> stack{{0, 0, m_rows.size(), 0}};
        while (!stack.empty()) {
            const auto [id, begin, end, depth] = stack.back();
            stack.pop_back();
            const auto node_index = static_cast<std::size_t>(id);
            nodes[node_index].value = leaf_value(begin, end);

            const bool depth_reached = m_params.max_depth > 0 && depth >= m_params.max_depth;
            if (depth_reached || end - begin < std::max<std::size_t>(2, m_params.min_samples_split) ||
                is_pure(begin, end)) {
                continue;
            }
            const auto split = best_split(begin, end);
            if (split.feature < 0) {
                continue;
            }
            const auto mid = partition(begin, end, split);
            nodes[node_index].feature = split.feature;
            nodes[node_index].threshold = split.threshold;
            const int left = static_cast<int>(nodes.size());
            nodes.emplace_back();
            const int right = static_cast<int>(nodes.size());
            nodes.emplace_back();
            nodes[node_index].left = left;
            nodes[node_index].right = right;
            stack.push_back({right, mid, end, depth + 1});
            stack.push_back({left, begin, mid, depth + 1});
        }
        return nodes;
    }

private:
    [[nodiscard]] double value(std::size_t slot, std::size_t feature) const {
        return m_x(static_cast<Eigen::Index>(m_rows[slot]), static_cast<Eigen::Index>(feature));
    }

    [[nodiscard]] bool is_pure(std::size_t begin, std::size_t end) const {
        const auto& order = m_orders.empty() ? m_identity : m_orders[0];
        if (order.empty()) {
            return true;
        }
        const double first = m_targets[order[begin]];
        for (std::size_t k = begin + 1; k < end; ++k) {
            if (m_targets[order[k]] != first) {
                return false;
            }
        }
        return true;
    }

    [[nodiscard]] double leaf_value(std::size_t begin, std::size_t end) const {
        if (m_orders.empty() || begin == end) {
            return 0.0;
        }
        const auto& order = m_orders[0];
        if (m_params.criterion == SplitCriterion::absolute_error) {
            std::vector<double> values;
            values.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) {
                values.push_back(m_targets[order[k]]);
            }
            return median_of(std::move(values));
        }
        double sum = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            sum += m_targets[order[k]];
        }
        return sum / static_cast<double>(end - begin);
    }

    /// Total child impurity for every split position; entry i splits after the
    /// i-th sample of the node (1-based), so indices 1..n-1 are meaningful.
    void child_impurities(const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                          std::vector<double>& out) {
        const std::size_t n = end - begin;
        out.assign(n, 0.0);
        switch (m_params.criterion) {
            case SplitCriterion::squared_error: {
                double total = 0.0;
                double total_sq = 0.0;
                for (std::size_t k = begin; k < end; ++k) {
                    const double t = m_targets[order[k]];
                    total += t;
                    total_sq += t * t;
                }
                double sum = 0.0;
                double sum_sq = 0.0;
                for (std::size_t i = 1; i < n; ++i) {
                    const double t = m_targets[order[begin + i - 1]];
                    sum += t;
                    sum_sq += t * t;
                    const auto nl = static_cast<double>(i);
                    const auto nr = static_cast<double>(n - i);
                    const double left = sum_sq - sum * sum / nl;
                    const double right = (total_sq - sum_sq) - (total - sum) * (total - sum) / nr;
                    out[i] = left + right;
                }
                break;
            }
            case SplitCriterion::absolute_error: {
                auto& prefix = m_prefix;
                prefix.clear();
                for (std::size_t i = 1; i < n; ++i) {
                    prefix.push(m_targets[order[begin + i - 1]]);
                    out[i] = prefix.value();
                }
                auto& suffix = m_suffix;
                suffix.clear();
                for (std::size_t i = n - 1; i >= 1; --i) {
                    suffix.push(m_targets[order[begin + i]]);
                    out[i] += suffix.value();
                }
                break;
            }
            case SplitCriterion::poisson: {
                // Deviance of a node = sum(y log y) - S log(S / n); the first term
                // is split-invariant, so only the second is tracked.
                double total = 0.0;
                for (std::size_t k = begin; k < end; ++k) {
                    total += m_targets[order[k]];
                }
                double sum = 0.0;
                for (std::size_t i = 1; i < n; ++i) {
                    sum += m_targets[order[begin + i - 1]];
                    const auto nl = static_cast<double>(i);
                    const auto nr = static_cast<double>(n - i);
                    const double rest = total - sum;
                    out[i] = -(sum * std::log(sum / nl)) - rest * std::log(rest / nr);
                }
                break;
            }
        }
    }

    SplitChoice best_split(std::size_t begin, std::size_t end) {
        const auto d = m_orders.size();
        std::vector<std::size_t> features(d);
        std::iota(features.begin(), features.end(), std::size_t{0});
        const std::size_t wanted =
            m_params.max_features == 0 ? d : std::min(m_params.max_features, d);
        if (wanted < d) {
            std::shuffle(features.begin(), features.end(), m_rng);
        }

        SplitChoice best;
        std::size_t informative = 0;
        for (auto f : features) {
            if (informative >= wanted) {
                break;
            }
            const auto& order = m_orders[f];
            if (value(order[begin], f) == value(order[end - 1], f)) {
                continue;  // constant here; does not count towards max_features
            }
            ++informative;
            child_impurities(order, begin, end, m_impurity);
            for (std::size_t i = 1; i < end - begin; ++i) {
                const double lo = value(order[begin + i - 1], f);
                const double hi = value(order[begin + i], f);
                if (lo == hi) {
                    continue;
                }
                if (m_impurity[i] < best.impurity) {
                    double threshold = lo + (hi - lo) / 2.0;
                    if (threshold >= hi) {
                        threshold = lo;
                    }
                    best = {static_cast<int>(f), threshold, m_impurity[i]};
                }
            }
        }
        return best;
    }

    std::size_t partition(std::size_t begin, std::size_t end, const SplitChoice& split) {
        const auto f = static_cast<std::size_t>(split.feature);
        std::size_t n_left = 0;
        for (std::size_t k = begin; k < end; ++k) {
            const auto slot = m_orders[f][k];
            const bool left = value(slot, f) <= split.threshold;
            m_goes_left[slot] = left ? 1 : 0;
            n_left += left ? 1 : 0;
        }
        for (auto& order : m_orders) {
            std::size_t l = begin;
            std::size_t r = 0;
            for (std::size_t k = begin; k < end; ++k) {
                const auto slot = order[k];
                if (m_goes_left[slot]) {
                    order[l++] = slot;
                } else {
                    m_scratch[r++] = slot;
                }
            }
            std::copy(m_scratch.begin(), m_scratch.begin() + static_cast<std::ptrdiff_t>(r),
                      order.begin() + static_cast<std::ptrdiff_t>(l));
        }
        return begin + n_left;
    }

    const Matrix& m_x;
    const TreeParams& m_params;
    Rng& m_rng;
    std::vector<std::size_t> m_rows;
    std::vector<double> m_targets;
    std::vector<std::vector<std::size_t>> m_orders;
    std::vector<std::size_t> m_identity;
    std::vector<unsigned char> m_goes_left;
    std::vector<std::size_t> m_scratch;
    std::vector<double> m_impurity;
    RunningAbsDeviation m_prefix;
    RunningAbsDeviation m_suffix;
};

}  // namespace

RegressionTree RegressionTree::fit(const Matrix& x, const Vector& y,
                                   std::span<const std::size_t> sample, const TreeParams& params,
                                   Rng& rng) {
    if (x.rows() != y.size()) {
        throw Error(ErrorCode::LengthMismatch, "tree: X rows differ from y length");
    }
    if (sample.empty()) {
        throw Error(ErrorCode::TooFewRows, "tree: empty sample");
    }
    if (x.cols() == 0) {
        throw Error(ErrorCode::InvalidSpec, "tree: zero feature columns");
    }
    if (params.criterion == SplitCriterion::poisson) {
        for (auto i : sample) {
            if (!(y(static_cast<Eigen::Index>(i)) > 0.0)) {
                throw Error(ErrorCode::InvalidSpec,
                            "poisson criterion needs strictly positive targets");
            }
        }
    }
    TreeBuilder builder(x, y, sample, params, rng);
    RegressionTree tree;
    tree.m_nodes = builder.build();
    return tree;
}

double RegressionTree::predict_row(const double* row) const noexcept {
    std::size_t k = 0;
    while (m_nodes[k].feature >= 0) {
        const auto& node = m_nodes[k];
        k = static_cast<std::size_t>(row[node.feature] <= node.threshold ? node.left : node.right);
    }
    return m_nodes[k].value;
}

Vector RegressionTree::predict(const Matrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out(i) = predict_row(x.row(i).data());
    }
    return out;
}

std::size_t RegressionTree::depth() const noexcept {
    std::size_t deepest = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [k, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (m_nodes[k].feature >= 0) {
            stack.emplace_back(static_cast<std::size_t>(m_nodes[k].left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(m_nodes[k].right), d + 1);
        }
    }
    return deepest;
}

std::size_t RegressionTree::leaf_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(
        m_nodes.begin(), m_nodes.end(), [](const Node& n) { return n.feature < 0; }));
}

nlohmann::json RegressionTree::to_json() const {
    nlohmann::json feature = nlohmann::json::array();
    nlohmann::json threshold = nlohmann::json::array();
    nlohmann::json left = nlohmann::json::array();
    nlohmann::json right = nlohmann::json::array();
    nlohmann::json value = nlohmann::json::array();
    for (const auto& n : m_nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left},
            {"right", right},     {"value", value}};
}

RegressionTree RegressionTree::from_json(const nlohmann::json& j) {
    RegressionTree tree;
    const auto& feature = j.at("feature");
    tree.m_nodes.resize(feature.size());
    for (std::size_t k = 0; k < feature.size(); ++k) {
        auto& n = tree.m_nodes[k];
        n.feature = feature[k].get<int>();
        n.threshold = j.at("threshold")[k].get<double>();
        n.left = j.at("left")[k].get<int>();
        n.right = j.at("right")[k].get<int>();
        n.value = j.at("value")[k].get<double>();
    }
    return tree;
}

}  // namespace mesbench
