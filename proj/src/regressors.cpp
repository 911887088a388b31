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

#include "mesbench/regressors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

namespace mesbench {

// ---------------------------------------------------------------------------
// Names and parameter values

std::string_view to_string(Algorithm a) noexcept {
    switch (a) {
        case Algorithm::poly: return "poly";
        case Algorithm::tree: return "tree";
        case Algorithm::forest: return "forest";
        case Algorithm::adaboost: return "adaboost";
        case Algorithm::svr: return "svr";
        case Algorithm::knn: return "knn";
        case Algorithm::mlp: return "mlp";
    }
    return "unknown";
}

Algorithm parse_algorithm(std::string_view text) {
    for (auto a : kAllAlgorithms) {
        if (to_string(a) == text) {
            return a;
        }
    }
    throw Error(ErrorCode::InvalidSpec, "unknown algorithm '" + std::string(text) + "'");
}

std::string to_string(const ParamValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return x;
            } else if constexpr (std::is_same_v<T, bool>) {
                return x ? "true" : "false";
            } else if constexpr (std::is_same_v<T, double>) {
                std::ostringstream out;
                out << x;
                return out.str();
            } else {
                return std::to_string(x);
            }
        },
        v);
}

namespace {
template <typename T>
const T& param_as(const ModelSpec& spec, const std::string& name) {
    auto it = spec.params.find(name);
    if (it == spec.params.end()) {
        throw Error(ErrorCode::InvalidSpec, std::string(to_string(spec.algorithm)) +
                                                ": missing hyperparameter '" + name + "'");
    }
    if (const T* value = std::get_if<T>(&it->second)) {
        return *value;
    }
    throw Error(ErrorCode::InvalidSpec, std::string(to_string(spec.algorithm)) +
                                            ": hyperparameter '" + name + "' has the wrong type");
}
}  // namespace

std::int64_t ModelSpec::get_int(const std::string& name) const {
    return param_as<std::int64_t>(*this, name);
}
double ModelSpec::get_double(const std::string& name) const {
    return param_as<double>(*this, name);
}
const std::string& ModelSpec::get_string(const std::string& name) const {
    return param_as<std::string>(*this, name);
}
bool ModelSpec::get_bool(const std::string& name) const { return param_as<bool>(*this, name); }

std::string ModelSpec::flat_pairs() const {
    std::string out;
    for (const auto& [name, value] : params) {
        if (!out.empty()) {
            out.push_back(';');
        }
        out += name + "=" + to_string(value);
    }
    return out;
}

nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, value] : spec.params) {
        std::visit([&](const auto& x) { params[name] = x; }, value);
    }
    return {{"algorithm", std::string(to_string(spec.algorithm))}, {"params", params}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    spec.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    for (const auto& [name, value] : j.at("params").items()) {
        if (value.is_boolean()) {
            spec.params[name] = value.get<bool>();
        } else if (value.is_number_integer()) {
            spec.params[name] = value.get<std::int64_t>();
        } else if (value.is_number()) {
            spec.params[name] = value.get<double>();
        } else {
            spec.params[name] = value.get<std::string>();
        }
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Hyperparameter spaces

namespace {

Choice ints(std::initializer_list<std::int64_t> values) {
    Choice c;
    for (auto v : values) {
        c.values.emplace_back(v);
    }
    return c;
}

Choice doubles(std::initializer_list<double> values) {
    Choice c;
    for (auto v : values) {
        c.values.emplace_back(v);
    }
    return c;
}

Choice strings(std::initializer_list<const char*> values) {
    Choice c;
    for (auto v : values) {
        c.values.emplace_back(std::string(v));
    }
    return c;
}

Choice bools() { return Choice{{ParamValue{true}, ParamValue{false}}}; }

}  // namespace

HyperSpace hyper_space(Algorithm algorithm, std::size_t column_count) {
    HyperSpace s{algorithm, {}};
    const auto tree_params = [&] {
        s.params.push_back({"max_depth", ints({0, 5, 10, 15, 20})});
        s.params.push_back({"criterion", strings({"squared_error", "absolute_error", "poisson"})});
    };
    switch (algorithm) {
        case Algorithm::poly:
            s.params.push_back({"degree", ints({1, 2, 3, 4})});
            break;
        case Algorithm::tree:
            tree_params();
            break;
        case Algorithm::forest: {
            tree_params();
            s.params.push_back({"n_estimators", RandInt{1, 200}});
            const auto high = std::max<std::int64_t>(2, static_cast<std::int64_t>(column_count));
            s.params.push_back({"max_features", RandInt{1, high}});
            s.params.push_back({"min_samples_split", RandInt{2, 11}});
            s.params.push_back({"bootstrap", bools()});
            break;
        }
        case Algorithm::svr:
            s.params.push_back({"kernel", strings({"linear", "poly", "rbf"})});
            s.params.push_back({"C", doubles({0.1, 1.0, 10.0, 100.0, 1000.0})});
            s.params.push_back({"epsilon", doubles({1e-5, 1e-4, 1e-3, 1e-2})});
            break;
        case Algorithm::knn:
            s.params.push_back({"n_neighbors", ints({2, 4, 6, 8, 10})});
            s.params.push_back({"weights", strings({"uniform", "distance"})});
            s.params.push_back({"p", ints({1, 2, 3})});
            break;
        case Algorithm::adaboost:
            s.params.push_back({"n_estimators", RandInt{1, 200}});
            break;
        case Algorithm::mlp:
            s.params.push_back({"hidden_layer_size", ints({1, 3, 5, 7, 9})});
            s.params.push_back({"learning_rate", doubles({1e-3})});
            s.params.push_back({"activation", strings({"relu"})});
            s.params.push_back({"solver", strings({"adam"})});
            break;
    }
    return s;
}

ModelSpec HyperSpace::sample(Rng& rng) const {
    ModelSpec spec{algorithm, {}};
    for (const auto& p : params) {
        if (const auto* choice = std::get_if<Choice>(&p.domain)) {
            std::uniform_int_distribution<std::size_t> pick(0, choice->values.size() - 1);
            spec.params[p.name] = choice->values[pick(rng)];
        } else {
            const auto& range = std::get<RandInt>(p.domain);
            std::uniform_int_distribution<std::int64_t> pick(range.low, range.high - 1);
            spec.params[p.name] = pick(rng);
        }
    }
    return spec;
}

bool HyperSpace::contains(const ModelSpec& spec) const {
    if (spec.algorithm != algorithm || spec.params.size() != params.size()) {
        return false;
    }
    for (const auto& p : params) {
        auto it = spec.params.find(p.name);
        if (it == spec.params.end()) {
            return false;
        }
        if (const auto* choice = std::get_if<Choice>(&p.domain)) {
            if (std::find(choice->values.begin(), choice->values.end(), it->second) ==
                choice->values.end()) {
                return false;
            }
        } else {
            const auto& range = std::get<RandInt>(p.domain);
            const auto* v = std::get_if<std::int64_t>(&it->second);
            if (v == nullptr || *v < range.low || *v >= range.high) {
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Polynomial regression

PolynomialRegressor::PolynomialRegressor(int degree, std::vector<Term> terms, Vector coefficients)
    : m_degree(degree), m_terms(std::move(terms)), m_coefficients(std::move(coefficients)) {}

std::vector<PolynomialRegressor::Term> PolynomialRegressor::expansion(const Matrix& x, int degree) {
    const auto d = static_cast<int>(x.cols());
    std::vector<bool> binary(static_cast<std::size_t>(d), true);
    for (int j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double v = x(i, j);
            if (v != 0.0 && v != 1.0) {
                binary[static_cast<std::size_t>(j)] = false;
                break;
            }
        }
    }

    std::vector<Term> terms;
    Term current;
    // Depth-first over features in index order; each term lists features
    // increasing, so every monomial appears once.
    const auto recurse = [&](auto&& self, int first, int remaining, bool has_binary) -> void {
        terms.push_back(current);
        for (int j = first; j < d; ++j) {
            const bool is_binary = binary[static_cast<std::size_t>(j)];
            if (is_binary && has_binary) {
                continue;
            }
            const int max_power = is_binary ? 1 : remaining;
            for (int power = 1; power <= std::min(max_power, remaining); ++power) {
                current.emplace_back(j, power);
                self(self, j + 1, remaining - power, has_binary || is_binary);
                current.pop_back();
            }
        }
    };
    recurse(recurse, 0, degree, false);
    return terms;
}

Matrix PolynomialRegressor::expand(const Matrix& x, const std::vector<Term>& terms) {
    Matrix out(x.rows(), static_cast<Eigen::Index>(terms.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (std::size_t t = 0; t < terms.size(); ++t) {
            double v = 1.0;
            for (const auto& [feature, power] : terms[t]) {
                const double base = x(i, feature);
                for (int k = 0; k < power; ++k) {
                    v *= base;
                }
            }
            out(i, static_cast<Eigen::Index>(t)) = v;
        }
    }
    return out;
}

Vector PolynomialRegressor::predict(const Matrix& x) const {
    return expand(x, m_terms) * m_coefficients;
}

double PolynomialRegressor::linear_coefficient(int feature) const {
    for (std::size_t t = 0; t < m_terms.size(); ++t) {
        if (m_terms[t].size() == 1 && m_terms[t][0] == std::pair{feature, 1}) {
            return m_coefficients(static_cast<Eigen::Index>(t));
        }
    }
    throw Error(ErrorCode::InvalidSpec, "no linear term for feature " + std::to_string(feature));
}

double PolynomialRegressor::intercept() const {
    for (std::size_t t = 0; t < m_terms.size(); ++t) {
        if (m_terms[t].empty()) {
            return m_coefficients(static_cast<Eigen::Index>(t));
        }
    }
    return 0.0;
}

nlohmann::json PolynomialRegressor::parameters_json() const {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : m_terms) {
        nlohmann::json term = nlohmann::json::array();
        for (const auto& [feature, power] : t) {
            term.push_back({feature, power});
        }
        terms.push_back(term);
    }
    return {{"degree", m_degree},
            {"terms", terms},
            {"coefficients", std::vector<double>(m_coefficients.data(),
                                                 m_coefficients.data() + m_coefficients.size())}};
}

PolynomialRegressor PolynomialRegressor::from_json(const nlohmann::json& j) {
    std::vector<Term> terms;
    for (const auto& term : j.at("terms")) {
        Term t;
        for (const auto& fp : term) {
            t.emplace_back(fp[0].get<int>(), fp[1].get<int>());
        }
        terms.push_back(std::move(t));
    }
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    return PolynomialRegressor(j.at("degree").get<int>(), std::move(terms),
                               Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size())));
}

// ---------------------------------------------------------------------------
// Random forest

ForestRegressor ForestRegressor::fit(const Matrix& x, const Vector& y, std::size_t estimators,
                                     bool bootstrap, const TreeParams& params, std::uint64_t seed,
                                     kernels::Execution exec) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<RegressionTree> trees(estimators);
    std::exception_ptr failure;
    std::mutex failure_mutex;

    const auto grow = [&](std::size_t t) {
        try {
            Rng rng(derive_seed(seed, "tree", t));
            std::vector<std::size_t> sample(n);
            if (bootstrap) {
                std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                for (auto& s : sample) {
                    s = pick(rng);
                }
            } else {
                std::iota(sample.begin(), sample.end(), std::size_t{0});
            }
            trees[t] = RegressionTree::fit(x, y, sample, params, rng);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) {
                failure = std::current_exception();
            }
        }
    };

    const auto count = static_cast<std::int64_t>(estimators);
    if (exec == kernels::Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t t = 0; t < count; ++t) {
            grow(static_cast<std::size_t>(t));
        }
    } else {
        for (std::int64_t t = 0; t < count; ++t) {
            grow(static_cast<std::size_t>(t));
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return ForestRegressor(std::move(trees));
}

Matrix ForestRegressor::tree_predictions(const Matrix& x) const {
    Matrix out(x.rows(), static_cast<Eigen::Index>(m_trees.size()));
    for (std::size_t t = 0; t < m_trees.size(); ++t) {
        out.col(static_cast<Eigen::Index>(t)) = m_trees[t].predict(x);
    }
    return out;
}

Vector ForestRegressor::predict(const Matrix& x) const {
    Vector sum = Vector::Zero(x.rows());
    for (const auto& tree : m_trees) {
        sum += tree.predict(x);
    }
    return sum / static_cast<double>(m_trees.size());
}

nlohmann::json ForestRegressor::parameters_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m_trees) {
        trees.push_back(t.to_json());
    }
    return {{"trees", trees}};
}

ForestRegressor ForestRegressor::from_json(const nlohmann::json& j) {
    std::vector<RegressionTree> trees;
    for (const auto& t : j.at("trees")) {
        trees.push_back(RegressionTree::from_json(t));
    }
    return ForestRegressor(std::move(trees));
}

// ---------------------------------------------------------------------------
// AdaBoost.R2

AdaBoostRegressor::AdaBoostRegressor(std::vector<RegressionTree> trees, std::vector<double> weights)
    : m_trees(std::move(trees)), m_weights(std::move(weights)) {}

AdaBoostRegressor AdaBoostRegressor::fit(const Matrix& x, const Vector& y, std::size_t estimators,
                                         std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<double> sample_weight(n, 1.0 / static_cast<double>(n));
    std::vector<RegressionTree> trees;
    std::vector<double> weights;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TreeParams base;
    base.max_depth = kBaseDepth;

    std::vector<double> cdf(n);
    std::vector<std::size_t> sample(n);
    for (std::size_t round = 0; round < estimators; ++round) {
        std::partial_sum(sample_weight.begin(), sample_weight.end(), cdf.begin());
        const double total = cdf.back();
        for (auto& s : sample) {
            const double u = unit(rng) * total;
            const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            s = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), n - 1);
        }
        auto tree = RegressionTree::fit(x, y, sample, base, rng);
        const Vector predicted = tree.predict(x);

        std::vector<double> error(n);
        double error_max = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            error[i] = std::abs(predicted(static_cast<Eigen::Index>(i)) - y(static_cast<Eigen::Index>(i)));
            if (sample_weight[i] > 0.0) {
                error_max = std::max(error_max, error[i]);
            }
        }
        if (error_max != 0.0) {
            for (auto& e : error) {
                e /= error_max;
            }
        }
        double estimator_error = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (sample_weight[i] > 0.0) {
                estimator_error += sample_weight[i] * error[i];
            }
        }

        if (estimator_error <= 0.0) {
            trees.push_back(std::move(tree));
            weights.push_back(1.0);
            break;
        }
        if (estimator_error >= 0.5) {
            // Worse than chance: keep only if it is the first member, unweighted.
            if (trees.empty()) {
                trees.push_back(std::move(tree));
                weights.push_back(0.0);
            }
            break;
        }
        const double beta = estimator_error / (1.0 - estimator_error);
        trees.push_back(std::move(tree));
        weights.push_back(std::log(1.0 / beta));
        if (round + 1 == estimators) {
            break;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (sample_weight[i] > 0.0) {
                sample_weight[i] *= std::pow(beta, 1.0 - error[i]);
            }
            sum += sample_weight[i];
        }
        if (!(sum > 0.0)) {
            break;
        }
        for (auto& w : sample_weight) {
            w /= sum;
        }
    }
    return AdaBoostRegressor(std::move(trees), std::move(weights));
}

Vector AdaBoostRegressor::predict(const Matrix& x) const {
    const auto members = m_trees.size();
    Matrix predictions(x.rows(), static_cast<Eigen::Index>(members));
    for (std::size_t t = 0; t < members; ++t) {
        predictions.col(static_cast<Eigen::Index>(t)) = m_trees[t].predict(x);
    }
    Vector out(x.rows());
    std::vector<std::size_t> order(members);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return predictions(i, static_cast<Eigen::Index>(a)) <
                   predictions(i, static_cast<Eigen::Index>(b));
        });
        double total = 0.0;
        for (auto w : m_weights) {
            total += w;
        }
        double cumulative = 0.0;
        std::size_t chosen = order.back();
        for (auto t : order) {
            cumulative += m_weights[t];
            if (cumulative >= 0.5 * total) {
                chosen = t;
                break;
            }
        }
        out(i) = predictions(i, static_cast<Eigen::Index>(chosen));
    }
    return out;
}

nlohmann::json AdaBoostRegressor::parameters_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m_trees) {
        trees.push_back(t.to_json());
    }
    return {{"trees", trees}, {"weights", m_weights}};
}

AdaBoostRegressor AdaBoostRegressor::from_json(const nlohmann::json& j) {
    std::vector<RegressionTree> trees;
    for (const auto& t : j.at("trees")) {
        trees.push_back(RegressionTree::from_json(t));
    }
    return AdaBoostRegressor(std::move(trees), j.at("weights").get<std::vector<double>>());
}

// ---------------------------------------------------------------------------
// SVR

double svr_dual_objective(const Matrix& gram, const Vector& y, double epsilon, const Vector& beta) {
    return 0.5 * beta.dot(gram * beta) - y.dot(beta) + epsilon * beta.cwiseAbs().sum();
}

SvrSolution solve_svr_dual(const Matrix& gram, const Vector& y, double c, double epsilon,
                           double tolerance, std::size_t max_iterations) {
    constexpr double kTau = 1e-12;
    const auto n = static_cast<std::size_t>(gram.rows());
    const std::size_t l = 2 * n;
    // Variable t < n is alpha_t (sign +1), t >= n is alpha*_{t-n} (sign -1).
    std::vector<double> alpha(l, 0.0);
    std::vector<double> grad(l);
    std::vector<signed char> sign(l);
    for (std::size_t t = 0; t < n; ++t) {
        sign[t] = 1;
        sign[t + n] = -1;
        grad[t] = epsilon - y(static_cast<Eigen::Index>(t));
        grad[t + n] = epsilon + y(static_cast<Eigen::Index>(t));
    }
    const auto kernel = [&](std::size_t a, std::size_t b) {
        return gram(static_cast<Eigen::Index>(a % n), static_cast<Eigen::Index>(b % n));
    };
    const auto q = [&](std::size_t a, std::size_t b) {
        return static_cast<double>(sign[a] * sign[b]) * kernel(a, b);
    };
    const auto at_upper = [&](std::size_t t) { return alpha[t] >= c; };
    const auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    SvrSolution sol;
    sol.converged = false;
    std::size_t iter = 0;
    for (; iter < max_iterations; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = l;
        for (std::size_t t = 0; t < l; ++t) {
            if (sign[t] == 1) {
                if (!at_upper(t) && -grad[t] >= gmax) {
                    gmax = -grad[t];
                    i = t;
                }
            } else if (!at_lower(t) && grad[t] >= gmax) {
                gmax = grad[t];
                i = t;
            }
        }
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::size_t j = l;
        double best_obj = std::numeric_limits<double>::infinity();
        if (i < l) {
            const double qii = kernel(i, i);
            for (std::size_t t = 0; t < l; ++t) {
                double grad_diff = 0.0;
                double quad = 0.0;
                if (sign[t] == 1) {
                    if (at_lower(t)) {
                        continue;
                    }
                    grad_diff = gmax + grad[t];
                    gmax2 = std::max(gmax2, grad[t]);
                    if (grad_diff <= 0.0) {
                        continue;
                    }
                    quad = qii + kernel(t, t) - 2.0 * sign[i] * q(i, t);
                } else {
                    if (at_upper(t)) {
                        continue;
                    }
                    grad_diff = gmax - grad[t];
                    gmax2 = std::max(gmax2, -grad[t]);
                    if (grad_diff <= 0.0) {
                        continue;
                    }
                    quad = qii + kernel(t, t) + 2.0 * sign[i] * q(i, t);
                }
                const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
                if (obj <= best_obj) {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        if (i == l || j == l || gmax + gmax2 < tolerance) {
            sol.converged = true;
            break;
        }

        const double old_i = alpha[i];
        const double old_j = alpha[j];
        const double qij = q(i, j);
        const double qd_i = kernel(i, i);
        const double qd_j = kernel(j, j);
        if (sign[i] != sign[j]) {
            double quad = qd_i + qd_j + 2.0 * qij;
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = qd_i + qd_j - 2.0 * qij;
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > c) {
                if (alpha[j] > c) {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double d_i = alpha[i] - old_i;
        const double d_j = alpha[j] - old_j;
        for (std::size_t t = 0; t < l; ++t) {
            grad[t] += q(i, t) * d_i + q(j, t) * d_j;
        }
    }
    sol.iterations = iter;

    double upper = std::numeric_limits<double>::infinity();
    double lower = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < l; ++t) {
        const double yg = sign[t] * grad[t];
        if (at_upper(t)) {
            if (sign[t] == -1) {
                upper = std::min(upper, yg);
            } else {
                lower = std::max(lower, yg);
            }
        } else if (at_lower(t)) {
            if (sign[t] == 1) {
                upper = std::min(upper, yg);
            } else {
                lower = std::max(lower, yg);
            }
        } else {
            ++free_count;
            free_sum += yg;
        }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count)
                                      : (upper + lower) / 2.0;
    sol.intercept = -rho;
    sol.beta.resize(static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < n; ++t) {
        sol.beta(static_cast<Eigen::Index>(t)) = alpha[t] - alpha[t + n];
    }
    sol.objective = svr_dual_objective(gram, y, epsilon, sol.beta);
    return sol;
}

double scale_gamma(const Matrix& x) {
    const double count = static_cast<double>(x.size());
    if (count == 0.0) {
        return 1.0;
    }
    const double mean = x.sum() / count;
    const double var = (x.array() - mean).square().sum() / count;
    return var > 0.0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
}

SvrRegressor::SvrRegressor(kernels::KernelFunction kernel, Matrix support, Vector coef,
                           double intercept, double dual_objective)
    : m_kernel(kernel),
      m_support(std::move(support)),
      m_coef(std::move(coef)),
      m_intercept(intercept),
      m_dual_objective(dual_objective) {}

Vector SvrRegressor::predict(const Matrix& x) const {
    if (m_support.rows() == 0) {
        return Vector::Constant(x.rows(), m_intercept);
    }
    const Matrix k = kernels::cross_gram(x, m_support, m_kernel, kernels::Execution::parallel);
    return (k * m_coef).array() + m_intercept;
}

namespace {
nlohmann::json matrix_json(const Matrix& m) {
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}
Matrix matrix_from_json(const nlohmann::json& j) {
    const auto data = j.at("data").get<std::vector<double>>();
    return Eigen::Map<const Matrix>(data.data(), j.at("rows").get<Eigen::Index>(),
                                    j.at("cols").get<Eigen::Index>());
}
nlohmann::json vector_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}
Vector vector_from_json(const nlohmann::json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}
}  // namespace

nlohmann::json SvrRegressor::parameters_json() const {
    return {{"kernel", std::string(kernels::to_string(m_kernel.kind))},
            {"gamma", m_kernel.gamma},
            {"coef0", m_kernel.coef0},
            {"degree", m_kernel.degree},
            {"support", matrix_json(m_support)},
            {"coef", vector_json(m_coef)},
            {"intercept", m_intercept},
            {"dual_objective", m_dual_objective}};
}

SvrRegressor SvrRegressor::from_json(const nlohmann::json& j) {
    kernels::KernelFunction kernel{kernels::parse_kernel(j.at("kernel").get<std::string>()),
                                   j.at("gamma").get<double>(), j.at("coef0").get<double>(),
                                   j.at("degree").get<int>()};
    return SvrRegressor(kernel, matrix_from_json(j.at("support")), vector_from_json(j.at("coef")),
                        j.at("intercept").get<double>(), j.at("dual_objective").get<double>());
}

// ---------------------------------------------------------------------------
// kNN

KnnRegressor::KnnRegressor(Matrix train, Vector target, std::size_t k, int p,
                           kernels::NeighborWeighting weighting)
    : m_train(std::move(train)), m_target(std::move(target)), m_k(k), m_p(p), m_weighting(weighting) {}

Vector KnnRegressor::predict(const Matrix& x) const {
    return kernels::knn_predict(m_train, m_target, x, m_k, m_p, m_weighting,
                                kernels::Execution::parallel);
}

nlohmann::json KnnRegressor::parameters_json() const {
    return {{"k", m_k},
            {"p", m_p},
            {"weights", m_weighting == kernels::NeighborWeighting::uniform ? "uniform" : "distance"},
            {"train", matrix_json(m_train)},
            {"target", vector_json(m_target)}};
}

KnnRegressor KnnRegressor::from_json(const nlohmann::json& j) {
    return KnnRegressor(matrix_from_json(j.at("train")), vector_from_json(j.at("target")),
                        j.at("k").get<std::size_t>(), j.at("p").get<int>(),
                        j.at("weights").get<std::string>() == "uniform"
                            ? kernels::NeighborWeighting::uniform
                            : kernels::NeighborWeighting::distance);
}

// ---------------------------------------------------------------------------
// MLP

MlpParameters MlpParameters::zeros(Eigen::Index inputs, Eigen::Index hidden) {
    return {Matrix::Zero(hidden, inputs), Vector::Zero(hidden), Vector::Zero(hidden), 0.0};
}

Vector MlpParameters::flat() const {
    Vector out(w1.size() + b1.size() + w2.size() + 1);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < w1.size(); ++i) {
        out(k++) = w1.data()[i];
    }
    out.segment(k, b1.size()) = b1;
    k += b1.size();
    out.segment(k, w2.size()) = w2;
    k += w2.size();
    out(k) = b2;
    return out;
}

MlpParameters MlpParameters::from_flat(const Vector& flat, Eigen::Index inputs, Eigen::Index hidden) {
    auto p = zeros(inputs, hidden);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) {
        p.w1.data()[i] = flat(k++);
    }
    p.b1 = flat.segment(k, hidden);
    k += hidden;
    p.w2 = flat.segment(k, hidden);
    k += hidden;
    p.b2 = flat(k);
    return p;
}

Vector MlpParameters::forward(const Matrix& x) const {
    const Matrix hidden = ((x * w1.transpose()).rowwise() + b1.transpose()).cwiseMax(0.0);
    return (hidden * w2).array() + b2;
}

double mlp_loss(const MlpParameters& params, const Matrix& x, const Vector& y, double alpha,
                MlpParameters* gradient) {
    const auto n = static_cast<double>(x.rows());
    const Matrix pre = (x * params.w1.transpose()).rowwise() + params.b1.transpose();
    const Matrix hidden = pre.cwiseMax(0.0);
    const Vector out = (hidden * params.w2).array() + params.b2;
    const Vector residual = out - y;
    const double penalty = 0.5 * alpha * (params.w1.squaredNorm() + params.w2.squaredNorm()) / n;
    const double loss = 0.5 * residual.squaredNorm() / n + penalty;
    if (gradient != nullptr) {
        const Vector d_out = residual / n;
        gradient->w2 = hidden.transpose() * d_out + (alpha / n) * params.w2;
        gradient->b2 = d_out.sum();
        Matrix d_hidden = d_out * params.w2.transpose();
        d_hidden = d_hidden.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
        gradient->w1 = d_hidden.transpose() * x + (alpha / n) * params.w1;
        gradient->b1 = d_hidden.colwise().sum().transpose();
    }
    return loss;
}

MlpRegressor MlpRegressor::fit(const Matrix& x, const Vector& y, const MlpTraining& training,
                               std::uint64_t seed, FitDiagnostics& diagnostics) {
    const auto n = x.rows();
    const auto inputs = x.cols();
    const auto hidden = static_cast<Eigen::Index>(training.hidden);

    // Train against a standardised target and fold the scaling back into the
    // output layer afterwards.
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().mean());
    const double scale = sd > 0.0 ? sd : 1.0;
    const Vector target = (y.array() - mean) / scale;

    Rng rng(seed);
    auto params = MlpParameters::zeros(inputs, hidden);
    {
        const double bound1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
        const double bound2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
        std::uniform_real_distribution<double> u1(-bound1, bound1);
        std::uniform_real_distribution<double> u2(-bound2, bound2);
        for (Eigen::Index i = 0; i < params.w1.size(); ++i) params.w1.data()[i] = u1(rng);
        for (Eigen::Index i = 0; i < hidden; ++i) params.b1(i) = u1(rng);
        for (Eigen::Index i = 0; i < hidden; ++i) params.w2(i) = u2(rng);
        params.b2 = u2(rng);
    }

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    Vector theta = params.flat();
    Vector m = Vector::Zero(theta.size());
    Vector v = Vector::Zero(theta.size());
    std::size_t step = 0;

    const auto batch = static_cast<Eigen::Index>(
        std::max<std::size_t>(1, std::min<std::size_t>(training.batch_size, static_cast<std::size_t>(n))));
    Vector best_theta = theta;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    bool plateau = false;
    std::size_t epoch = 0;
    MlpParameters grad = MlpParameters::zeros(inputs, hidden);
    Matrix xb;
    Vector yb;
    for (; epoch < training.max_epochs; ++epoch) {
        const auto order = shuffled_indices(static_cast<std::size_t>(n), rng());
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += batch) {
            const auto len = std::min(batch, n - start);
            xb.resize(len, inputs);
            yb.resize(len);
            for (Eigen::Index r = 0; r < len; ++r) {
                const auto src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(start + r)]);
                xb.row(r) = x.row(src);
                yb(r) = target(src);
            }
            const auto current = MlpParameters::from_flat(theta, inputs, hidden);
            epoch_loss += mlp_loss(current, xb, yb, training.alpha, &grad) * static_cast<double>(len);
            const Vector g = grad.flat();
            ++step;
            m = kBeta1 * m + (1.0 - kBeta1) * g;
            v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
            const double lr = training.learning_rate *
                              std::sqrt(1.0 - std::pow(kBeta2, static_cast<double>(step))) /
                              (1.0 - std::pow(kBeta1, static_cast<double>(step)));
            theta -= (lr * m.array() / (v.array().sqrt() + kEps)).matrix();
        }
        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) {
            break;
        }
        if (epoch_loss > best_loss - training.tol) {
            ++stale;
        } else {
            stale = 0;
        }
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            best_theta = theta;
        }
        if (stale >= training.patience) {
            plateau = true;
            ++epoch;
            break;
        }
    }
    diagnostics.iterations = epoch;
    diagnostics.not_converged = !plateau;

    auto fitted = MlpParameters::from_flat(best_theta, inputs, hidden);
    fitted.w2 *= scale;
    fitted.b2 = fitted.b2 * scale + mean;
    return MlpRegressor(std::move(fitted));
}

nlohmann::json MlpRegressor::parameters_json() const {
    return {{"w1", matrix_json(m_params.w1)},
            {"b1", vector_json(m_params.b1)},
            {"w2", vector_json(m_params.w2)},
            {"b2", m_params.b2}};
}

MlpRegressor MlpRegressor::from_json(const nlohmann::json& j) {
    return MlpRegressor(MlpParameters{matrix_from_json(j.at("w1")), vector_from_json(j.at("b1")),
                                      vector_from_json(j.at("w2")), j.at("b2").get<double>()});
}

// ---------------------------------------------------------------------------
// FittedModel

FittedModel::FittedModel(std::shared_ptr<const Regressor> regressor, std::size_t width,
                         FitDiagnostics diagnostics)
    : m_regressor(std::move(regressor)), m_width(width), m_diagnostics(diagnostics) {}

Vector FittedModel::predict(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != m_width) {
        throw Error(ErrorCode::SchemaMismatch, "model trained on width " + std::to_string(m_width) +
                                                   ", got " + std::to_string(x.cols()));
    }
    return m_regressor->predict(x);
}

nlohmann::json FittedModel::to_json() const {
    return {{"format", "mesbench-model"},
            {"version", kModelFormatVersion},
            {"algorithm", std::string(to_string(algorithm()))},
            {"width", m_width},
            {"diagnostics",
             {{"rank_deficient", m_diagnostics.rank_deficient},
              {"not_converged", m_diagnostics.not_converged},
              {"iterations", m_diagnostics.iterations}}},
            {"parameters", m_regressor->parameters_json()}};
}

FittedModel FittedModel::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "mesbench-model" || j.value("version", 0) != kModelFormatVersion) {
        throw Error(ErrorCode::SchemaMismatch, "not a version-1 mesbench model");
    }
    const auto& p = j.at("parameters");
    std::shared_ptr<const Regressor> r;
    switch (parse_algorithm(j.at("algorithm").get<std::string>())) {
        case Algorithm::poly: r = std::make_shared<PolynomialRegressor>(PolynomialRegressor::from_json(p)); break;
        case Algorithm::tree: r = std::make_shared<TreeRegressor>(RegressionTree::from_json(p)); break;
        case Algorithm::forest: r = std::make_shared<ForestRegressor>(ForestRegressor::from_json(p)); break;
        case Algorithm::adaboost: r = std::make_shared<AdaBoostRegressor>(AdaBoostRegressor::from_json(p)); break;
        case Algorithm::svr: r = std::make_shared<SvrRegressor>(SvrRegressor::from_json(p)); break;
        case Algorithm::knn: r = std::make_shared<KnnRegressor>(KnnRegressor::from_json(p)); break;
        case Algorithm::mlp: r = std::make_shared<MlpRegressor>(MlpRegressor::from_json(p)); break;
    }
    const auto& d = j.at("diagnostics");
    FitDiagnostics diagnostics{d.at("rank_deficient").get<bool>(), d.at("not_converged").get<bool>(),
                               d.at("iterations").get<std::size_t>()};
    return FittedModel(std::move(r), j.at("width").get<std::size_t>(), diagnostics);
}

// ---------------------------------------------------------------------------
// fit

std::size_t minimum_rows(const ModelSpec& spec) {
    if (spec.algorithm == Algorithm::knn) {
        return static_cast<std::size_t>(std::max<std::int64_t>(1, spec.get_int("n_neighbors")));
    }
    return 2;
}

void validate(const ModelSpec& spec, std::size_t column_count) {
    if (!hyper_space(spec.algorithm, column_count).contains(spec)) {
        throw Error(ErrorCode::InvalidSpec, std::string(to_string(spec.algorithm)) + " spec {" +
                                                spec.flat_pairs() +
                                                "} is outside its hyperparameter space");
    }
}

namespace {
constexpr std::size_t kMaxPolynomialTerms = 5000;
}

FittedModel fit(const ModelSpec& spec, const Matrix& x, const Vector& y, std::uint64_t seed) {
    validate(spec, static_cast<std::size_t>(x.cols()));
    if (x.rows() != y.size()) {
        throw Error(ErrorCode::LengthMismatch, "X has " + std::to_string(x.rows()) +
                                                   " rows, y has " + std::to_string(y.size()));
    }
    if (static_cast<std::size_t>(x.rows()) < minimum_rows(spec)) {
        throw Error(ErrorCode::TooFewRows, std::string(to_string(spec.algorithm)) + " needs " +
                                               std::to_string(minimum_rows(spec)) + " rows");
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw Error(ErrorCode::InvalidSpec, "non-finite training values");
    }

    const auto width = static_cast<std::size_t>(x.cols());
    FitDiagnostics diagnostics;
    std::shared_ptr<const Regressor> model;

    const auto tree_params = [&] {
        TreeParams p;
        p.max_depth = static_cast<std::size_t>(spec.get_int("max_depth"));
        p.criterion = parse_criterion(spec.get_string("criterion"));
        return p;
    };

    switch (spec.algorithm) {
        case Algorithm::poly: {
            const int degree = static_cast<int>(spec.get_int("degree"));
            auto terms = PolynomialRegressor::expansion(x, degree);
            if (terms.size() > kMaxPolynomialTerms) {
                throw Error(ErrorCode::InvalidSpec,
                            "degree-" + std::to_string(degree) + " expansion has " +
                                std::to_string(terms.size()) + " terms");
            }
            const Matrix design = PolynomialRegressor::expand(x, terms);
            const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
            Vector coef = cod.solve(y);
            diagnostics.rank_deficient = cod.rank() < design.cols();
            model = std::make_shared<PolynomialRegressor>(degree, std::move(terms), std::move(coef));
            break;
        }
        case Algorithm::tree: {
            Rng rng(seed);
            std::vector<std::size_t> all(static_cast<std::size_t>(x.rows()));
            std::iota(all.begin(), all.end(), std::size_t{0});
            model = std::make_shared<TreeRegressor>(RegressionTree::fit(x, y, all, tree_params(), rng));
            break;
        }
        case Algorithm::forest: {
            auto p = tree_params();
            p.max_features = static_cast<std::size_t>(spec.get_int("max_features"));
            p.min_samples_split = static_cast<std::size_t>(spec.get_int("min_samples_split"));
            if (p.criterion == SplitCriterion::poisson && (y.array() <= 0.0).any()) {
                throw Error(ErrorCode::InvalidSpec, "poisson criterion needs strictly positive targets");
            }
            model = std::make_shared<ForestRegressor>(ForestRegressor::fit(
                x, y, static_cast<std::size_t>(spec.get_int("n_estimators")), spec.get_bool("bootstrap"),
                p, seed, kernels::Execution::parallel));
            break;
        }
        case Algorithm::adaboost:
            model = std::make_shared<AdaBoostRegressor>(AdaBoostRegressor::fit(
                x, y, static_cast<std::size_t>(spec.get_int("n_estimators")), seed));
            break;
        case Algorithm::svr: {
            kernels::KernelFunction kernel;
            kernel.kind = kernels::parse_kernel(spec.get_string("kernel"));
            kernel.gamma = scale_gamma(x);
            kernel.coef0 = 0.0;
            kernel.degree = 3;
            const Matrix gram = kernels::gram(x, kernel, kernels::Execution::parallel);
            const auto n = static_cast<std::size_t>(x.rows());
            const auto sol = solve_svr_dual(gram, y, spec.get_double("C"), spec.get_double("epsilon"),
                                            1e-3, std::max<std::size_t>(100000, 100 * n));
            diagnostics.iterations = sol.iterations;
            diagnostics.not_converged = !sol.converged;
            std::vector<Eigen::Index> support;
            for (Eigen::Index i = 0; i < sol.beta.size(); ++i) {
                if (sol.beta(i) != 0.0) {
                    support.push_back(i);
                }
            }
            Matrix sv(static_cast<Eigen::Index>(support.size()), x.cols());
            Vector coef(static_cast<Eigen::Index>(support.size()));
            for (std::size_t k = 0; k < support.size(); ++k) {
                sv.row(static_cast<Eigen::Index>(k)) = x.row(support[k]);
                coef(static_cast<Eigen::Index>(k)) = sol.beta(support[k]);
            }
            model = std::make_shared<SvrRegressor>(kernel, std::move(sv), std::move(coef),
                                                   sol.intercept, sol.objective);
            break;
        }
        case Algorithm::knn: {
            const auto weighting = spec.get_string("weights") == "uniform"
                                       ? kernels::NeighborWeighting::uniform
                                       : kernels::NeighborWeighting::distance;
            model = std::make_shared<KnnRegressor>(x, y, static_cast<std::size_t>(spec.get_int("n_neighbors")),
                                                   static_cast<int>(spec.get_int("p")), weighting);
            break;
        }
        case Algorithm::mlp: {
            MlpTraining training;
            training.hidden = static_cast<std::size_t>(spec.get_int("hidden_layer_size"));
            training.learning_rate = spec.get_double("learning_rate");
            model = std::make_shared<MlpRegressor>(MlpRegressor::fit(x, y, training, seed, diagnostics));
            break;
        }
    }
    return FittedModel(std::move(model), width, diagnostics);
}

}  // namespace mesbench
