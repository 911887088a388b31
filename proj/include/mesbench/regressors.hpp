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
#include "mesbench/kernels.hpp"
#include "mesbench/rng.hpp"
#include "mesbench/tree.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace mesbench {

enum class Algorithm { poly, tree, forest, adaboost, svr, knn, mlp };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::poly,     Algorithm::tree,
                                               Algorithm::forest,   Algorithm::adaboost,
                                               Algorithm::svr,      Algorithm::knn,
                                               Algorithm::mlp};

std::string_view to_string(Algorithm a) noexcept;
Algorithm parse_algorithm(std::string_view text);

// ---------------------------------------------------------------------------
// Hyperparameters

using ParamValue = std::variant<std::int64_t, double, std::string, bool>;

std::string to_string(const ParamValue& v);

struct ModelSpec {
    Algorithm algorithm = Algorithm::knn;
    std::map<std::string, ParamValue> params;

    [[nodiscard]] std::int64_t get_int(const std::string& name) const;
    [[nodiscard]] double get_double(const std::string& name) const;
    [[nodiscard]] const std::string& get_string(const std::string& name) const;
    [[nodiscard]] bool get_bool(const std::string& name) const;

    /// "name=value;name=value" in key order.
    [[nodiscard]] std::string flat_pairs() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

/// Finite set, drawn uniformly.
struct Choice {
    std::vector<ParamValue> values;
};

/// Uniform integer in [low, high), scipy `randint` semantics.
struct RandInt {
    std::int64_t low = 0;
    std::int64_t high = 1;
};

struct ParamDomain {
    std::string name;
    std::variant<Choice, RandInt> domain;
};

/// Search space of one algorithm. Sampling always yields a valid spec.
struct HyperSpace {
    Algorithm algorithm = Algorithm::knn;
    std::vector<ParamDomain> params;

    [[nodiscard]] ModelSpec sample(Rng& rng) const;
    [[nodiscard]] bool contains(const ModelSpec& spec) const;
};

/// The tuning grid per algorithm. `column_count` is the encoded feature width,
/// the upper bound for the forest's max_features.
HyperSpace hyper_space(Algorithm algorithm, std::size_t column_count);

// ---------------------------------------------------------------------------
// Models

struct FitDiagnostics {
    bool rank_deficient = false;  ///< polynomial system solved in minimum-norm form
    bool not_converged = false;   ///< SVR iteration cap or MLP epoch budget reached
    std::size_t iterations = 0;

    friend bool operator==(const FitDiagnostics&, const FitDiagnostics&) = default;
};

/// Learned parameters of one algorithm. Inputs to `predict` have already been
/// checked for width by FittedModel.
class Regressor {
public:
    virtual ~Regressor() = default;
    [[nodiscard]] virtual Algorithm algorithm() const noexcept = 0;
    [[nodiscard]] virtual Vector predict(const Matrix& x) const = 0;
    [[nodiscard]] virtual nlohmann::json parameters_json() const = 0;
};

class PolynomialRegressor final : public Regressor {
public:
    /// A monomial: (feature, power) pairs; the empty term is the intercept.
    using Term = std::vector<std::pair<int, int>>;

    PolynomialRegressor(int degree, std::vector<Term> terms, Vector coefficients);

    /// Monomials of total degree <= `degree`. Columns holding only 0/1 values
    /// appear with power 1 and at most one per term, since higher powers and
    /// products within a one-hot block are redundant or identically zero.
    static std::vector<Term> expansion(const Matrix& x, int degree);
    static Matrix expand(const Matrix& x, const std::vector<Term>& terms);

    [[nodiscard]] Algorithm algorithm() const noexcept override { return Algorithm::poly; }
    [[nodiscard]] Vector predict(const Matrix& x) const override;
    [[nodiscard]] nlohmann::json parameters_json() const override;
    static PolynomialRegressor from_json(const nlohmann::json& j);

    [[nodiscard]] int degree() const noexcept { return m_degree; }
    [[nodiscard]] const std::vector<Term>& terms() const noexcept { return m_terms; }
    [[nodiscard]] const Vector& coefficients() const noexcept { return m_coefficients; }
    /// Coefficient of the term consisting of `feature` alone with power 1.
    [[nodiscard]] double linear_coefficient(int feature) const;
    [[nodiscard]] double intercept() const;

private:
    int m_degree;
    std::vector<Term> m_terms;
    Vector m_coefficients;
};

class TreeRegressor final : public Regressor {
public:
    explicit TreeRegressor(RegressionTree tree) : m_tree(std::move(tree)) {}
    [[nodiscard]] Algorithm algorithm() const noexcept override { return Algorithm::tree; }
    [[nodiscard]] Vector predict(const Matrix& x) const override { return m_tree.predict(x); }
    [[nodiscard]] nlohmann::json parameters_json() const override { return m_tree.to_json(); }
    [[nodiscard]] const RegressionTree& tree() const noexcept { return m_tree; }

private:
    RegressionTree m_tree;
};

class ForestRegressor final : public Regressor {
public:
    explicit ForestRegressor(std::vector<RegressionTree> trees) : m_trees(std::move(trees)) {}

    /// Trees are independent given their derived seeds, so parallel and serial
    /// fitting produce identical forests.
    static ForestRegressor fit(const Matrix& x, const Vector& y, std::size_t estimators,
                               bool bootstrap, const TreeParams& params, std::uint64_t seed,
                               kernels::Execution exec);

    [[nodiscard]] Algorithm algorithm() const noexcept override { return Algorithm::forest; }
    /// Arithmetic mean of the trees' predictions.
    [[nodiscard]] Vector predict(const Matrix& x) const override;
    [[nodiscard]] nlohmann::json parameters_json() const override;
    static ForestRegressor from_json(const nlohmann::json& j);

    /// One column per tree.
    [[nodiscard]] Matrix tree_predictions(const Matrix& x) const;
    [[nodiscard]] const std::vector<RegressionTree>& trees() const noexcept { return m_trees; }

private:
    std::vector<RegressionTree> m_trees;
};

/// AdaBoost.R2 (linear loss, learning rate 1) over depth-3 squared-error trees;
/// prediction is the weighted median of the members.
class AdaBoostRegressor final : public Regressor {
public:
    static constexpr std::size_t kBaseDepth = 3;

    AdaBoostRegressor(std::vector<RegressionTree> trees, std::vector<double> weights);

    static AdaBoostRegressor fit(const Matrix& x, const Vector& y, std::size_t estimators,
                                 std::uint64_t seed);

    [[nodiscard]] Algorithm algorithm() const noexcept override { return Algorithm::adaboost; }
    [[nodiscard]] Vector predict(const Matrix& x) const override;
    [[nodiscard]] nlohmann::json parameters_json() const override;
    static AdaBoostRegressor from_json(const nlohmann::json& j);

    [[nodiscard]] const std::vector<RegressionTree>& trees() const noexcept { return m_trees; }
    [[nodiscard]] const std::vector<double>& weights() const noexcept { return m_weights; }

private:
    std::vector<RegressionTree> m_trees;
    std::vector<double> m_weights;
};

class SvrRegressor final : public Regressor {
public:
    SvrRegressor(kernels::KernelFunction kernel, Matrix support, Vector coef, double intercept,
                 double dual_objective);

    [[nodiscard]] Algorithm algorithm() const noexcept override { return Algorithm::svr; }
    [[nodiscard]] Vector predict(const Matrix& x) const override;
    [[nodiscard]] nlohmann::json parameters_json() const override;
    static SvrRegressor from_json(const nlohmann::json& j);

    [[nodiscard]] const kernels::KernelFunction& kernel() const noexcept { return m_kernel; }
    [[nodiscard]] const Vector& coefficients() const noexcept { return m_coef; }
    [[nodiscard]] double intercept() const noexcept { return m_intercept; }
    [[nodiscard]] double dual_objective() const noexcept { return m_dual_objective; }

private:
    kernels::KernelFunction m_kernel;
    Matrix m_support;
    Vector m_coef;
    double m_intercept;
    double m_dual_objective;
};

class KnnRegressor final : public Regressor {
public:
    KnnRegressor(Matrix train, Vector target, std::size_t k, int p,
                 kernels::NeighborWeighting weighting);

    [[nodiscard]] Algorithm algorithm() const noexcept override { return Algorithm::knn; }
    [[nodiscard]] Vector predict(const Matrix& x) const override;
    [[nodiscard]] nlohmann::json parameters_json() const override;
    static KnnRegressor from_json(const nlohmann::json& j);

private:
    Matrix m_train;
    Vector m_target;
    std::size_t m_k;
    int m_p;
    kernels::NeighborWeighting m_weighting;
};

/// Single hidden layer, relu, linear output, in original target units.
struct MlpParameters {
    Matrix w1;  ///< hidden x inputs
    Vector b1;
    Vector w2;  ///< hidden
    double b2 = 0.0;

    static MlpParameters zeros(Eigen::Index inputs, Eigen::Index hidden);
    [[nodiscard]] Vector flat() const;
    static MlpParameters from_flat(const Vector& flat, Eigen::Index inputs, Eigen::Index hidden);
    [[nodiscard]] Vector forward(const Matrix& x) const;
};

/// Mean half squared error plus `alpha / (2n) * ||weights||^2` (biases are
/// not penalised). Fills `gradient` when non-null.
double mlp_loss(const MlpParameters& params, const Matrix& x, const Vector& y, double alpha,
                MlpParameters* gradient);

struct MlpTraining {
    std::size_t hidden = 5;
    double learning_rate = 1e-3;
    double alpha = 1e-4;
    std::size_t max_epochs = 500;
    double tol = 1e-6;
    std::size_t patience = 10;
    std::size_t batch_size = 200;
};

class MlpRegressor final : public Regressor {
public:
    explicit MlpRegressor(MlpParameters params) : m_params(std::move(params)) {}

    static MlpRegressor fit(const Matrix& x, const Vector& y, const MlpTraining& training,
                            std::uint64_t seed, FitDiagnostics& diagnostics);

    [[nodiscard]] Algorithm algorithm() const noexcept override { return Algorithm::mlp; }
    [[nodiscard]] Vector predict(const Matrix& x) const override { return m_params.forward(x); }
    [[nodiscard]] nlohmann::json parameters_json() const override;
    static MlpRegressor from_json(const nlohmann::json& j);

    [[nodiscard]] const MlpParameters& parameters() const noexcept { return m_params; }

private:
    MlpParameters m_params;
};

// ---------------------------------------------------------------------------
// SVR dual

/// Epsilon-insensitive dual objective 1/2 b'Kb - y'b + eps*sum|b| for
/// coefficients b = alpha - alpha* (minimised).
double svr_dual_objective(const Matrix& gram, const Vector& y, double epsilon, const Vector& beta);

struct SvrSolution {
    Vector beta;
    double intercept = 0.0;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
};

/// SMO with second-order working-set selection on the 2n-variable form,
/// stopping when the maximal KKT violation drops below `tolerance`.
SvrSolution solve_svr_dual(const Matrix& gram, const Vector& y, double c, double epsilon,
                           double tolerance, std::size_t max_iterations);

/// gamma = 1 / (width * variance of all entries of x); 1 when degenerate.
double scale_gamma(const Matrix& x);

// ---------------------------------------------------------------------------
// Fit / predict

/// Immutable trained predictor. Accepts only matrices of training width.
class FittedModel {
public:
    FittedModel(std::shared_ptr<const Regressor> regressor, std::size_t width,
                FitDiagnostics diagnostics);

    [[nodiscard]] Vector predict(const Matrix& x) const;

    [[nodiscard]] Algorithm algorithm() const noexcept { return m_regressor->algorithm(); }
    [[nodiscard]] std::size_t width() const noexcept { return m_width; }
    [[nodiscard]] const FitDiagnostics& diagnostics() const noexcept { return m_diagnostics; }
    [[nodiscard]] const Regressor& regressor() const noexcept { return *m_regressor; }

    template <typename T>
    [[nodiscard]] const T* as() const noexcept {
        return dynamic_cast<const T*>(m_regressor.get());
    }

    /// Versioned structured-text form; see docs/model_format.md.
    [[nodiscard]] nlohmann::json to_json() const;
    static FittedModel from_json(const nlohmann::json& j);

private:
    std::shared_ptr<const Regressor> m_regressor;
    std::size_t m_width;
    FitDiagnostics m_diagnostics;
};

inline constexpr int kModelFormatVersion = 1;

/// Minimum training rows for a spec (n_neighbors for knn, 2 otherwise).
std::size_t minimum_rows(const ModelSpec& spec);

/// Throws InvalidSpec unless the spec lies in its hyperparameter space.
void validate(const ModelSpec& spec, std::size_t column_count);

/// Deterministic per (spec, x, y, seed).
FittedModel fit(const ModelSpec& spec, const Matrix& x, const Vector& y, std::uint64_t seed);

}  // namespace mesbench
