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

#include "doctest.h"
#include "oracles.hpp"

#include "mesbench/kernels.hpp"
#include "mesbench/regressors.hpp"

#include <cmath>
#include <random>

using namespace mesbench;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = u(rng);
    }
    return m;
}

Vector smooth_target(const Matrix& x) {
    Vector y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        y(i) = 10.0 + std::sin(2.0 * x(i, 0)) + x.row(i).squaredNorm();
    }
    return y;
}

ModelSpec spec(Algorithm a, std::map<std::string, ParamValue> p) { return ModelSpec{a, std::move(p)}; }

ModelSpec knn_spec(std::int64_t k, const char* weights = "uniform", std::int64_t p = 2) {
    return spec(Algorithm::knn, {{"n_neighbors", k}, {"weights", std::string(weights)}, {"p", p}});
}

ModelSpec tree_spec(std::int64_t depth, const char* criterion) {
    return spec(Algorithm::tree, {{"max_depth", depth}, {"criterion", std::string(criterion)}});
}

ModelSpec forest_spec(std::int64_t estimators, std::int64_t max_features, bool bootstrap,
                      const char* criterion = "squared_error") {
    return spec(Algorithm::forest, {{"max_depth", std::int64_t{0}},
                                    {"criterion", std::string(criterion)},
                                    {"n_estimators", estimators},
                                    {"max_features", max_features},
                                    {"min_samples_split", std::int64_t{2}},
                                    {"bootstrap", bootstrap}});
}

ModelSpec svr_spec(const char* kernel, double c, double eps) {
    return spec(Algorithm::svr, {{"kernel", std::string(kernel)}, {"C", c}, {"epsilon", eps}});
}

ModelSpec mlp_spec(std::int64_t hidden) {
    return spec(Algorithm::mlp, {{"hidden_layer_size", hidden},
                                 {"learning_rate", 1e-3},
                                 {"activation", std::string("relu")},
                                 {"solver", std::string("adam")}});
}

}  // namespace

TEST_CASE("hyperparameter spaces sample valid specs") {
    Rng rng(3);
    for (auto a : kAllAlgorithms) {
        const auto space = hyper_space(a, 6);
        for (int i = 0; i < 200; ++i) {
            const auto s = space.sample(rng);
            CHECK(space.contains(s));
            CHECK_NOTHROW(validate(s, 6));
        }
    }
    CHECK_THROWS_AS(validate(knn_spec(3), 4), Error);
    auto bad = mlp_spec(5);
    bad.params["learning_rate"] = 0.01;
    CHECK_FALSE(hyper_space(Algorithm::mlp, 4).contains(bad));
}

TEST_CASE("forest max_features respects the half-open upper bound") {
    Rng rng(1);
    const auto space = hyper_space(Algorithm::forest, 4);
    for (int i = 0; i < 500; ++i) {
        const auto mf = space.sample(rng).get_int("max_features");
        CHECK(mf >= 1);
        CHECK(mf < 4);
    }
    CHECK(hyper_space(Algorithm::forest, 1).sample(rng).get_int("max_features") == 1);
}

TEST_CASE("spec json round trip") {
    Rng rng(9);
    for (auto a : kAllAlgorithms) {
        const auto s = hyper_space(a, 5).sample(rng);
        CHECK(spec_from_json(to_json(s)) == s);
    }
}

TEST_CASE("poly degree 1 recovers a noiseless line") {
    Matrix x(20, 1);
    Vector y(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = -2.0 + 0.37 * i;
        y(i) = 3.0 * x(i, 0) + 2.0;
    }
    const auto m = fit(spec(Algorithm::poly, {{"degree", std::int64_t{1}}}), x, y, 0);
    const auto* poly = m.as<PolynomialRegressor>();
    REQUIRE(poly != nullptr);
    CHECK(std::abs(poly->linear_coefficient(0) - 3.0) < 1e-6);
    CHECK(std::abs(poly->intercept() - 2.0) < 1e-6);
    CHECK_FALSE(m.diagnostics().rank_deficient);
}

TEST_CASE("poly expansion treats indicator columns specially") {
    Matrix x(4, 3);
    x << 1, 0, 0.5, 0, 1, 1.5, 1, 0, -2.0, 0, 1, 3.0;
    const auto terms = PolynomialRegressor::expansion(x, 2);
    // intercept, b0, b0*c, b1, b1*c, c, c^2
    CHECK(terms.size() == 7);
    for (const auto& t : terms) {
        int binaries = 0;
        for (const auto& [feature, power] : t) {
            if (feature < 2) {
                CHECK(power == 1);
                ++binaries;
            }
        }
        CHECK(binaries <= 1);
    }
}

TEST_CASE("poly flags rank deficiency and returns the minimum-norm fit") {
    Matrix x(5, 2);
    Vector y(5);
    for (int i = 0; i < 5; ++i) {
        x(i, 0) = 0.3 * i;
        x(i, 1) = 0.3 * i;  // duplicate column
        y(i) = 1.0 + 2.0 * x(i, 0);
    }
    const auto m = fit(spec(Algorithm::poly, {{"degree", std::int64_t{1}}}), x, y, 0);
    CHECK(m.diagnostics().rank_deficient);
    const auto* poly = m.as<PolynomialRegressor>();
    CHECK(std::abs(poly->linear_coefficient(0) - 1.0) < 1e-9);
    CHECK(std::abs(poly->linear_coefficient(1) - 1.0) < 1e-9);
    CHECK((m.predict(x) - y).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("unlimited tree memorizes unique rows") {
    const Matrix x = random_matrix(150, 3, 11);
    const Vector y = smooth_target(x);
    for (const char* criterion : {"squared_error", "absolute_error", "poisson"}) {
        const auto m = fit(tree_spec(0, criterion), x, y, 5);
        CHECK((m.predict(x) - y).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    }
}

TEST_CASE("depth-limited tree respects its depth") {
    const Matrix x = random_matrix(200, 2, 12);
    const Vector y = smooth_target(x);
    const auto m = fit(tree_spec(5, "squared_error"), x, y, 5);
    CHECK(m.as<TreeRegressor>()->tree().depth() <= 5);
}

TEST_CASE("poisson criterion rejects non-positive targets") {
    const Matrix x = random_matrix(20, 2, 13);
    Vector y = smooth_target(x);
    y(4) = 0.0;
    CHECK_THROWS_AS(fit(tree_spec(0, "poisson"), x, y, 1), Error);
    CHECK_THROWS_AS(fit(forest_spec(3, 1, true, "poisson"), x, y, 1), Error);
    CHECK_NOTHROW(fit(tree_spec(0, "squared_error"), x, y, 1));
}

TEST_CASE("forest prediction is the mean of its trees") {
    const Matrix x = random_matrix(120, 4, 14);
    const Vector y = smooth_target(x);
    const auto m = fit(forest_spec(17, 2, true), x, y, 8);
    const auto* forest = m.as<ForestRegressor>();
    REQUIRE(forest != nullptr);
    const Matrix query = random_matrix(30, 4, 15);
    const Matrix per_tree = forest->tree_predictions(query);
    CHECK(per_tree.cols() == 17);
    const Vector mean = per_tree.rowwise().mean();
    CHECK((m.predict(query) - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forest fitting is identical serially and in parallel") {
    const Matrix x = random_matrix(100, 3, 16);
    const Vector y = smooth_target(x);
    TreeParams params;
    params.max_features = 2;
    const auto a = ForestRegressor::fit(x, y, 9, true, params, 4, kernels::Execution::serial);
    const auto b = ForestRegressor::fit(x, y, 9, true, params, 4, kernels::Execution::parallel);
    CHECK(a.predict(x) == b.predict(x));
}

TEST_CASE("tree and forest are invariant under monotone rescaling of a feature") {
    const Matrix x = random_matrix(150, 3, 17);
    const Vector y = smooth_target(x);
    Matrix warped = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        warped(i, 1) = std::exp(3.0 * x(i, 1)) + 7.0;
    }
    const Matrix query = random_matrix(40, 3, 18);
    Matrix warped_query = query;
    for (Eigen::Index i = 0; i < query.rows(); ++i) {
        warped_query(i, 1) = std::exp(3.0 * query(i, 1)) + 7.0;
    }
    for (const auto& s : {tree_spec(0, "squared_error"), tree_spec(5, "absolute_error"),
                          forest_spec(12, 2, false)}) {
        const auto a = fit(s, x, y, 21);
        const auto b = fit(s, warped, y, 21);
        INFO(s.flat_pairs());
        // Split positions coincide; only the midpoints between neighbouring
        // values move, so every row the trees were grown on routes identically.
        // Out-of-bag rows may fall between old and new midpoints, hence no
        // bootstrap here.
        CHECK((a.predict(x) - b.predict(warped)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("adaboost with one estimator equals its base tree") {
    const Matrix x = random_matrix(80, 3, 19);
    const Vector y = smooth_target(x);
    const auto m = fit(spec(Algorithm::adaboost, {{"n_estimators", std::int64_t{1}}}), x, y, 2);
    const auto* ada = m.as<AdaBoostRegressor>();
    REQUIRE(ada != nullptr);
    REQUIRE(ada->trees().size() == 1);
    CHECK(m.predict(x) == ada->trees()[0].predict(x));
    CHECK(ada->trees()[0].depth() <= AdaBoostRegressor::kBaseDepth);
}

TEST_CASE("adaboost prediction is a weighted median of members") {
    const Matrix x = random_matrix(150, 3, 20);
    const Vector y = smooth_target(x);
    const auto m = fit(spec(Algorithm::adaboost, {{"n_estimators", std::int64_t{25}}}), x, y, 3);
    const auto* ada = m.as<AdaBoostRegressor>();
    const Vector p = m.predict(x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        bool is_member_value = false;
        for (const auto& t : ada->trees()) {
            is_member_value = is_member_value || t.predict_row(x.row(i).data()) == p(i);
        }
        CHECK(is_member_value);
    }
}

TEST_CASE("knn matches an exhaustive scan exactly") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Matrix train = random_matrix(200, 4, 100 + seed);
        const Vector y = smooth_target(train);
        Matrix query = random_matrix(60, 4, 200 + seed);
        query.topRows(10) = train.topRows(10);
        for (std::int64_t k : {2, 4, 10}) {
            for (const char* w : {"uniform", "distance"}) {
                const auto m = fit(knn_spec(k, w), train, y, 0);
                const Vector expected = oracle::knn_scan(train, y, query, static_cast<std::size_t>(k),
                                                         std::string(w) == "distance");
                CHECK(m.predict(query) == expected);
            }
        }
    }
}

TEST_CASE("knn with one neighbor returns the training target of a training row") {
    const Matrix train = random_matrix(30, 2, 30);
    const Vector y = smooth_target(train);
    const auto m = KnnRegressor(train, y, 1, 2, kernels::NeighborWeighting::uniform);
    CHECK(m.predict(train) == y);
}

TEST_CASE("knn parallel and serial agree") {
    const Matrix train = random_matrix(150, 3, 31);
    const Vector y = smooth_target(train);
    const Matrix query = random_matrix(50, 3, 32);
    for (int p : {1, 2, 3}) {
        const auto a = kernels::knn_predict(train, y, query, 6, p, kernels::NeighborWeighting::distance,
                                            kernels::Execution::serial);
        const auto b = kernels::knn_predict(train, y, query, 6, p, kernels::NeighborWeighting::distance,
                                            kernels::Execution::parallel);
        CHECK(a == b);
    }
}

TEST_CASE("svr dual objective matches an exhaustive face enumeration") {
    int cases = 0;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        for (const char* kernel : {"linear", "rbf", "poly"}) {
            for (double c : {0.1, 1.0, 10.0}) {
                const auto n = static_cast<Eigen::Index>(5 + seed % 4);  // 5..8 points
                const Matrix x = random_matrix(n, 2, 300 + seed);
                Vector y(n);
                Rng rng(seed);
                std::normal_distribution<double> noise(0.0, 0.3);
                for (Eigen::Index i = 0; i < n; ++i) {
                    y(i) = x(i, 0) - 0.5 * x(i, 1) * x(i, 1) + noise(rng);
                }
                const double eps = 1e-2;
                const auto m = fit(svr_spec(kernel, c, eps), x, y, 0);
                const auto* svr = m.as<SvrRegressor>();
                REQUIRE(svr != nullptr);
                const Matrix k = kernels::gram(x, svr->kernel(), kernels::Execution::serial);
                const double expected = oracle::svr_dual_exhaustive(k, y, c, eps);
                CHECK(std::abs(svr->dual_objective() - expected) < 1e-4);
                ++cases;
            }
        }
    }
    CHECK(cases == 54);
}

TEST_CASE("svr dual objective matches a refined grid on three points") {
    const Matrix x = random_matrix(3, 2, 400);
    Vector y(3);
    y << 0.5, -0.3, 1.2;
    for (const char* kernel : {"linear", "rbf"}) {
        for (double c : {0.1, 1.0}) {
            const auto m = fit(svr_spec(kernel, c, 1e-3), x, y, 0);
            const auto* svr = m.as<SvrRegressor>();
            const Matrix k = kernels::gram(x, svr->kernel(), kernels::Execution::serial);
            CHECK(std::abs(svr->dual_objective() - oracle::svr_dual_grid3(k, y, c, 1e-3)) < 1e-4);
        }
    }
}

TEST_CASE("svr fits a smooth function") {
    const Matrix x = random_matrix(120, 2, 41);
    const Vector y = smooth_target(x);
    const auto m = fit(svr_spec("rbf", 100.0, 1e-3), x, y, 0);
    const double mean = y.mean();
    const double baseline = (y.array() - mean).abs().mean();
    CHECK((m.predict(x) - y).cwiseAbs().mean() < 0.2 * baseline);
    CHECK_FALSE(m.diagnostics().not_converged);
}

TEST_CASE("mlp gradient matches central finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Eigen::Index inputs = 3;
        const Eigen::Index hidden = 4;
        const Matrix x = random_matrix(7, inputs, 500 + seed);
        const Vector y = smooth_target(x);
        Vector theta = random_matrix(1, inputs * hidden + 2 * hidden + 1, 600 + seed).row(0).transpose();
        const auto params = MlpParameters::from_flat(theta, inputs, hidden);
        MlpParameters grad = MlpParameters::zeros(inputs, hidden);
        mlp_loss(params, x, y, 0.3, &grad);
        const Vector analytic = grad.flat();
        const double h = 1e-6;
        Vector numeric(theta.size());
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            Vector plus = theta;
            Vector minus = theta;
            plus(i) += h;
            minus(i) -= h;
            numeric(i) = (mlp_loss(MlpParameters::from_flat(plus, inputs, hidden), x, y, 0.3, nullptr) -
                          mlp_loss(MlpParameters::from_flat(minus, inputs, hidden), x, y, 0.3, nullptr)) /
                         (2.0 * h);
        }
        const double rel = (analytic - numeric).norm() / std::max(1e-12, analytic.norm() + numeric.norm());
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("mlp with zero weights outputs its bias") {
    auto p = MlpParameters::zeros(3, 5);
    p.b2 = 4.25;
    const MlpRegressor m(p);
    const Vector out = m.predict(random_matrix(9, 3, 50));
    CHECK(out == Vector::Constant(9, 4.25));
}

TEST_CASE("mlp learns a smooth target") {
    const Matrix x = random_matrix(200, 2, 51);
    const Vector y = smooth_target(x);
    const auto m = fit(mlp_spec(9), x, y, 7);
    const double baseline = (y.array() - y.mean()).abs().mean();
    CHECK((m.predict(x) - y).cwiseAbs().mean() < 0.6 * baseline);
}

TEST_CASE("fit is deterministic for every algorithm") {
    const Matrix x = random_matrix(60, 3, 60);
    const Vector y = smooth_target(x);
    Rng rng(61);
    for (auto a : kAllAlgorithms) {
        for (int i = 0; i < 3; ++i) {
            const auto s = hyper_space(a, 3).sample(rng);
            const auto m1 = fit(s, x, y, 99);
            const auto m2 = fit(s, x, y, 99);
            CHECK(m1.predict(x) == m2.predict(x));
        }
    }
}

TEST_CASE("predict rejects the wrong width") {
    const Matrix x = random_matrix(20, 3, 70);
    const auto m = fit(knn_spec(2), x, smooth_target(x), 0);
    try {
        (void)m.predict(random_matrix(4, 2, 71));
        FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaMismatch);
    }
}

TEST_CASE("fit preconditions") {
    const Matrix x = random_matrix(5, 2, 72);
    const Vector y = smooth_target(x);
    CHECK_THROWS_AS(fit(knn_spec(6), x, y, 0), Error);
    CHECK_NOTHROW(fit(knn_spec(4), x, y, 0));
    CHECK_THROWS_AS(fit(knn_spec(2), x, y.head(4), 0), Error);
    CHECK_THROWS_AS(fit(tree_spec(0, "squared_error"), x.topRows(1), y.head(1), 0), Error);
}

TEST_CASE("fitted models survive serialization") {
    const Matrix x = random_matrix(50, 3, 80);
    const Vector y = smooth_target(x);
    const Matrix query = random_matrix(15, 3, 81);
    Rng rng(82);
    for (auto a : kAllAlgorithms) {
        const auto s = hyper_space(a, 3).sample(rng);
        const auto m = fit(s, x, y, 5);
        const auto text = m.to_json().dump();
        const auto back = FittedModel::from_json(nlohmann::json::parse(text));
        CHECK(back.algorithm() == a);
        CHECK(back.width() == 3);
        CHECK(back.diagnostics() == m.diagnostics());
        CHECK((back.predict(query) - m.predict(query)).cwiseAbs().maxCoeff() == 0.0);
    }
}
