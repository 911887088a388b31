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
#include "fixtures.hpp"
#include "oracles.hpp"

#include "mesbench/search.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace mesbench;

namespace {

ModelSpec knn(std::int64_t k) {
    return {Algorithm::knn, {{"n_neighbors", k}, {"weights", std::string("uniform")}, {"p", std::int64_t{2}}}};
}

Matrix line_inputs(int n) {
    Matrix x(n, 1);
    for (int i = 0; i < n; ++i) x(i, 0) = -1.0 + 2.0 * i / (n - 1);
    return x;
}

}  // namespace

TEST_CASE("folds partition the rows") {
    for (std::size_t n : {5u, 10u, 23u}) {
        for (std::size_t k : {2u, 3u, 5u}) {
            const auto folds = kfold_indices(n, k, 7);
            std::set<std::size_t> seen;
            std::size_t total = 0;
            for (const auto& f : folds) {
                CHECK(f.size() >= n / k);
                CHECK(f.size() <= n / k + 1);
                total += f.size();
                seen.insert(f.begin(), f.end());
            }
            CHECK(total == n);
            CHECK(seen.size() == n);
            CHECK(kfold_indices(n, k, 7) == folds);
        }
    }
    CHECK_THROWS_AS(kfold_indices(3, 4, 0), Error);
    CHECK_THROWS_AS(kfold_indices(3, 1, 0), Error);
}

TEST_CASE("constant target cross-validates to zero mape") {
    const Matrix x = line_inputs(20);
    const Vector y = Vector::Constant(20, 7.5);
    CHECK(cross_val_score(knn(4), x, y, 5, 1, ErrorKind::mape) == 0.0);
    const ModelSpec tree{Algorithm::tree, {{"max_depth", std::int64_t{0}}, {"criterion", std::string("squared_error")}}};
    CHECK(cross_val_score(tree, x, y, 4, 1, ErrorKind::mape) == 0.0);
}

TEST_CASE("leave-one-out matches an explicit loop") {
    Matrix x(5, 2);
    x << 0.1, 0.2, 0.9, -0.4, 0.3, 0.8, -0.7, 0.5, 0.6, 0.6;
    Vector y(5);
    y << 3.0, 5.0, 4.0, 8.0, 6.0;
    double expected = 0.0;
    for (Eigen::Index out = 0; out < 5; ++out) {
        Matrix train(4, 2);
        Vector target(4);
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < 5; ++i) {
            if (i == out) continue;
            train.row(r) = x.row(i);
            target(r++) = y(i);
        }
        const Vector pred = oracle::knn_scan(train, target, x.row(out), 2, false);
        expected += std::abs(y(out) - pred(0)) / std::abs(y(out));
    }
    expected /= 5.0;
    const double got = cross_val_score(knn(2), x, y, 5, 99, ErrorKind::mape);
    CHECK(got == doctest::Approx(expected).epsilon(1e-14));
    CHECK(cross_val_score(knn(2), x, y, 5, 99, ErrorKind::mape) == got);
}

TEST_CASE("cross_val_score rejects too many folds") {
    const Matrix x = line_inputs(4);
    CHECK_THROWS_AS(cross_val_score(knn(2), x, Vector::Ones(4), 5, 0, ErrorKind::mape), Error);
}

TEST_CASE("random search on a noiseless quadratic picks the first exact degree") {
    const Matrix x = line_inputs(30);
    Vector y(30);
    for (int i = 0; i < 30; ++i) y(i) = 2.0 + x(i, 0) - 3.0 * x(i, 0) * x(i, 0) + 10.0;

    // Oracle: evaluate every degree once.
    std::map<std::int64_t, double> by_degree;
    for (std::int64_t d = 1; d <= 4; ++d) {
        by_degree[d] = cross_val_score({Algorithm::poly, {{"degree", d}}}, x, y, 5, derive_seed(3, "cv"),
                                       ErrorKind::mape);
    }
    CHECK(by_degree[1] > 1e-3);
    for (std::int64_t d = 2; d <= 4; ++d) CHECK(by_degree[d] < 1e-12);

    bool saw_degree_two_first = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SearchConfig cfg;
        cfg.n_iter = 24;
        cfg.k_folds = 5;
        cfg.seed = seed;
        const auto r = random_search(Algorithm::poly, x, y, cfg);
        REQUIRE(r.trials.size() == 24);
        std::optional<std::int64_t> first_exact;
        for (const auto& t : r.trials) {
            if (t.spec.get_int("degree") >= 2) {
                first_exact = t.spec.get_int("degree");
                break;
            }
        }
        REQUIRE(first_exact);
        CHECK(r.best.get_int("degree") == *first_exact);
        saw_degree_two_first = saw_degree_two_first || *first_exact == 2;
    }
    CHECK(saw_degree_two_first);
}

TEST_CASE("random search invariants") {
    const auto p = fixtures::synthetic_problem(3, 20, 5);
    for (auto a : kAllAlgorithms) {
        SearchConfig cfg;
        cfg.n_iter = 4;
        cfg.k_folds = 3;
        cfg.seed = 11;
        const auto r = random_search(a, p.x, p.y, cfg);
        CHECK(r.trials.size() == 4);
        CHECK_NOTHROW(validate(r.best, static_cast<std::size_t>(p.x.cols())));
        for (const auto& t : r.trials) {
            if (t.status == TrialStatus::ok) CHECK(r.best_score <= t.score);
        }
    }
}

TEST_CASE("random search with one iteration returns that draw") {
    const auto p = fixtures::synthetic_problem(3, 20, 6);
    SearchConfig cfg;
    cfg.n_iter = 1;
    cfg.k_folds = 3;
    const auto r = random_search(Algorithm::knn, p.x, p.y, cfg);
    CHECK(r.best == r.trials[0].spec);
    CHECK(r.best_score == r.trials[0].score);
}

TEST_CASE("failed trials are logged and excluded") {
    const Matrix x = line_inputs(6);
    Vector y = Vector::LinSpaced(6, 1.0, 6.0);
    SearchConfig cfg;
    cfg.n_iter = 30;
    cfg.k_folds = 2;  // training folds of 3 rows: knn with n_neighbors >= 4 cannot fit
    const auto r = random_search(Algorithm::knn, x, y, cfg);
    std::size_t failed = 0;
    for (const auto& t : r.trials) {
        if (t.status == TrialStatus::failed) {
            ++failed;
            CHECK(t.spec.get_int("n_neighbors") > 3);
            CHECK(std::isnan(t.score));
            CHECK_FALSE(t.message.empty());
        }
    }
    CHECK(failed > 0);
    CHECK(r.best.get_int("n_neighbors") <= 3);

    std::ostringstream out;
    write_trials_csv_header(out);
    write_trials_csv_rows(out, r.trials);
    const auto text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 31);
    CHECK(text.find(",failed") != std::string::npos);

    try {
        (void)random_search(Algorithm::knn, x, Vector::Zero(6), cfg);
        FAIL("expected AllTrialsFailed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AllTrialsFailed);
    }
}

TEST_CASE("automl iteration mode is deterministic") {
    const auto p = fixtures::synthetic_problem(4, 25, 7);
    AutomlConfig cfg;
    cfg.max_iterations = 8;
    cfg.seed = 3;
    const auto a = automl_fit(p.x, p.y, cfg);
    const auto b = automl_fit(p.x, p.y, cfg);
    CHECK(a.trials.size() == 8);
    CHECK(a.ensemble.to_json() == b.ensemble.to_json());
    CHECK(a.ensemble.predict(p.x) == b.ensemble.predict(p.x));
}

TEST_CASE("automl ensemble prediction lies within its members") {
    const auto p = fixtures::synthetic_problem(4, 25, 8);
    AutomlConfig cfg;
    cfg.max_iterations = 12;
    cfg.ensemble_top_k = 4;
    const auto r = automl_fit(p.x, p.y, cfg);
    const auto& members = r.ensemble.members();
    REQUIRE_FALSE(members.empty());
    double total = 0.0;
    for (const auto& m : members) {
        CHECK(m.weight >= 0.0);
        total += m.weight;
    }
    CHECK(total == doctest::Approx(1.0));
    const Vector pred = r.ensemble.predict(p.x);
    for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& m : members) {
            const double v = m.model.predict(p.x.row(i))(0);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(pred(i) >= lo - 1e-9 * std::abs(lo));
        CHECK(pred(i) <= hi + 1e-9 * std::abs(hi));
    }
}

TEST_CASE("automl with top_k 1 predicts like its single member") {
    const auto p = fixtures::synthetic_problem(3, 25, 9);
    AutomlConfig cfg;
    cfg.max_iterations = 5;
    cfg.ensemble_top_k = 1;
    const auto r = automl_fit(p.x, p.y, cfg);
    REQUIRE(r.ensemble.members().size() == 1);
    CHECK(r.ensemble.predict(p.x) == r.ensemble.members()[0].model.predict(p.x));
}

TEST_CASE("automl falls back to knn when nothing succeeds") {
    const auto p = fixtures::synthetic_problem(3, 10, 10);
    AutomlConfig cfg;
    cfg.max_iterations = 3;
    const auto r = automl_fit(p.x, Vector::Zero(p.x.rows()), cfg);  // mape undefined everywhere
    CHECK(r.fallback);
    CHECK_FALSE(r.warnings.empty());
    REQUIRE(r.ensemble.members().size() == 1);
    CHECK(r.ensemble.members()[0].spec.algorithm == Algorithm::knn);
}

TEST_CASE("automl time budget is respected") {
    const auto p = fixtures::synthetic_problem(4, 50, 11);
    AutomlConfig cfg;
    cfg.budget_seconds = 1.0;
    const auto start = Clock::now();
    const auto r = automl_fit(p.x, p.y, cfg);
    const double wall = seconds_since(start);
    CHECK(wall <= cfg.budget_seconds * 1.1 + r.last_fit_seconds);
    CHECK(r.trials.size() >= 1);
}

TEST_CASE("automl config validation") {
    AutomlConfig cfg;
    cfg.budget_seconds = 0.0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.max_iterations = 3;
    CHECK_NOTHROW(validate(cfg));
    cfg.holdout_frac = 1.0;
    CHECK_THROWS_AS(validate(cfg), Error);
}
