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

#include "mesbench/csv.hpp"
#include "mesbench/preprocess.hpp"
#include "mesbench/rng.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace mesbench;

namespace {

FeatureTable mixed_table() {
    FeatureTable t;
    t.add_categorical("model", {"A", "B", "A"});
    t.add_numeric("construction_year", {2010, 2012, 2014});
    return t;
}

}  // namespace

TEST_CASE("fit derives vocabularies and population statistics") {
    const auto p = Preprocessor::fit(mixed_table());
    REQUIRE(p.columns().size() == 2);
    CHECK(p.columns()[0].vocabulary == std::vector<std::string>{"A", "B"});
    CHECK(p.columns()[1].mean == doctest::Approx(2012.0));
    CHECK(p.columns()[1].scale == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(p.output_width() == 3);
}

TEST_CASE("single row gets the constant-column guard") {
    FeatureTable t;
    t.add_numeric("a", {5.0});
    t.add_numeric("b", {-1.0});
    const auto p = Preprocessor::fit(t);
    for (const auto& c : p.columns()) CHECK(c.scale == 1.0);
    CHECK(p.transform(t) == Matrix::Zero(1, 2));
}

TEST_CASE("empty tables are rejected") {
    FeatureTable t;
    t.add_numeric("a", {});
    try {
        (void)Preprocessor::fit(t);
        FAIL("expected EmptyTable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyTable);
    }
}

TEST_CASE("indicator blocks") {
    const auto p = Preprocessor::fit(mixed_table());
    FeatureTable q;
    q.add_categorical("model", {"A", "B", "C"});
    q.add_numeric("construction_year", {2012, 2012, 2012});
    const Matrix m = p.transform(q);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 0.0);
    CHECK(m(1, 0) == 0.0);
    CHECK(m(1, 1) == 1.0);
    CHECK(m(2, 0) == 0.0);  // unseen category
    CHECK(m(2, 1) == 0.0);
    CHECK(m(0, 2) == 0.0);
}

TEST_CASE("transform of the fitting table is standardized") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(100.0, 30.0);
    std::uniform_int_distribution<int> cat(0, 3);
    std::vector<double> a, b;
    std::vector<std::string> labels;
    for (int i = 0; i < 200; ++i) {
        a.push_back(g(rng));
        b.push_back(g(rng) * 1e4);
        labels.push_back(std::string(1, static_cast<char>('p' + cat(rng))));
    }
    FeatureTable t;
    t.add_numeric("a", a);
    t.add_categorical("c", labels);
    t.add_numeric("b", b);
    const auto p = Preprocessor::fit(t);
    const Matrix m = p.transform(t);
    for (Eigen::Index col : {Eigen::Index{0}, m.cols() - 1}) {
        const double mean = m.col(col).mean();
        const double sd = std::sqrt((m.col(col).array() - mean).square().mean());
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(sd - 1.0) < 1e-9);
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        CHECK(m.row(i).segment(1, m.cols() - 2).sum() == 1.0);
    }
}

TEST_CASE("test statistics never leak into the transform") {
    const auto train = mixed_table();
    const auto p = Preprocessor::fit(train);
    FeatureTable shifted;
    shifted.add_categorical("model", {"B", "B"});
    shifted.add_numeric("construction_year", {3000, 3002});
    const Matrix m = p.transform(shifted);
    CHECK(m(0, 2) == doctest::Approx((3000.0 - 2012.0) / std::sqrt(8.0 / 3.0)));
    const auto again = Preprocessor::fit(train);
    CHECK(again.transform(shifted) == m);
}

TEST_CASE("schema mismatches are rejected") {
    const auto p = Preprocessor::fit(mixed_table());
    FeatureTable wrong;
    wrong.add_numeric("construction_year", {2010});
    wrong.add_categorical("model", {"A"});
    try {
        (void)p.transform(wrong);
        FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaMismatch);
    }
}

TEST_CASE("raw mode keeps numeric values") {
    const auto p = Preprocessor::fit(mixed_table(), false);
    CHECK_FALSE(p.standardizes());
    CHECK(p.transform(mixed_table())(2, 2) == 2014.0);
}

TEST_CASE("feature tables round trip through csv text") {
    auto t = mixed_table();
    const std::vector<double> target{1.5, 2.5, 3.5};
    std::vector<double> back_target;
    const auto back = table_from_csv(t.to_csv(&target), {"model"}, "price", &back_target);
    CHECK(back.same_schema(t));
    CHECK(back_target == target);
    CHECK(back.columns()[0].labels == t.columns()[0].labels);
    CHECK(back.columns()[1].values == t.columns()[1].values);
    const std::size_t pick[] = {2, 0};
    CHECK(t.select_rows(pick).columns()[0].labels == std::vector<std::string>{"A", "A"});
}

TEST_CASE("csv quoting") {
    CHECK(csv::split_line(R"(a,"b,c","d""e",)") == std::vector<std::string>{"a", "b,c", "d\"e", ""});
    CHECK(csv::escape("x,y") == "\"x,y\"");
    CHECK(csv::escape("plain") == "plain");
    CHECK(csv::format_double(0.1) == "0.1");
    CHECK(std::stod(csv::format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("seed derivation and shuffles") {
    CHECK(derive_seed(1, "forest", 2) == derive_seed(1, "forest", 2));
    CHECK(derive_seed(1, "forest", 2) != derive_seed(1, "forest", 3));
    CHECK(derive_seed(1, "forest", 2) != derive_seed(2, "forest", 2));
    CHECK(derive_seed(1, "a", "b") != derive_seed(1, "b", "a"));
    const auto s = shuffled_indices(50, 3);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 50);
    CHECK(shuffled_indices(50, 3) == s);
}
