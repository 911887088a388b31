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
#include "reference_table.hpp"

#include "mesbench/mes.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace mesbench;

namespace {

CriteriaVector random_vector(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return {u(rng), u(rng), u(rng), u(rng), u(rng)};
}

Weights random_weights(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::bernoulli_distribution zero(0.3);
    Weights w;
    for (auto& x : w.w) x = zero(rng) ? 0.0 : u(rng);
    if (w.sum() == 0.0) w.w[0] = 1.0;
    return w;
}

}  // namespace

TEST_CASE("minmax normalizes the case-study correctness column") {
    const std::vector<double> corr{0.1570, 0.1482, 0.1506, 0.1389, 0.1646};
    const auto n = minmax_normalize(corr);
    const auto& expected = reference::kNormalizedCorrectness;
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(std::round(n[i] * 1000.0) / 1000.0 - expected[i]) < 1e-12);
        CHECK(std::abs(n[i] - expected[i]) < 5e-4);
    }
}

TEST_CASE("minmax degenerate and affine cases") {
    const std::vector<double> same{3.0, 3.0, 3.0};
    CHECK(minmax_normalize(same) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(minmax_normalize(std::vector<double>{}).empty());
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(6), moved(6);
        const double a = std::exp(u(rng));
        const double b = u(rng);
        for (std::size_t i = 0; i < 6; ++i) {
            v[i] = u(rng);
            moved[i] = a * v[i] + b;
        }
        const auto n1 = minmax_normalize(v);
        const auto n2 = minmax_normalize(moved);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(n1[i] == doctest::Approx(n2[i]).epsilon(1e-9));
            CHECK(n1[i] >= 0.0);
            CHECK(n1[i] <= 1.0);
        }
    }
}

TEST_CASE("mes hand arithmetic") {
    CriteriaVector n{};
    at(n, Criterion::correctness) = 0.5;
    at(n, Criterion::expertise) = 1.0;
    at(n, Criterion::complexity) = 0.2;
    CHECK(mes(n, Weights{}) == doctest::Approx(0.67));
    CHECK(mes(CriteriaVector{}, Weights{}) == 0.0);
    CHECK(mes(CriteriaVector{1, 1, 1, 1, 1}, Weights{}) == 1.0);
    Weights zero;
    zero.w.fill(0.0);
    CHECK_THROWS_AS((void)mes(n, zero), Error);
}

TEST_CASE("weights parse and validate") {
    const auto w = parse_weights("corr=50,exp=40,comp=10");
    CHECK(w == Weights{});
    CHECK(parse_weights(format_weights(w)) == w);
    CHECK(parse_weights("correctness=1")[Criterion::correctness] == 1.0);
    CHECK_THROWS_AS(parse_weights("corr=-1,exp=2"), Error);
    CHECK_THROWS_AS(parse_weights("corr=0"), Error);
    CHECK_THROWS_AS(parse_weights("speed=3"), Error);
    CHECK_THROWS_AS(parse_weights("corr"), Error);
    CHECK_THROWS_AS(parse_weights("corr=abc"), Error);
}

TEST_CASE("mes module agrees with the straight-line oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> methods(1, 8);
    for (int t = 0; t < 300; ++t) {
        const int m = methods(rng);
        std::vector<CriteriaVector> raw;
        std::vector<std::array<double, 5>> plain;
        for (int i = 0; i < m; ++i) {
            auto v = random_vector(rng);
            for (auto& x : v) x *= 1000.0;
            raw.push_back(v);
            plain.push_back(v);
        }
        const auto w = random_weights(rng);
        const auto got = score(raw, w).mes;
        const auto expected = oracle::mes_table(plain, w.w);
        for (int i = 0; i < m; ++i) {
            CHECK(std::abs(got[static_cast<std::size_t>(i)] - expected[static_cast<std::size_t>(i)]) <= 1e-12);
        }
    }
}

TEST_CASE("mes invariants over random cases") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0;
    for (int t = 0; t < 2000; ++t) {
        const auto n = random_vector(rng);
        const auto w = random_weights(rng);
        const double base = mes(n, w);
        violations += (base < 0.0 || base > 1.0);

        Weights scaled = w;
        const double k = 0.01 + 100.0 * u(rng);
        for (auto& x : scaled.w) x *= k;
        violations += std::abs(mes(n, scaled) - base) > 1e-12;

        Weights no_tail = w;
        at(no_tail.w, Criterion::responsiveness) = 0.0;
        at(no_tail.w, Criterion::reproducibility) = 0.0;
        if (no_tail.sum() > 0.0) {
            auto perturbed = n;
            at(perturbed, Criterion::responsiveness) = u(rng);
            at(perturbed, Criterion::reproducibility) = u(rng);
            violations += mes(perturbed, no_tail) != mes(n, no_tail);
        }

        for (auto c : kAllCriteria) {
            auto up = n;
            at(up, c) = at(n, c) + (1.0 - at(n, c)) * u(rng);
            violations += mes(up, w) < base - 1e-15;
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("the method minimal on every criterion scores exactly zero") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
        std::vector<CriteriaVector> raw{CriteriaVector{0.1, 1.0, 0.0, 2.0, 0.0}};
        for (int i = 0; i < 4; ++i) {
            auto v = random_vector(rng);
            for (std::size_t c = 0; c < 5; ++c) v[c] += raw[0][c];
            raw.push_back(v);
        }
        CHECK(score(raw, random_weights(rng)).mes[0] == 0.0);
    }
}

TEST_CASE("ranking is invariant under affine transforms of one criterion") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<CriteriaVector> raw;
        std::vector<RankKey> keys;
        for (int i = 0; i < 6; ++i) raw.push_back(random_vector(rng));
        const auto w = random_weights(rng);
        auto moved = raw;
        const auto c = static_cast<std::size_t>(t % 5);
        const double a = u(rng);
        const double b = u(rng) - 5.0;
        for (auto& row : moved) row[c] = a * row[c] + b;
        const auto s1 = score(raw, w).mes;
        const auto s2 = score(moved, w).mes;
        std::vector<RankKey> k1, k2;
        for (int i = 0; i < 6; ++i) {
            k1.push_back({std::to_string(i), s1[static_cast<std::size_t>(i)], 0.0});
            k2.push_back({std::to_string(i), s2[static_cast<std::size_t>(i)], 0.0});
        }
        for (int i = 0; i < 6; ++i) {
            CHECK(s1[static_cast<std::size_t>(i)] == doctest::Approx(s2[static_cast<std::size_t>(i)]).epsilon(1e-9));
        }
        CHECK(rank(k1) == rank(k2));
    }
}

TEST_CASE("rank orders the case-study MES values") {
    const std::vector<RankKey> keys{{"MLP", 0.977, 2308.1},
                                    {"RF", 0.896, 1067.6},
                                    {"auto-sklearn", 0.696, 1806.1},
                                    {"AutoGluon", 0.583, 14.2},
                                    {"FLAML", 0.738, 1801.5}};
    const auto order = rank(keys);
    std::vector<std::string> names;
    for (auto i : order) names.push_back(keys[i].method);
    CHECK(names == std::vector<std::string>{"AutoGluon", "auto-sklearn", "FLAML", "RF", "MLP"});
}

TEST_CASE("rank tie rules") {
    CHECK(rank(std::vector<RankKey>{{"solo", 0.4, 1.0}}) == std::vector<std::size_t>{0});
    const std::vector<RankKey> tie{{"slow", 0.5, 20.0}, {"quick", 0.5, 10.0}};
    CHECK(rank(tie) == std::vector<std::size_t>{1, 0});
    const std::vector<RankKey> names{{"b", 0.5, 10.0}, {"a", 0.5, 10.0}};
    CHECK(rank(names) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("case-study criteria give a bounded report with AutoGluon strictly best") {
    const auto report = build_report("full", reference::case_study_records(), Weights{});
    REQUIRE(report.methods.size() == 5);
    double autogluon = 0.0;
    for (const auto& m : report.methods) {
        CHECK(m.mes_mean >= 0.0);
        CHECK(m.mes_mean <= 1.0);
        if (m.record.method == "AutoGluon") autogluon = m.mes_mean;
    }
    for (const auto& m : report.methods) {
        if (m.record.method != "AutoGluon") CHECK(autogluon < m.mes_mean);
    }
    CHECK(report.methods[report.ranking[0]].record.method == "AutoGluon");
    CHECK(at(report.methods[0].normalized, Criterion::correctness) == doctest::Approx(0.704).epsilon(1e-3));
}

TEST_CASE("report scores each repetition and summarizes") {
    std::vector<CriteriaRecord> records;
    records.push_back(summarize("a", "basic", 5, {{0.10, 1.0, 0.001}, {0.12, 3.0, 0.001}, {0.11, 2.0, 0.001}}));
    records.push_back(summarize("b", "basic", 2, {{0.20, 2.0, 0.001}, {0.10, 1.0, 0.001}, {0.30, 3.0, 0.001}}));
    const auto report = build_report("basic", records, Weights{});
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<std::array<double, 5>> raw;
        for (const auto& r : records) {
            const auto& rep = r.repetitions[k];
            raw.push_back({rep.correctness, rep.complexity, 0.0, static_cast<double>(r.s_exp), r.s_repr});
        }
        const auto expected = oracle::mes_table(raw, Weights{}.w);
        CHECK(report.methods[0].mes_per_repetition[k] == doctest::Approx(expected[0]).epsilon(1e-12));
        CHECK(report.methods[1].mes_per_repetition[k] == doctest::Approx(expected[1]).epsilon(1e-12));
    }
    CHECK(report.methods[0].mes_std > 0.0);
    CHECK(report.significance[0][1].t == -report.significance[1][0].t);

    std::ostringstream out;
    write_mes_csv_header(out);
    write_mes_csv_rows(out, report);
    const auto text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    const auto j = to_json(report);
    CHECK(j.at("methods").size() == 2);
    CHECK(criteria_record_from_json(to_json(records[1])).repetitions.size() == 3);
}
