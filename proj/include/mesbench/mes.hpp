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

#include "mesbench/criteria.hpp"

#include "json.hpp"

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mesbench {

enum class Criterion { correctness, complexity, responsiveness, expertise, reproducibility };

inline constexpr Criterion kAllCriteria[] = {Criterion::correctness, Criterion::complexity,
                                             Criterion::responsiveness, Criterion::expertise,
                                             Criterion::reproducibility};

std::string_view to_string(Criterion c) noexcept;
/// Short key used in weight strings: corr, comp, resp, exp, repr.
std::string_view short_name(Criterion c) noexcept;

/// One value per criterion, indexed by Criterion.
using CriteriaVector = std::array<double, 5>;

inline double& at(CriteriaVector& v, Criterion c) noexcept { return v[static_cast<std::size_t>(c)]; }
inline double at(const CriteriaVector& v, Criterion c) noexcept { return v[static_cast<std::size_t>(c)]; }

struct Weights {
    CriteriaVector w{50.0, 10.0, 0.0, 40.0, 0.0};

    [[nodiscard]] double operator[](Criterion c) const noexcept { return at(w, c); }
    [[nodiscard]] double sum() const noexcept;
    friend bool operator==(const Weights&, const Weights&) = default;
};

/// "corr=50,exp=40,comp=10". Criteria not named get weight 0.
/// Throws InvalidConfig on bad syntax or negative values, ZeroWeightSum when
/// every weight is 0.
Weights parse_weights(std::string_view text);
std::string format_weights(const Weights& w);
void validate(const Weights& w);

/// (x - min) / (max - min); all zeros when max == min.
std::vector<double> minmax_normalize(std::span<const double> values);

/// Weighted mean of normalized criteria. Throws ZeroWeightSum.
double mes(const CriteriaVector& normalized, const Weights& w);

/// Raw criteria of one record oriented so that smaller is better, with
/// responsiveness as its ordinal.
CriteriaVector raw_criteria(const CriteriaRecord& r);

struct Bounds {
    double min = 0.0;
    double max = 0.0;
};

/// Column-wise min-max over methods, then MES per method.
struct Scored {
    std::vector<CriteriaVector> normalized;
    std::vector<double> mes;
    std::array<Bounds, 5> bounds;
};
Scored score(std::span<const CriteriaVector> raw, const Weights& w);

struct RankKey {
    std::string method;
    double mes = 0.0;
    double complexity = 0.0;
};

/// Indices ordered by ascending MES, then lower complexity, then method name.
std::vector<std::size_t> rank(std::span<const RankKey> rows);

struct MethodScore {
    CriteriaRecord record;
    CriteriaVector normalized{};  ///< of the repetition-mean criteria
    std::vector<double> mes_per_repetition;
    double mes_mean = 0.0;
    double mes_std = 0.0;
    std::size_t rank = 0;  ///< 1-based
};

struct MesReport {
    std::string subset;
    Weights weights;
    std::array<Bounds, 5> bounds;  ///< of the repetition-mean criteria
    std::vector<MethodScore> methods;
    std::vector<std::size_t> ranking;  ///< indices into `methods`, best first
    /// Pairwise t-tests on per-repetition correctness; [i][j] compares i with j.
    std::vector<std::vector<TTest>> significance;
};

/// MES is computed per repetition from that repetition's raw values
/// (normalized across methods), then summarized as mean and sample std.
/// Records without repetitions contribute their summary values as a single
/// repetition. With differing repetition counts only the common prefix is
/// scored per repetition.
MesReport build_report(std::string subset, std::vector<CriteriaRecord> records, const Weights& w,
                       double alpha = 0.05);

nlohmann::json to_json(const CriteriaRecord& r);
CriteriaRecord criteria_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MesReport& r);

/// subset, method, correctness, correctness_std, complexity, complexity_std,
/// expertise, responsiveness, responsiveness_seconds, reproducibility, mes,
/// mes_std, rank.
void write_mes_csv_header(std::ostream& out);
void write_mes_csv_rows(std::ostream& out, const MesReport& report);

}  // namespace mesbench
