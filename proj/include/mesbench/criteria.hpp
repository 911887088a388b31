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

#include <chrono>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mesbench {

// ---------------------------------------------------------------------------
// Regression error

enum class ErrorKind { mape, mae, rmse };

std::string_view to_string(ErrorKind k) noexcept;
ErrorKind parse_error_kind(std::string_view text);

/// mape = mean |y - yhat| / |y|; mae and rmse as usual.
/// Throws LengthMismatch on unequal or empty inputs, ZeroTrueValue for mape
/// when some y is zero.
double regression_error(const Vector& y, const Vector& yhat, ErrorKind kind);

// ---------------------------------------------------------------------------
// Timing

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
struct Timed {
    T value;
    double seconds;
};

/// Wall time of the complete training call on the monotonic clock.
template <typename Train>
auto measure_training(Train&& train) -> Timed<decltype(train())> {
    const auto start = Clock::now();
    auto value = train();
    return {std::move(value), seconds_since(start)};
}

enum class Responsiveness { real_time, fast, slow };

std::string_view to_string(Responsiveness r) noexcept;
Responsiveness parse_responsiveness(std::string_view text);

/// [0, 0.1) real_time, [0.1, 1) fast, [1, inf) slow.
Responsiveness categorize(double seconds) noexcept;

/// real_time 0, fast 1, slow 2: smaller is better.
inline double ordinal(Responsiveness r) noexcept { return static_cast<double>(static_cast<int>(r)); }

struct ResponsivenessResult {
    double mean_seconds = 0.0;
    Responsiveness category = Responsiveness::real_time;
};

/// Calls `predict_row(i)` once per row and averages the wall time per call.
ResponsivenessResult measure_responsiveness(std::size_t rows,
                                            const std::function<void(std::size_t)>& predict_row);

// ---------------------------------------------------------------------------
// Statistics

/// Sample standard deviation of per-repetition correctness.
/// Throws TooFewRepetitions below two values.
double reproducibility(std::span<const double> per_repetition);

struct TTest {
    double t = 0.0;
    double degrees_of_freedom = 0.0;
    double critical = 0.0;
    bool significant = false;
    bool degenerate = false;  ///< fewer than 2 values per side or zero pooled variance
};

/// Two-sample Student's t with pooled variance, two-sided at `alpha`.
/// Throws InvalidAlpha unless alpha lies in (0, 1).
TTest t_test(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

// ---------------------------------------------------------------------------
// Expertise

struct ExpertiseLevel {
    int level;
    std::string_view summary;
};

/// The six knowledge levels. Levels 1-3 cover data processing, 4-6 the ML phase.
inline constexpr ExpertiseLevel kExpertiseLevels[] = {
    {1, "Collect, describe and explore data"},
    {2, "Verify, select and clean the data"},
    {3, "Construct and integrate data"},
    {4, "Format data, select a model and generate a test design"},
    {5, "Model assessment: understands models, their hyperparameters and metrics"},
    {6, "Model creation: builds and optimizes models from scratch"},
};

inline constexpr int kManualExpertise = 5;
inline constexpr int kAutomatedExpertise = 2;

/// Throws InvalidConfig outside 1..6.
const ExpertiseLevel& expertise_level(int level);

// ---------------------------------------------------------------------------
// Records

struct RepetitionRecord {
    double correctness = 0.0;       ///< holdout error
    double complexity = 0.0;        ///< training seconds
    double response_seconds = 0.0;  ///< mean single-row prediction seconds
};

/// The five criteria for one (method, subset) pair.
struct CriteriaRecord {
    std::string method;
    std::string subset;
    double s_corr = 0.0;
    double s_comp = 0.0;
    Responsiveness s_resp = Responsiveness::real_time;
    double s_resp_seconds = 0.0;
    int s_exp = kManualExpertise;
    double s_repr = 0.0;
    std::vector<RepetitionRecord> repetitions;
};

/// Means over repetitions; reproducibility from correctness (0 for a single
/// repetition).
CriteriaRecord summarize(std::string method, std::string subset, int expertise,
                         std::vector<RepetitionRecord> repetitions);

/// Columns: method, correctness, complexity, expertise, responsiveness, mes.
/// The mes column is left empty; it is filled by the scoring step.
void write_criteria_csv(std::ostream& out, std::span<const CriteriaRecord> records);

}  // namespace mesbench
