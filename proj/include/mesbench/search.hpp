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
#include "mesbench/regressors.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mesbench {

// ---------------------------------------------------------------------------
// Cross-validation and random search

struct SearchConfig {
    std::size_t n_iter = 60;
    std::size_t k_folds = 5;
    std::uint64_t seed = 0;
    ErrorKind scoring = ErrorKind::mape;
};

/// Throws InvalidConfig for n_iter < 1, FoldTooSmall unless 2 <= k_folds <= n.
void validate(const SearchConfig& cfg, std::size_t n);

/// Test indices of each fold: contiguous chunks of a seeded permutation, the
/// first n % k folds one row larger. Depends only on (n, k, seed).
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed);

/// Mean out-of-fold error. Fold f is fitted with seed derive_seed(seed, "fold", f).
double cross_val_score(const ModelSpec& spec, const Matrix& x, const Vector& y, std::size_t k_folds,
                       std::uint64_t seed, ErrorKind scoring);

enum class TrialStatus { ok, failed };
std::string_view to_string(TrialStatus s) noexcept;

struct Trial {
    std::size_t index = 0;
    ModelSpec spec;
    double score = 0.0;  ///< NaN for failed trials
    TrialStatus status = TrialStatus::ok;
    std::string message;
    double seconds = 0.0;
};

/// Columns: trial_index, algorithm, spec, score, status.
void write_trials_csv_header(std::ostream& out);
void write_trials_csv_rows(std::ostream& out, std::span<const Trial> trials);

struct SearchResult {
    ModelSpec best;
    double best_score = 0.0;
    std::vector<Trial> trials;
};

/// Draws n_iter specs uniformly from the algorithm's space and scores each by
/// cross-validation on common folds. The lowest score wins; scores equal
/// within 1e-12 + 1e-9 * |best| keep the earlier trial. Failed fits are logged
/// and excluded; AllTrialsFailed when nothing succeeds.
SearchResult random_search(Algorithm algorithm, const Matrix& x, const Vector& y, const SearchConfig& cfg);

struct TunedModel {
    SearchResult search;
    FittedModel model;
};

/// random_search followed by a refit of the winner on all rows.
TunedModel tune_and_fit(Algorithm algorithm, const Matrix& x, const Vector& y, const SearchConfig& cfg);

// ---------------------------------------------------------------------------
// automl-lite

struct AutomlConfig {
    double budget_seconds = 1800.0;
    /// When set, the search runs exactly this many trials and ignores the
    /// clock, which makes the result deterministic.
    std::optional<std::size_t> max_iterations;
    std::uint64_t seed = 0;
    ErrorKind scoring = ErrorKind::mape;
    std::size_t ensemble_top_k = 5;
    double holdout_frac = 0.2;
};

void validate(const AutomlConfig& cfg);

/// Weighted mean of member models; weights are non-negative and sum to 1.
class FittedEnsemble {
public:
    struct Member {
        ModelSpec spec;
        FittedModel model;
        double weight = 0.0;
        double validation_score = 0.0;
        bool refit = false;  ///< false when kept as trained on the internal split
    };

    explicit FittedEnsemble(std::vector<Member> members);

    [[nodiscard]] Vector predict(const Matrix& x) const;
    [[nodiscard]] const std::vector<Member>& members() const noexcept { return m_members; }
    [[nodiscard]] nlohmann::json to_json() const;

private:
    std::vector<Member> m_members;
};

struct AutomlResult {
    FittedEnsemble ensemble;
    std::vector<Trial> trials;
    double last_fit_seconds = 0.0;  ///< duration of the final fit performed
    bool fallback = false;
    std::vector<std::string> warnings;
};

/// Random combined algorithm selection and hyperparameter search: each trial
/// draws an algorithm uniformly, then a spec from its space, fits on the
/// internal training part and scores on the internal holdout. The loop ends
/// when the iteration count is reached or, in time mode, when elapsed time
/// plus the projected refit time of the current top-k reaches the budget.
/// The top-k are refitted on all rows while that fits within 1.1 x budget and
/// combined with weights proportional to 1 / validation error. Fits are never
/// interrupted. If no trial succeeds, a kNN model is returned with a warning.
AutomlResult automl_fit(const Matrix& x, const Vector& y, const AutomlConfig& cfg);

}  // namespace mesbench
