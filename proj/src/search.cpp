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

#include "mesbench/search.hpp"

#include "mesbench/csv.hpp"
#include "mesbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace mesbench {

namespace {

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

Vector take(const Vector& y, std::span<const std::size_t> rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

bool strictly_better(double candidate, double incumbent) {
    const double tol = 1e-12 + 1e-9 * std::abs(incumbent);
    return candidate < incumbent - tol;
}

}  // namespace

void validate(const SearchConfig& cfg, std::size_t n) {
    if (cfg.n_iter < 1) {
        throw Error(ErrorCode::InvalidConfig, "n_iter must be at least 1");
    }
    if (cfg.k_folds < 2 || cfg.k_folds > n) {
        throw Error(ErrorCode::FoldTooSmall, "k_folds=" + std::to_string(cfg.k_folds) +
                                                 " needs 2 <= k <= n=" + std::to_string(n));
    }
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2 || k > n) {
        throw Error(ErrorCode::FoldTooSmall,
                    "k_folds=" + std::to_string(k) + " needs 2 <= k <= n=" + std::to_string(n));
    }
    const auto perm = shuffled_indices(n, seed);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                        perm.begin() + static_cast<std::ptrdiff_t>(start + size));
        std::sort(folds[f].begin(), folds[f].end());
        start += size;
    }
    return folds;
}

double cross_val_score(const ModelSpec& spec, const Matrix& x, const Vector& y, std::size_t k_folds,
                       std::uint64_t seed, ErrorKind scoring) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (static_cast<std::size_t>(y.size()) != n) {
        throw Error(ErrorCode::LengthMismatch, "X and y lengths differ");
    }
    const auto folds = kfold_indices(n, k_folds, seed);
    std::vector<char> in_test(n);
    double total = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::fill(in_test.begin(), in_test.end(), 0);
        for (auto i : folds[f]) in_test[i] = 1;
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_test[i]) train.push_back(i);
        }
        const auto model = fit(spec, take_rows(x, train), take(y, train), derive_seed(seed, "fold", f));
        total += regression_error(take(y, folds[f]), model.predict(take_rows(x, folds[f])), scoring);
    }
    return total / static_cast<double>(folds.size());
}

std::string_view to_string(TrialStatus s) noexcept { return s == TrialStatus::ok ? "ok" : "failed"; }

void write_trials_csv_header(std::ostream& out) {
    csv::write_row(out, {"trial_index", "algorithm", "spec", "score", "status"});
}

void write_trials_csv_rows(std::ostream& out, std::span<const Trial> trials) {
    for (const auto& t : trials) {
        csv::write_row(out, {std::to_string(t.index), std::string(to_string(t.spec.algorithm)),
                             t.spec.flat_pairs(),
                             t.status == TrialStatus::ok ? csv::format_double(t.score) : "",
                             std::string(to_string(t.status))});
    }
}

SearchResult random_search(Algorithm algorithm, const Matrix& x, const Vector& y, const SearchConfig& cfg) {
    validate(cfg, static_cast<std::size_t>(x.rows()));
    const auto space = hyper_space(algorithm, static_cast<std::size_t>(x.cols()));
    Rng rng(derive_seed(cfg.seed, "search", std::string(to_string(algorithm))));
    const auto cv_seed = derive_seed(cfg.seed, "cv");

    SearchResult result;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cfg.n_iter; ++i) {
        Trial t;
        t.index = i;
        t.spec = space.sample(rng);
        const auto start = Clock::now();
        try {
            t.score = cross_val_score(t.spec, x, y, cfg.k_folds, cv_seed, cfg.scoring);
            if (!std::isfinite(t.score)) {
                throw Error(ErrorCode::InvalidSpec, "non-finite cross-validation score");
            }
            if (!best || strictly_better(t.score, result.trials[*best].score)) {
                best = i;
            }
        } catch (const std::exception& e) {
            t.status = TrialStatus::failed;
            t.score = std::numeric_limits<double>::quiet_NaN();
            t.message = e.what();
        }
        t.seconds = seconds_since(start);
        result.trials.push_back(std::move(t));
    }
    if (!best) {
        throw Error(ErrorCode::AllTrialsFailed, std::string(to_string(algorithm)) + ": all " +
                                                    std::to_string(cfg.n_iter) + " trials failed (" +
                                                    result.trials.back().message + ")");
    }
    result.best = result.trials[*best].spec;
    result.best_score = result.trials[*best].score;
    return result;
}

TunedModel tune_and_fit(Algorithm algorithm, const Matrix& x, const Vector& y, const SearchConfig& cfg) {
    auto search = random_search(algorithm, x, y, cfg);
    auto model = fit(search.best, x, y, derive_seed(cfg.seed, "refit"));
    return {std::move(search), std::move(model)};
}

// ---------------------------------------------------------------------------
// automl-lite

void validate(const AutomlConfig& cfg) {
    if (cfg.max_iterations) {
        if (*cfg.max_iterations < 1) {
            throw Error(ErrorCode::InvalidConfig, "max_iterations must be at least 1");
        }
    } else if (!(cfg.budget_seconds > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "budget_seconds must be positive");
    }
    if (cfg.ensemble_top_k < 1) {
        throw Error(ErrorCode::InvalidConfig, "ensemble_top_k must be at least 1");
    }
    if (!(cfg.holdout_frac > 0.0 && cfg.holdout_frac < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "holdout_frac must lie in (0, 1)");
    }
}

FittedEnsemble::FittedEnsemble(std::vector<Member> members) : m_members(std::move(members)) {
    if (m_members.empty()) {
        throw Error(ErrorCode::InvalidConfig, "an ensemble needs at least one member");
    }
    double total = 0.0;
    for (const auto& m : m_members) {
        if (!(m.weight >= 0.0)) {
            throw Error(ErrorCode::InvalidConfig, "ensemble weights must be non-negative");
        }
        total += m.weight;
    }
    if (!(total > 0.0)) {
        throw Error(ErrorCode::ZeroWeightSum, "ensemble weights sum to zero");
    }
    for (auto& m : m_members) {
        m.weight /= total;
    }
}

Vector FittedEnsemble::predict(const Matrix& x) const {
    if (m_members.size() == 1) {
        return m_members.front().model.predict(x);
    }
    Vector out = Vector::Zero(x.rows());
    for (const auto& m : m_members) {
        out += m.weight * m.model.predict(x);
    }
    return out;
}

nlohmann::json FittedEnsemble::to_json() const {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : m_members) {
        members.push_back({{"spec", mesbench::to_json(m.spec)},
                           {"weight", m.weight},
                           {"validation_score", m.validation_score},
                           {"refit", m.refit},
                           {"model", m.model.to_json()}});
    }
    return {{"members", members}};
}

namespace {

struct Candidate {
    std::size_t trial;
    ModelSpec spec;
    FittedModel model;  // trained on the internal split
    double score;
    double fit_seconds;
};

FittedEnsemble::Member fallback_member(const Matrix& x, const Vector& y) {
    const auto n = static_cast<std::int64_t>(x.rows());
    std::int64_t k = 2;
    for (std::int64_t c : {2, 4, 6, 8, 10}) {
        if (c <= n) k = c;
    }
    ModelSpec spec{Algorithm::knn, {{"n_neighbors", k}, {"weights", std::string("uniform")}, {"p", std::int64_t{2}}}};
    auto model = fit(spec, x, y, 0);
    return {spec, std::move(model), 1.0, std::numeric_limits<double>::quiet_NaN(), true};
}

}  // namespace

AutomlResult automl_fit(const Matrix& x, const Vector& y, const AutomlConfig& cfg) {
    validate(cfg);
    const auto start = Clock::now();
    const auto n = static_cast<std::size_t>(x.rows());
    if (static_cast<std::size_t>(y.size()) != n) {
        throw Error(ErrorCode::LengthMismatch, "X and y lengths differ");
    }
    const bool iteration_mode = cfg.max_iterations.has_value();
    const double budget = cfg.budget_seconds;

    const auto split = holdout_split(n, cfg.holdout_frac, derive_seed(cfg.seed, "automl-holdout"));
    const Matrix x_fit = take_rows(x, split.train);
    const Vector y_fit = take(y, split.train);
    const Matrix x_val = take_rows(x, split.test);
    const Vector y_val = take(y, split.test);
    const double refit_scale = static_cast<double>(n) / static_cast<double>(split.train.size());

    Rng rng(derive_seed(cfg.seed, "automl-cash"));
    std::uniform_int_distribution<std::size_t> pick_algorithm(0, std::size(kAllAlgorithms) - 1);

    std::vector<Trial> trials;
    std::vector<Candidate> top;  // sorted best first, at most top_k
    double last_fit = 0.0;

    const auto projected_refit = [&] {
        double s = 0.0;
        for (const auto& c : top) s += c.fit_seconds * refit_scale;
        return s;
    };

    for (std::size_t i = 0;; ++i) {
        if (iteration_mode) {
            if (i >= *cfg.max_iterations) break;
        } else if (i > 0 && seconds_since(start) + projected_refit() >= budget) {
            break;
        }
        const auto algorithm = kAllAlgorithms[pick_algorithm(rng)];
        Trial t;
        t.index = i;
        t.spec = hyper_space(algorithm, static_cast<std::size_t>(x.cols())).sample(rng);
        const auto trial_start = Clock::now();
        try {
            auto model = fit(t.spec, x_fit, y_fit, derive_seed(cfg.seed, "trial", i));
            const double fit_seconds = seconds_since(trial_start);
            last_fit = fit_seconds;
            t.score = regression_error(y_val, model.predict(x_val), cfg.scoring);
            if (!std::isfinite(t.score)) {
                throw Error(ErrorCode::InvalidSpec, "non-finite validation score");
            }
            Candidate c{i, t.spec, std::move(model), t.score, fit_seconds};
            auto pos = std::find_if(top.begin(), top.end(),
                                    [&](const Candidate& o) { return strictly_better(c.score, o.score); });
            if (static_cast<std::size_t>(pos - top.begin()) < cfg.ensemble_top_k) {
                top.insert(pos, std::move(c));
                if (top.size() > cfg.ensemble_top_k) top.pop_back();
            }
        } catch (const std::exception& e) {
            last_fit = seconds_since(trial_start);
            t.status = TrialStatus::failed;
            t.score = std::numeric_limits<double>::quiet_NaN();
            t.message = e.what();
        }
        t.seconds = seconds_since(trial_start);
        trials.push_back(std::move(t));
    }

    std::vector<std::string> warnings;
    if (top.empty()) {
        warnings.push_back("no trial succeeded within the budget; falling back to kNN");
        const auto fit_start = Clock::now();
        std::vector<FittedEnsemble::Member> members;
        members.push_back(fallback_member(x, y));
        last_fit = seconds_since(fit_start);
        return {FittedEnsemble(std::move(members)), std::move(trials), last_fit, true, std::move(warnings)};
    }

    // Weights proportional to 1 / error; exact fits share all the weight.
    const bool any_exact =
        std::any_of(top.begin(), top.end(), [](const Candidate& c) { return c.score == 0.0; });
    std::vector<FittedEnsemble::Member> members;
    for (auto& c : top) {
        const double weight = any_exact ? (c.score == 0.0 ? 1.0 : 0.0) : 1.0 / c.score;
        if (weight == 0.0) {
            continue;
        }
        bool refit = false;
        const double expected = c.fit_seconds * refit_scale;
        if (iteration_mode || seconds_since(start) + expected <= 1.1 * budget) {
            const auto fit_start = Clock::now();
            c.model = fit(c.spec, x, y, derive_seed(cfg.seed, "trial", c.trial));
            last_fit = seconds_since(fit_start);
            refit = true;
        }
        members.push_back({c.spec, std::move(c.model), weight, c.score, refit});
    }
    if (std::any_of(members.begin(), members.end(), [](const auto& m) { return !m.refit; })) {
        warnings.push_back("budget exhausted before every ensemble member could be refitted");
    }
    return {FittedEnsemble(std::move(members)), std::move(trials), last_fit, false, std::move(warnings)};
}

}  // namespace mesbench
