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

#include "mesbench/criteria.hpp"

#include "mesbench/csv.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>
#include <ostream>

namespace mesbench {

std::string_view to_string(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::mape: return "mape";
        case ErrorKind::mae: return "mae";
        case ErrorKind::rmse: return "rmse";
    }
    return "unknown";
}

ErrorKind parse_error_kind(std::string_view text) {
    for (auto k : {ErrorKind::mape, ErrorKind::mae, ErrorKind::rmse}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown error kind '" + std::string(text) + "'");
}

double regression_error(const Vector& y, const Vector& yhat, ErrorKind kind) {
    if (y.size() != yhat.size() || y.size() == 0) {
        throw Error(ErrorCode::LengthMismatch, "error metric on lengths " + std::to_string(y.size()) +
                                                   " and " + std::to_string(yhat.size()));
    }
    const auto n = static_cast<double>(y.size());
    double acc = 0.0;
    switch (kind) {
        case ErrorKind::mape:
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                if (y(i) == 0.0) {
                    throw Error(ErrorCode::ZeroTrueValue, "mape undefined: y[" + std::to_string(i) + "] = 0");
                }
                acc += std::abs(y(i) - yhat(i)) / std::abs(y(i));
            }
            return acc / n;
        case ErrorKind::mae:
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                acc += std::abs(y(i) - yhat(i));
            }
            return acc / n;
        case ErrorKind::rmse:
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                const double d = y(i) - yhat(i);
                acc += d * d;
            }
            return std::sqrt(acc / n);
    }
    return acc;
}

std::string_view to_string(Responsiveness r) noexcept {
    switch (r) {
        case Responsiveness::real_time: return "real_time";
        case Responsiveness::fast: return "fast";
        case Responsiveness::slow: return "slow";
    }
    return "unknown";
}

Responsiveness parse_responsiveness(std::string_view text) {
    for (auto r : {Responsiveness::real_time, Responsiveness::fast, Responsiveness::slow}) {
        if (to_string(r) == text) {
            return r;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown responsiveness '" + std::string(text) + "'");
}

Responsiveness categorize(double seconds) noexcept {
    if (seconds < 0.1) {
        return Responsiveness::real_time;
    }
    return seconds < 1.0 ? Responsiveness::fast : Responsiveness::slow;
}

ResponsivenessResult measure_responsiveness(std::size_t rows,
                                            const std::function<void(std::size_t)>& predict_row) {
    if (rows == 0) {
        throw Error(ErrorCode::EmptyTable, "responsiveness needs at least one row");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const auto start = Clock::now();
        predict_row(i);
        total += seconds_since(start);
    }
    const double mean = total / static_cast<double>(rows);
    return {mean, categorize(mean)};
}

double reproducibility(std::span<const double> values) {
    if (values.size() < 2) {
        throw Error(ErrorCode::TooFewRepetitions, "reproducibility needs at least 2 repetitions");
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt(ss / (n - 1.0));
}

TTest t_test(std::span<const double> a, std::span<const double> b, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
    }
    TTest r;
    if (a.size() < 2 || b.size() < 2) {
        r.degenerate = true;
        return r;
    }
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
    double ssa = 0.0;
    double ssb = 0.0;
    for (double v : a) ssa += (v - ma) * (v - ma);
    for (double v : b) ssb += (v - mb) * (v - mb);
    r.degrees_of_freedom = na + nb - 2.0;
    const double pooled = (ssa + ssb) / r.degrees_of_freedom;
    if (!(pooled > 0.0)) {
        r.degenerate = true;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    const boost::math::students_t dist(r.degrees_of_freedom);
    r.critical = boost::math::quantile(dist, 1.0 - alpha / 2.0);
    r.significant = std::abs(r.t) > r.critical;
    return r;
}

const ExpertiseLevel& expertise_level(int level) {
    if (level < 1 || level > 6) {
        throw Error(ErrorCode::InvalidConfig, "expertise level must be 1..6, got " + std::to_string(level));
    }
    return kExpertiseLevels[level - 1];
}

CriteriaRecord summarize(std::string method, std::string subset, int expertise,
                         std::vector<RepetitionRecord> repetitions) {
    CriteriaRecord r;
    r.method = std::move(method);
    r.subset = std::move(subset);
    r.s_exp = expertise_level(expertise).level;
    if (!repetitions.empty()) {
        const auto n = static_cast<double>(repetitions.size());
        std::vector<double> corr;
        for (const auto& rep : repetitions) {
            corr.push_back(rep.correctness);
            r.s_corr += rep.correctness / n;
            r.s_comp += rep.complexity / n;
            r.s_resp_seconds += rep.response_seconds / n;
        }
        r.s_resp = categorize(r.s_resp_seconds);
        r.s_repr = corr.size() >= 2 ? reproducibility(corr) : 0.0;
    }
    r.repetitions = std::move(repetitions);
    return r;
}

void write_criteria_csv(std::ostream& out, std::span<const CriteriaRecord> records) {
    csv::write_row(out, {"method", "correctness", "complexity", "expertise", "responsiveness", "mes"});
    for (const auto& r : records) {
        csv::write_row(out, {r.method, csv::format_double(r.s_corr), csv::format_double(r.s_comp),
                             std::to_string(r.s_exp), std::string(to_string(r.s_resp)), ""});
    }
}

}  // namespace mesbench
