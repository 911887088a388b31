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

#include "mesbench/mes.hpp"

#include "mesbench/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace mesbench {

std::string_view to_string(Criterion c) noexcept {
    switch (c) {
        case Criterion::correctness: return "correctness";
        case Criterion::complexity: return "complexity";
        case Criterion::responsiveness: return "responsiveness";
        case Criterion::expertise: return "expertise";
        case Criterion::reproducibility: return "reproducibility";
    }
    return "unknown";
}

std::string_view short_name(Criterion c) noexcept {
    switch (c) {
        case Criterion::correctness: return "corr";
        case Criterion::complexity: return "comp";
        case Criterion::responsiveness: return "resp";
        case Criterion::expertise: return "exp";
        case Criterion::reproducibility: return "repr";
    }
    return "unknown";
}

double Weights::sum() const noexcept { return std::accumulate(w.begin(), w.end(), 0.0); }

void validate(const Weights& w) {
    for (auto c : kAllCriteria) {
        if (!(w[c] >= 0.0) || !std::isfinite(w[c])) {
            throw Error(ErrorCode::InvalidConfig,
                        "weight " + std::string(short_name(c)) + " must be a non-negative number");
        }
    }
    if (!(w.sum() > 0.0)) {
        throw Error(ErrorCode::ZeroWeightSum, "weights sum to zero");
    }
}

Weights parse_weights(std::string_view text) {
    Weights w;
    w.w.fill(0.0);
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string_view::npos) {
            comma = text.size();
        }
        const auto item = text.substr(pos, comma - pos);
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::InvalidConfig, "weight '" + std::string(item) + "' is not key=value");
        }
        const auto key = item.substr(0, eq);
        const auto value = item.substr(eq + 1);
        const auto* c = std::find_if(std::begin(kAllCriteria), std::end(kAllCriteria),
                                     [&](Criterion k) { return short_name(k) == key || to_string(k) == key; });
        if (c == std::end(kAllCriteria)) {
            throw Error(ErrorCode::InvalidConfig, "unknown criterion '" + std::string(key) + "'");
        }
        double v = 0.0;
        const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc{} || end != value.data() + value.size()) {
            throw Error(ErrorCode::InvalidConfig, "weight '" + std::string(value) + "' is not a number");
        }
        at(w.w, *c) = v;
        pos = comma + 1;
    }
    validate(w);
    return w;
}

std::string format_weights(const Weights& w) {
    std::string out;
    for (auto c : kAllCriteria) {
        if (!out.empty()) {
            out.push_back(',');
        }
        out += std::string(short_name(c)) + "=" + csv::format_double(w[c]);
    }
    return out;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
    std::vector<double> out(values.size(), 0.0);
    if (values.empty()) {
        return out;
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (range > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            out[i] = (values[i] - *lo) / range;
        }
    }
    return out;
}

double mes(const CriteriaVector& normalized, const Weights& w) {
    const double total = w.sum();
    if (!(total > 0.0)) {
        throw Error(ErrorCode::ZeroWeightSum, "weights sum to zero");
    }
    double acc = 0.0;
    for (auto c : kAllCriteria) {
        acc += w[c] * at(normalized, c);
    }
    return acc / total;
}

CriteriaVector raw_criteria(const CriteriaRecord& r) {
    CriteriaVector v{};
    at(v, Criterion::correctness) = r.s_corr;
    at(v, Criterion::complexity) = r.s_comp;
    at(v, Criterion::responsiveness) = ordinal(r.s_resp);
    at(v, Criterion::expertise) = static_cast<double>(r.s_exp);
    at(v, Criterion::reproducibility) = r.s_repr;
    return v;
}

Scored score(std::span<const CriteriaVector> raw, const Weights& w) {
    Scored s;
    s.normalized.assign(raw.size(), CriteriaVector{});
    for (auto c : kAllCriteria) {
        std::vector<double> column;
        for (const auto& row : raw) {
            column.push_back(at(row, c));
        }
        const auto norm = minmax_normalize(column);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            at(s.normalized[i], c) = norm[i];
        }
        if (!column.empty()) {
            const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
            s.bounds[static_cast<std::size_t>(c)] = {*lo, *hi};
        }
    }
    for (const auto& n : s.normalized) {
        s.mes.push_back(mes(n, w));
    }
    return s;
}

std::vector<std::size_t> rank(std::span<const RankKey> rows) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = rows[a];
        const auto& y = rows[b];
        if (x.mes != y.mes) return x.mes < y.mes;
        if (x.complexity != y.complexity) return x.complexity < y.complexity;
        return x.method < y.method;
    });
    return order;
}

MesReport build_report(std::string subset, std::vector<CriteriaRecord> records, const Weights& w,
                       double alpha) {
    validate(w);
    MesReport report;
    report.subset = std::move(subset);
    report.weights = w;
    const auto m = records.size();
    if (m == 0) {
        return report;
    }

    std::vector<CriteriaVector> mean_raw;
    for (const auto& r : records) {
        mean_raw.push_back(raw_criteria(r));
    }
    const auto overall = score(mean_raw, w);
    report.bounds = overall.bounds;

    std::size_t reps = std::numeric_limits<std::size_t>::max();
    for (const auto& r : records) {
        reps = std::min(reps, std::max<std::size_t>(1, r.repetitions.size()));
    }
    std::vector<std::vector<double>> per_rep(m);
    for (std::size_t k = 0; k < reps; ++k) {
        std::vector<CriteriaVector> raw;
        for (const auto& r : records) {
            auto v = raw_criteria(r);
            if (!r.repetitions.empty()) {
                const auto& rep = r.repetitions[k];
                at(v, Criterion::correctness) = rep.correctness;
                at(v, Criterion::complexity) = rep.complexity;
                at(v, Criterion::responsiveness) = ordinal(categorize(rep.response_seconds));
            }
            raw.push_back(v);
        }
        const auto s = score(raw, w);
        for (std::size_t i = 0; i < m; ++i) {
            per_rep[i].push_back(s.mes[i]);
        }
    }

    std::vector<RankKey> keys;
    for (std::size_t i = 0; i < m; ++i) {
        MethodScore ms;
        ms.normalized = overall.normalized[i];
        ms.mes_per_repetition = per_rep[i];
        const auto n = static_cast<double>(per_rep[i].size());
        ms.mes_mean = std::accumulate(per_rep[i].begin(), per_rep[i].end(), 0.0) / n;
        ms.mes_std = per_rep[i].size() >= 2 ? reproducibility(per_rep[i]) : 0.0;
        keys.push_back({records[i].method, ms.mes_mean, records[i].s_comp});
        ms.record = std::move(records[i]);
        report.methods.push_back(std::move(ms));
    }
    report.ranking = rank(keys);
    for (std::size_t pos = 0; pos < m; ++pos) {
        report.methods[report.ranking[pos]].rank = pos + 1;
    }

    report.significance.assign(m, std::vector<TTest>(m));
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> a;
        for (const auto& rep : report.methods[i].record.repetitions) a.push_back(rep.correctness);
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<double> b;
            for (const auto& rep : report.methods[j].record.repetitions) b.push_back(rep.correctness);
            report.significance[i][j] = t_test(a, b, alpha);
        }
    }
    return report;
}

nlohmann::json to_json(const CriteriaRecord& r) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : r.repetitions) {
        reps.push_back({{"correctness", rep.correctness},
                        {"complexity", rep.complexity},
                        {"response_seconds", rep.response_seconds}});
    }
    return {{"method", r.method},
            {"subset", r.subset},
            {"correctness", r.s_corr},
            {"complexity", r.s_comp},
            {"responsiveness", std::string(to_string(r.s_resp))},
            {"responsiveness_seconds", r.s_resp_seconds},
            {"expertise", r.s_exp},
            {"reproducibility", r.s_repr},
            {"repetitions", reps}};
}

CriteriaRecord criteria_record_from_json(const nlohmann::json& j) {
    CriteriaRecord r;
    r.method = j.at("method").get<std::string>();
    r.subset = j.at("subset").get<std::string>();
    r.s_corr = j.at("correctness").get<double>();
    r.s_comp = j.at("complexity").get<double>();
    r.s_resp = parse_responsiveness(j.at("responsiveness").get<std::string>());
    r.s_resp_seconds = j.at("responsiveness_seconds").get<double>();
    r.s_exp = j.at("expertise").get<int>();
    r.s_repr = j.at("reproducibility").get<double>();
    for (const auto& rep : j.at("repetitions")) {
        r.repetitions.push_back({rep.at("correctness").get<double>(), rep.at("complexity").get<double>(),
                                 rep.at("response_seconds").get<double>()});
    }
    return r;
}

nlohmann::json to_json(const MesReport& r) {
    nlohmann::json weights = nlohmann::json::object();
    nlohmann::json bounds = nlohmann::json::object();
    for (auto c : kAllCriteria) {
        weights[std::string(short_name(c))] = r.weights[c];
        const auto& b = r.bounds[static_cast<std::size_t>(c)];
        bounds[std::string(to_string(c))] = {{"min", b.min}, {"max", b.max}};
    }
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : r.methods) {
        nlohmann::json normalized = nlohmann::json::object();
        for (auto c : kAllCriteria) {
            normalized[std::string(to_string(c))] = at(m.normalized, c);
        }
        methods.push_back({{"criteria", to_json(m.record)},
                           {"normalized", normalized},
                           {"mes_per_repetition", m.mes_per_repetition},
                           {"mes", m.mes_mean},
                           {"mes_std", m.mes_std},
                           {"rank", m.rank}});
    }
    nlohmann::json ranking = nlohmann::json::array();
    for (auto i : r.ranking) {
        ranking.push_back(r.methods[i].record.method);
    }
    nlohmann::json significance = nlohmann::json::array();
    for (std::size_t i = 0; i < r.significance.size(); ++i) {
        for (std::size_t j = i + 1; j < r.significance.size(); ++j) {
            const auto& t = r.significance[i][j];
            significance.push_back({{"a", r.methods[i].record.method},
                                    {"b", r.methods[j].record.method},
                                    {"t", t.t},
                                    {"df", t.degrees_of_freedom},
                                    {"significant", t.significant},
                                    {"degenerate", t.degenerate}});
        }
    }
    return {{"subset", r.subset},   {"weights", weights},   {"bounds", bounds},
            {"methods", methods},   {"ranking", ranking},   {"significance", significance}};
}

void write_mes_csv_header(std::ostream& out) {
    csv::write_row(out, {"subset", "method", "correctness", "correctness_std", "complexity",
                         "complexity_std", "expertise", "responsiveness", "responsiveness_seconds",
                         "reproducibility", "mes", "mes_std", "rank"});
}

namespace {
double sample_std(const std::vector<double>& v) { return v.size() >= 2 ? reproducibility(v) : 0.0; }
}  // namespace

void write_mes_csv_rows(std::ostream& out, const MesReport& report) {
    for (auto i : report.ranking) {
        const auto& m = report.methods[i];
        std::vector<double> comp;
        for (const auto& rep : m.record.repetitions) comp.push_back(rep.complexity);
        csv::write_row(out, {report.subset, m.record.method, csv::format_double(m.record.s_corr),
                             csv::format_double(m.record.s_repr), csv::format_double(m.record.s_comp),
                             csv::format_double(sample_std(comp)), std::to_string(m.record.s_exp),
                             std::string(to_string(m.record.s_resp)),
                             csv::format_double(m.record.s_resp_seconds),
                             csv::format_double(m.record.s_repr), csv::format_double(m.mes_mean),
                             csv::format_double(m.mes_std), std::to_string(m.rank)});
    }
}

}  // namespace mesbench
