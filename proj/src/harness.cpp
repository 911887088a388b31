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

#include "mesbench/harness.hpp"

#include "mesbench/adapter.hpp"
#include "mesbench/csv.hpp"
#include "mesbench/preprocess.hpp"
#include "mesbench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace mesbench {

namespace {

[[noreturn]] void bad_config(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

constexpr const char* kTargetName = "price";

}  // namespace

std::string_view to_string(MethodKind kind) noexcept {
    switch (kind) {
        case MethodKind::manual: return "manual";
        case MethodKind::automl_lite: return "automl_lite";
        case MethodKind::external: return "external";
    }
    return "unknown";
}

std::string_view to_string(CellStatus s) noexcept { return s == CellStatus::ok ? "ok" : "failed"; }

std::string_view to_string(ReportFormat f) noexcept {
    switch (f) {
        case ReportFormat::json: return "json";
        case ReportFormat::csv: return "csv";
        case ReportFormat::plotdata: return "plotdata";
        case ReportFormat::trials: return "trials";
    }
    return "unknown";
}

ReportFormat parse_report_format(std::string_view text) {
    for (auto f : {ReportFormat::json, ReportFormat::csv, ReportFormat::plotdata, ReportFormat::trials}) {
        if (text == to_string(f)) return f;
    }
    bad_config("unknown report format '" + std::string(text) + "'");
}

MethodConfig method_from_name(std::string_view name) {
    MethodConfig m;
    m.name = std::string(name);
    if (name == "automl_lite") {
        m.kind = MethodKind::automl_lite;
        return m;
    }
    try {
        m.algorithm = parse_algorithm(name);
    } catch (const Error&) {
        bad_config("unknown method '" + std::string(name) + "'");
    }
    m.kind = MethodKind::manual;
    return m;
}

// ---------------------------------------------------------------------------
// Configuration

void validate(const BenchmarkConfig& cfg) {
    if (cfg.methods.empty()) bad_config("at least one method is required");
    if (cfg.subsets.empty()) bad_config("at least one subset is required");
    if (cfg.repetitions < 1) bad_config("repetitions must be >= 1");
    if (!(cfg.test_frac > 0.0 && cfg.test_frac < 1.0)) bad_config("test_frac must lie in (0, 1)");
    if (!(cfg.budget_seconds > 0.0)) bad_config("budget_seconds must be positive");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) bad_config("alpha must lie in (0, 1)");
    if (cfg.response_rows < 1) bad_config("response_rows must be >= 1");
    if (cfg.search.n_iter < 1) bad_config("search.n_iter must be >= 1");
    if (cfg.search.k_folds < 2) bad_config("search.k_folds must be >= 2");
    validate(cfg.weights);

    std::set<std::string> names;
    for (const auto& m : cfg.methods) {
        if (m.name.empty()) bad_config("method without a name");
        if (!names.insert(m.name).second) bad_config("duplicate method name '" + m.name + "'");
        if (m.kind == MethodKind::external && m.command.empty()) {
            bad_config("external method '" + m.name + "' needs a command");
        }
        if (m.budget_seconds && !(*m.budget_seconds > 0.0)) bad_config("budget of '" + m.name + "' must be positive");
        if (m.max_iterations && *m.max_iterations < 1) bad_config("max_iterations of '" + m.name + "' must be >= 1");
        if (m.n_iter && *m.n_iter < 1) bad_config("n_iter of '" + m.name + "' must be >= 1");
        if (m.k_folds && *m.k_folds < 2) bad_config("k_folds of '" + m.name + "' must be >= 2");
        if (m.timeout_seconds && !(*m.timeout_seconds > 0.0)) bad_config("timeout of '" + m.name + "' must be positive");
        if (m.expertise) (void)expertise_level(*m.expertise);
    }
    std::set<SubsetId> seen;
    for (auto s : cfg.subsets) {
        if (!seen.insert(s).second) bad_config("duplicate subset '" + std::string(to_string(s)) + "'");
    }
}

namespace {

using Json = nlohmann::json;

void reject_unknown(const Json& j, std::initializer_list<std::string_view> known, const std::string& where) {
    if (!j.is_object()) bad_config(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            bad_config("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        bad_config(std::string("bad value for '") + key + "'");
    }
}

template <typename T>
void read(const Json& j, const char* key, std::optional<T>& out) {
    if (!j.contains(key)) return;
    T value{};
    read(j, key, value);
    out = value;
}

void read_count(const Json& j, const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        bad_config(std::string("'") + key + "' must be a non-negative integer");
    }
    out = v.get<std::size_t>();
}

void read_count(const Json& j, const char* key, std::optional<std::size_t>& out) {
    if (!j.contains(key)) return;
    std::size_t v = 0;
    read_count(j, key, v);
    out = v;
}

SynthConfig synth_from_json(const Json& j) {
    reject_unknown(j,
                   {"n_models", "samples_per_model", "depreciation_rate_year", "depreciation_rate_hours",
                    "series_premiums", "location_premiums", "noise_sigma", "missing_hours_frac",
                    "duplicate_frac", "outlier_frac", "seed", "reference_year", "max_age_years"},
                   "dataset.synth");
    SynthConfig c;
    read_count(j, "n_models", c.n_models);
    read_count(j, "samples_per_model", c.samples_per_model);
    read(j, "depreciation_rate_year", c.depreciation_rate_year);
    read(j, "depreciation_rate_hours", c.depreciation_rate_hours);
    read(j, "series_premiums", c.series_premiums);
    read(j, "location_premiums", c.location_premiums);
    read(j, "noise_sigma", c.noise_sigma);
    read(j, "missing_hours_frac", c.missing_hours_frac);
    read(j, "duplicate_frac", c.duplicate_frac);
    read(j, "outlier_frac", c.outlier_frac);
    read(j, "seed", c.seed);
    read(j, "reference_year", c.reference_year);
    read_count(j, "max_age_years", c.max_age_years);
    validate(c);
    return c;
}

Json synth_to_json(const SynthConfig& c) {
    return {{"n_models", c.n_models},
            {"samples_per_model", c.samples_per_model},
            {"depreciation_rate_year", c.depreciation_rate_year},
            {"depreciation_rate_hours", c.depreciation_rate_hours},
            {"series_premiums", c.series_premiums},
            {"location_premiums", c.location_premiums},
            {"noise_sigma", c.noise_sigma},
            {"missing_hours_frac", c.missing_hours_frac},
            {"duplicate_frac", c.duplicate_frac},
            {"outlier_frac", c.outlier_frac},
            {"seed", c.seed},
            {"reference_year", c.reference_year},
            {"max_age_years", c.max_age_years}};
}

CleaningConfig cleaning_from_json(const Json& j) {
    reject_unknown(j, {"confidence", "default_lifetime_cap", "lifetime_caps", "min_group_size", "min_model_count"},
                   "dataset.cleaning");
    CleaningConfig c;
    read(j, "confidence", c.outliers.confidence);
    read(j, "default_lifetime_cap", c.outliers.default_lifetime_cap);
    read(j, "lifetime_caps", c.outliers.lifetime_caps);
    read_count(j, "min_group_size", c.outliers.min_group_size);
    read_count(j, "min_model_count", c.min_model_count);
    if (!(c.outliers.confidence > 0.0 && c.outliers.confidence < 1.0)) bad_config("confidence must lie in (0, 1)");
    return c;
}

MethodConfig method_from_json(const Json& j) {
    if (j.is_string()) return method_from_name(j.get<std::string>());
    reject_unknown(j,
                   {"name", "kind", "algorithm", "command", "n_iter", "k_folds", "budget_seconds",
                    "max_iterations", "timeout_seconds", "expertise"},
                   "method");
    std::string name;
    read(j, "name", name);
    if (name.empty()) bad_config("method object needs a name");
    MethodConfig m;
    if (j.contains("kind")) {
        m.name = name;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "manual") m.kind = MethodKind::manual;
        else if (kind == "automl_lite") m.kind = MethodKind::automl_lite;
        else if (kind == "external") m.kind = MethodKind::external;
        else bad_config("unknown method kind '" + kind + "'");
        if (m.kind == MethodKind::manual) {
            const auto alg = j.value("algorithm", name);
            try {
                m.algorithm = parse_algorithm(alg);
            } catch (const Error&) {
                bad_config("unknown algorithm '" + alg + "'");
            }
        }
    } else if (j.contains("command")) {
        m.name = name;
        m.kind = MethodKind::external;
    } else {
        m = method_from_name(j.contains("algorithm") ? j.at("algorithm").get<std::string>() : name);
        m.name = name;
    }
    read(j, "command", m.command);
    read_count(j, "n_iter", m.n_iter);
    read_count(j, "k_folds", m.k_folds);
    read(j, "budget_seconds", m.budget_seconds);
    read_count(j, "max_iterations", m.max_iterations);
    read(j, "timeout_seconds", m.timeout_seconds);
    read(j, "expertise", m.expertise);
    return m;
}

Json method_to_json(const MethodConfig& m) {
    Json j{{"name", m.name}, {"kind", std::string(to_string(m.kind))}};
    if (m.kind == MethodKind::manual) j["algorithm"] = std::string(to_string(m.algorithm));
    if (!m.command.empty()) j["command"] = m.command;
    if (m.n_iter) j["n_iter"] = *m.n_iter;
    if (m.k_folds) j["k_folds"] = *m.k_folds;
    if (m.budget_seconds) j["budget_seconds"] = *m.budget_seconds;
    if (m.max_iterations) j["max_iterations"] = *m.max_iterations;
    if (m.timeout_seconds) j["timeout_seconds"] = *m.timeout_seconds;
    if (m.expertise) j["expertise"] = *m.expertise;
    return j;
}

Weights weights_from_json(const Json& j) {
    if (j.is_string()) return parse_weights(j.get<std::string>());
    if (!j.is_object()) bad_config("weights must be a string or an object");
    std::string text;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) bad_config("weight '" + key + "' must be a number");
        if (!text.empty()) text += ",";
        text += key + "=" + csv::format_double(value.get<double>());
    }
    return parse_weights(text);
}

}  // namespace

BenchmarkConfig config_from_json(const Json& j, const std::filesystem::path& base_dir) {
    reject_unknown(j,
                   {"dataset", "methods", "subsets", "repetitions", "test_frac", "seed", "weights",
                    "budget_seconds", "search", "scoring", "alpha", "response_rows", "output_dir"},
                   "config");
    BenchmarkConfig cfg;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown(d, {"csv", "synth", "clean", "cleaning"}, "dataset");
        if (d.contains("csv") && d.contains("synth")) bad_config("dataset takes either csv or synth");
        if (d.contains("csv")) {
            std::filesystem::path p = d.at("csv").get<std::string>();
            cfg.data.csv = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        if (d.contains("synth")) cfg.data.synth = synth_from_json(d.at("synth"));
        read(d, "clean", cfg.data.clean);
        if (d.contains("cleaning")) cfg.data.cleaning = cleaning_from_json(d.at("cleaning"));
    }
    if (j.contains("methods")) {
        if (!j.at("methods").is_array()) bad_config("methods must be a list");
        for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_json(m));
    }
    if (j.contains("subsets")) {
        cfg.subsets.clear();
        for (const auto& s : j.at("subsets")) {
            try {
                cfg.subsets.push_back(parse_subset(s.get<std::string>()));
            } catch (const std::exception&) {
                bad_config("unknown subset " + s.dump());
            }
        }
    }
    read_count(j, "repetitions", cfg.repetitions);
    read(j, "test_frac", cfg.test_frac);
    read(j, "seed", cfg.seed);
    if (j.contains("weights")) cfg.weights = weights_from_json(j.at("weights"));
    read(j, "budget_seconds", cfg.budget_seconds);
    if (j.contains("search")) {
        const auto& s = j.at("search");
        reject_unknown(s, {"n_iter", "k_folds"}, "search");
        read_count(s, "n_iter", cfg.search.n_iter);
        read_count(s, "k_folds", cfg.search.k_folds);
    }
    if (j.contains("scoring")) {
        try {
            cfg.scoring = parse_error_kind(j.at("scoring").get<std::string>());
        } catch (const std::exception&) {
            bad_config("unknown scoring " + j.at("scoring").dump());
        }
    }
    read(j, "alpha", cfg.alpha);
    read_count(j, "response_rows", cfg.response_rows);
    if (j.contains("output_dir")) {
        std::filesystem::path p = j.at("output_dir").get<std::string>();
        cfg.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    return cfg;
}

BenchmarkConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        bad_config(path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

Json to_json(const BenchmarkConfig& cfg) {
    Json dataset{{"clean", cfg.data.clean},
                 {"cleaning",
                  {{"confidence", cfg.data.cleaning.outliers.confidence},
                   {"default_lifetime_cap", cfg.data.cleaning.outliers.default_lifetime_cap},
                   {"lifetime_caps", cfg.data.cleaning.outliers.lifetime_caps},
                   {"min_group_size", cfg.data.cleaning.outliers.min_group_size},
                   {"min_model_count", cfg.data.cleaning.min_model_count}}}};
    if (cfg.data.csv) dataset["csv"] = cfg.data.csv->string();
    else dataset["synth"] = synth_to_json(cfg.data.synth);

    Json methods = Json::array();
    for (const auto& m : cfg.methods) methods.push_back(method_to_json(m));
    Json subsets = Json::array();
    for (auto s : cfg.subsets) subsets.push_back(std::string(to_string(s)));
    return {{"dataset", dataset},
            {"methods", methods},
            {"subsets", subsets},
            {"repetitions", cfg.repetitions},
            {"test_frac", cfg.test_frac},
            {"seed", cfg.seed},
            {"weights", format_weights(cfg.weights)},
            {"budget_seconds", cfg.budget_seconds},
            {"search", {{"n_iter", cfg.search.n_iter}, {"k_folds", cfg.search.k_folds}}},
            {"scoring", std::string(to_string(cfg.scoring))},
            {"alpha", cfg.alpha},
            {"response_rows", cfg.response_rows},
            {"output_dir", cfg.output_dir.string()}};
}

// ---------------------------------------------------------------------------
// Running

Dataset load_dataset(const DatasetSource& source, std::uint64_t master_seed) {
    Dataset data;
    if (source.csv) {
        auto ingested = ingest_csv(*source.csv);
        data = std::move(ingested.dataset);
    } else {
        data = synth_generate(source.synth).dataset;
    }
    if (source.clean) {
        auto cleaning = source.cleaning;
        cleaning.impute_seed = derive_seed(master_seed, "impute");
        data = clean(data, cleaning).cleaned;
    }
    if (data.rows.empty()) throw Error(ErrorCode::EmptyTable, "no rows left after cleaning");
    return data;
}

std::size_t Bundle::failed_cells() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return c.status == CellStatus::failed; }));
}

namespace {

struct PreparedSubset {
    std::string name;
    FeatureTable train_table;
    FeatureTable test_table;
    std::vector<double> train_target;
    Matrix x_train;
    Matrix x_test;
    Vector y_train;
    Vector y_test;
};

Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> pick(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

PreparedSubset prepare(const Dataset& data, SubsetId id, const Split& split) {
    auto sd = make_subset(data, id);
    PreparedSubset p;
    p.name = std::string(to_string(id));
    p.train_table = sd.features.select_rows(split.train);
    p.test_table = sd.features.select_rows(split.test);
    p.train_target = pick(sd.target, split.train);
    // Encoding statistics come from the training rows only.
    const auto pre = Preprocessor::fit(p.train_table);
    p.x_train = pre.transform(p.train_table);
    p.x_test = pre.transform(p.test_table);
    p.y_train = to_vector(p.train_target);
    p.y_test = to_vector(pick(sd.target, split.test));
    return p;
}

struct RepetitionOutcome {
    RepetitionRecord record;
    std::vector<Trial> trials;
    std::vector<std::string> warnings;
    std::optional<int> reported_expertise;
};

ResponsivenessResult time_rows(const Matrix& x, std::size_t limit,
                               const std::function<void(const Matrix&)>& predict) {
    const auto n = std::min<std::size_t>(limit, static_cast<std::size_t>(x.rows()));
    std::vector<Matrix> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rows.emplace_back(x.row(static_cast<Eigen::Index>(i)));
    return measure_responsiveness(n, [&](std::size_t i) { predict(rows[i]); });
}

RepetitionOutcome run_repetition(const BenchmarkConfig& cfg, const MethodConfig& m, const PreparedSubset& s,
                                 std::uint64_t seed) {
    RepetitionOutcome out;
    switch (m.kind) {
        case MethodKind::manual: {
            auto sc = cfg.search;
            sc.seed = seed;
            sc.scoring = cfg.scoring;
            if (m.n_iter) sc.n_iter = *m.n_iter;
            if (m.k_folds) sc.k_folds = *m.k_folds;
            // Complexity covers the complete search, not only the final refit.
            auto tuned = measure_training([&] { return tune_and_fit(m.algorithm, s.x_train, s.y_train, sc); });
            const auto& model = tuned.value.model;
            out.record.complexity = tuned.seconds;
            out.record.correctness = regression_error(s.y_test, model.predict(s.x_test), cfg.scoring);
            out.record.response_seconds =
                time_rows(s.x_test, cfg.response_rows, [&](const Matrix& row) { (void)model.predict(row); })
                    .mean_seconds;
            out.trials = std::move(tuned.value.search.trials);
            break;
        }
        case MethodKind::automl_lite: {
            AutomlConfig ac;
            ac.budget_seconds = m.budget_seconds.value_or(cfg.budget_seconds);
            ac.max_iterations = m.max_iterations;
            ac.seed = seed;
            ac.scoring = cfg.scoring;
            auto fitted = measure_training([&] { return automl_fit(s.x_train, s.y_train, ac); });
            const auto& ensemble = fitted.value.ensemble;
            out.record.complexity = fitted.seconds;
            out.record.correctness = regression_error(s.y_test, ensemble.predict(s.x_test), cfg.scoring);
            out.record.response_seconds =
                time_rows(s.x_test, cfg.response_rows, [&](const Matrix& row) { (void)ensemble.predict(row); })
                    .mean_seconds;
            out.trials = std::move(fitted.value.trials);
            out.warnings = std::move(fitted.value.warnings);
            break;
        }
        case MethodKind::external: {
            const double budget = m.budget_seconds.value_or(cfg.budget_seconds);
            adapter::Session session(m.command, m.timeout_seconds.value_or(adapter::hard_timeout(budget)));
            out.reported_expertise = session.handshake().expertise_level;
            // Raw columns: external frameworks do their own preprocessing.
            const auto trained = measure_training(
                [&] { return session.train(s.train_table, s.train_target, kTargetName, budget, cfg.scoring); });
            out.record.complexity = trained.seconds;
            out.record.correctness = regression_error(s.y_test, session.predict(s.test_table), cfg.scoring);
            const auto n = std::min(cfg.response_rows, s.test_table.rows());
            out.record.response_seconds =
                measure_responsiveness(n, [&](std::size_t i) { (void)session.predict(s.test_table.row(i)); })
                    .mean_seconds;
            session.shutdown();
            break;
        }
    }
    return out;
}

int default_expertise(MethodKind kind) {
    return kind == MethodKind::manual ? kManualExpertise : kAutomatedExpertise;
}

}  // namespace

Bundle run_benchmark(const BenchmarkConfig& cfg, const Progress& progress) {
    validate(cfg);
    const Dataset data = load_dataset(cfg.data, cfg.seed);
    // One split for every subset and method.
    const Split split = holdout_split(data.rows.size(), cfg.test_frac, derive_seed(cfg.seed, "holdout"));

    std::vector<PreparedSubset> prepared;
    for (auto id : cfg.subsets) prepared.push_back(prepare(data, id, split));

    Bundle bundle;
    bundle.seed = cfg.seed;
    bundle.weights = cfg.weights;
    bundle.alpha = cfg.alpha;
    bundle.repetitions = cfg.repetitions;
    bundle.config = to_json(cfg);
    for (const auto& m : cfg.methods) bundle.methods.push_back(m.name);
    for (const auto& p : prepared) bundle.subsets.push_back(p.name);

    for (const auto& m : cfg.methods) {
        for (const auto& s : prepared) {
            CellResult cell;
            cell.method = m.name;
            cell.subset = s.name;
            std::vector<RepetitionRecord> reps;
            int expertise = m.expertise.value_or(default_expertise(m.kind));
            for (std::size_t r = 0; r < cfg.repetitions; ++r) {
                const auto seed = derive_seed(cfg.seed, m.name, s.name, r);
                try {
                    auto outcome = run_repetition(cfg, m, s, seed);
                    if (outcome.reported_expertise && !m.expertise) expertise = *outcome.reported_expertise;
                    reps.push_back(outcome.record);
                    for (auto& t : outcome.trials) cell.trials.push_back({r, std::move(t)});
                    for (auto& w : outcome.warnings) cell.warnings.push_back("repetition " + std::to_string(r) + ": " + w);
                    if (progress) {
                        progress(m.name + " / " + s.name + " / rep " + std::to_string(r) +
                                 ": error " + csv::format_double(outcome.record.correctness) + ", " +
                                 csv::format_double(outcome.record.complexity) + " s");
                    }
                } catch (const std::exception& e) {
                    cell.status = CellStatus::failed;
                    cell.reason = "repetition " + std::to_string(r) + ": " + e.what();
                    if (progress) progress(m.name + " / " + s.name + " failed: " + cell.reason);
                    break;
                }
            }
            if (cell.status == CellStatus::ok) {
                cell.record = summarize(m.name, s.name, expertise, std::move(reps));
            } else {
                cell.record = CriteriaRecord{};
                cell.record.method = m.name;
                cell.record.subset = s.name;
            }
            bundle.cells.push_back(std::move(cell));
        }
    }

    if (bundle.failed_cells() == bundle.cells.size()) {
        throw Error(ErrorCode::AllMethodsFailed, "every cell failed; first: " + bundle.cells.front().method + " / " +
                                                     bundle.cells.front().subset + ": " + bundle.cells.front().reason);
    }
    assemble(bundle);
    return bundle;
}

void assemble(Bundle& bundle) {
    bundle.reports.clear();
    bundle.summary.clear();
    for (const auto& subset : bundle.subsets) {
        std::vector<CriteriaRecord> records;
        for (const auto& c : bundle.cells) {
            if (c.subset == subset && c.status == CellStatus::ok) records.push_back(c.record);
        }
        if (!records.empty()) bundle.reports.push_back(build_report(subset, std::move(records), bundle.weights, bundle.alpha));
    }
    for (const auto& method : bundle.methods) {
        MethodSummary s;
        s.method = method;
        for (const auto& report : bundle.reports) {
            for (const auto& ms : report.methods) {
                if (ms.record.method != method) continue;
                ++s.subsets_scored;
                s.mean_mes += ms.mes_mean;
                s.mean_rank += static_cast<double>(ms.rank);
                s.mean_correctness += ms.record.s_corr;
            }
        }
        if (s.subsets_scored > 0) {
            const auto n = static_cast<double>(s.subsets_scored);
            s.mean_mes /= n;
            s.mean_rank /= n;
            s.mean_correctness /= n;
        }
        bundle.summary.push_back(s);
    }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

Json trial_to_json(const TrialRecord& t) {
    return {{"repetition", t.repetition},
            {"index", t.trial.index},
            {"spec", to_json(t.trial.spec)},
            {"score", t.trial.status == TrialStatus::ok ? Json(t.trial.score) : Json(nullptr)},
            {"status", std::string(to_string(t.trial.status))},
            {"message", t.trial.message},
            {"seconds", t.trial.seconds}};
}

TrialRecord trial_from_json(const Json& j) {
    TrialRecord t;
    t.repetition = j.at("repetition").get<std::size_t>();
    t.trial.index = j.at("index").get<std::size_t>();
    t.trial.spec = spec_from_json(j.at("spec"));
    t.trial.status = j.at("status").get<std::string>() == "ok" ? TrialStatus::ok : TrialStatus::failed;
    t.trial.score = j.at("score").is_null() ? std::nan("") : j.at("score").get<double>();
    t.trial.message = j.value("message", std::string());
    t.trial.seconds = j.value("seconds", 0.0);
    return t;
}

}  // namespace

Json to_json(const Bundle& bundle) {
    Json cells = Json::array();
    for (const auto& c : bundle.cells) {
        Json trials = Json::array();
        for (const auto& t : c.trials) trials.push_back(trial_to_json(t));
        cells.push_back({{"method", c.method},
                         {"subset", c.subset},
                         {"status", std::string(to_string(c.status))},
                         {"reason", c.reason},
                         {"record", c.status == CellStatus::ok ? to_json(c.record) : Json(nullptr)},
                         {"trials", trials},
                         {"warnings", c.warnings}});
    }
    Json reports = Json::array();
    for (const auto& r : bundle.reports) reports.push_back(to_json(r));
    Json summary = Json::array();
    for (const auto& s : bundle.summary) {
        summary.push_back({{"method", s.method},
                           {"subsets_scored", s.subsets_scored},
                           {"mean_mes", s.mean_mes},
                           {"mean_rank", s.mean_rank},
                           {"mean_correctness", s.mean_correctness}});
    }
    return {{"format", "mesbench-bundle"},
            {"version", 1},
            {"seed", bundle.seed},
            {"weights", format_weights(bundle.weights)},
            {"alpha", bundle.alpha},
            {"methods", bundle.methods},
            {"subsets", bundle.subsets},
            {"repetitions", bundle.repetitions},
            {"config", bundle.config},
            {"cells", cells},
            {"reports", reports},
            {"summary", summary}};
}

Bundle bundle_from_json(const Json& j) {
    try {
        if (j.value("format", std::string()) != "mesbench-bundle") bad_config("not a mesbench bundle");
        if (j.at("version").get<int>() != 1) bad_config("unsupported bundle version");
        Bundle b;
        b.seed = j.at("seed").get<std::uint64_t>();
        b.weights = parse_weights(j.at("weights").get<std::string>());
        b.alpha = j.at("alpha").get<double>();
        b.methods = j.at("methods").get<std::vector<std::string>>();
        b.subsets = j.at("subsets").get<std::vector<std::string>>();
        b.repetitions = j.at("repetitions").get<std::size_t>();
        b.config = j.value("config", Json());
        for (const auto& c : j.at("cells")) {
            CellResult cell;
            cell.method = c.at("method").get<std::string>();
            cell.subset = c.at("subset").get<std::string>();
            cell.status = c.at("status").get<std::string>() == "ok" ? CellStatus::ok : CellStatus::failed;
            cell.reason = c.value("reason", std::string());
            if (cell.status == CellStatus::ok) {
                cell.record = criteria_record_from_json(c.at("record"));
            } else {
                cell.record.method = cell.method;
                cell.record.subset = cell.subset;
            }
            for (const auto& t : c.at("trials")) cell.trials.push_back(trial_from_json(t));
            cell.warnings = c.value("warnings", std::vector<std::string>());
            b.cells.push_back(std::move(cell));
        }
        assemble(b);
        return b;
    } catch (const nlohmann::json::exception& e) {
        bad_config(std::string("malformed bundle: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Report files

namespace {

const MethodScore* find_score(const Bundle& bundle, const std::string& subset, const std::string& method) {
    for (const auto& r : bundle.reports) {
        if (r.subset != subset) continue;
        for (const auto& m : r.methods) {
            if (m.record.method == method) return &m;
        }
    }
    return nullptr;
}

double sample_std(const std::vector<double>& v) { return v.size() >= 2 ? reproducibility(v) : 0.0; }

const char* kCriteriaColumns[] = {"subset",         "method",          "status",     "reason",
                                  "correctness",    "correctness_std", "complexity", "complexity_std",
                                  "expertise",      "responsiveness",  "responsiveness_seconds",
                                  "reproducibility", "mes",            "mes_std",    "rank"};

}  // namespace

void write_criteria_table(std::ostream& out, const Bundle& bundle) {
    csv::write_row(out, std::vector<std::string>(std::begin(kCriteriaColumns), std::end(kCriteriaColumns)));
    for (const auto& subset : bundle.subsets) {
        std::vector<const CellResult*> ok;
        std::vector<const CellResult*> failed;
        for (const auto& c : bundle.cells) {
            if (c.subset != subset) continue;
            (c.status == CellStatus::ok ? ok : failed).push_back(&c);
        }
        std::stable_sort(ok.begin(), ok.end(), [&](const CellResult* a, const CellResult* b) {
            return find_score(bundle, subset, a->method)->rank < find_score(bundle, subset, b->method)->rank;
        });
        for (const auto* c : ok) {
            const auto* m = find_score(bundle, subset, c->method);
            const auto& r = c->record;
            std::vector<double> comp;
            for (const auto& rep : r.repetitions) comp.push_back(rep.complexity);
            csv::write_row(out, {subset, c->method, "ok", "", csv::format_double(r.s_corr),
                                 csv::format_double(r.s_repr), csv::format_double(r.s_comp),
                                 csv::format_double(sample_std(comp)), std::to_string(r.s_exp),
                                 std::string(to_string(r.s_resp)), csv::format_double(r.s_resp_seconds),
                                 csv::format_double(r.s_repr), csv::format_double(m->mes_mean),
                                 csv::format_double(m->mes_std), std::to_string(m->rank)});
        }
        for (const auto* c : failed) {
            std::vector<std::string> row(std::size(kCriteriaColumns));
            row[0] = subset;
            row[1] = c->method;
            row[2] = "failed";
            row[3] = c->reason;
            csv::write_row(out, row);
        }
    }
}

void write_plotdata(std::ostream& out, const Bundle& bundle) {
    csv::write_row(out, {"method", "subset", "repetition", "criterion", "value", "status"});
    for (const auto& c : bundle.cells) {
        const bool ok = c.status == CellStatus::ok;
        const auto* score = ok ? find_score(bundle, c.subset, c.method) : nullptr;
        for (std::size_t r = 0; r < bundle.repetitions; ++r) {
            const RepetitionRecord* rep = ok && r < c.record.repetitions.size() ? &c.record.repetitions[r] : nullptr;
            const std::pair<const char*, std::optional<double>> values[] = {
                {"correctness", rep ? std::optional(rep->correctness) : std::nullopt},
                {"complexity", rep ? std::optional(rep->complexity) : std::nullopt},
                {"responsiveness", rep ? std::optional(rep->response_seconds) : std::nullopt},
                {"mes", score && r < score->mes_per_repetition.size() ? std::optional(score->mes_per_repetition[r])
                                                                      : std::nullopt},
            };
            for (const auto& [name, value] : values) {
                csv::write_row(out, {c.method, c.subset, std::to_string(r), name,
                                     value ? csv::format_double(*value) : "", ok ? "ok" : "failed"});
            }
        }
    }
}

void write_trials(std::ostream& out, const Bundle& bundle) {
    csv::write_row(out, {"method", "subset", "repetition", "trial_index", "algorithm", "spec", "score", "status",
                         "seconds", "message"});
    for (const auto& c : bundle.cells) {
        for (const auto& [rep, t] : c.trials) {
            csv::write_row(out, {c.method, c.subset, std::to_string(rep), std::to_string(t.index),
                                 std::string(to_string(t.spec.algorithm)), t.spec.flat_pairs(),
                                 t.status == TrialStatus::ok ? csv::format_double(t.score) : "",
                                 std::string(to_string(t.status)), csv::format_double(t.seconds), t.message});
        }
    }
}

std::vector<CriteriaRecord> read_criteria_table(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::EmptyTable, "criteria table is empty");
    const auto header = csv::split_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"subset", "method", "correctness", "complexity", "expertise", "responsiveness"}) {
        if (!col.count(required)) throw Error(ErrorCode::MissingColumn, std::string("criteria table lacks ") + required);
    }
    std::vector<CriteriaRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split_line(line);
        auto get = [&](const char* name) -> std::string {
            const auto it = col.find(name);
            return it != col.end() && it->second < f.size() ? f[it->second] : std::string();
        };
        if (col.count("status") && get("status") != "ok") continue;
        try {
            CriteriaRecord r;
            r.subset = get("subset");
            r.method = get("method");
            r.s_corr = std::stod(get("correctness"));
            r.s_comp = std::stod(get("complexity"));
            r.s_exp = std::stoi(get("expertise"));
            r.s_resp = parse_responsiveness(get("responsiveness"));
            const auto resp_seconds = get("responsiveness_seconds");
            r.s_resp_seconds = resp_seconds.empty() ? 0.0 : std::stod(resp_seconds);
            const auto repr = get("reproducibility");
            r.s_repr = repr.empty() ? 0.0 : std::stod(repr);
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw Error(ErrorCode::InvalidConfig, "criteria table line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::filesystem::path> emit_report(const Bundle& bundle, const std::set<ReportFormat>& formats,
                                               const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

    std::vector<std::filesystem::path> written;
    auto emit = [&](const char* file, const std::function<void(std::ostream&)>& body) {
        const auto path = dir / file;
        std::ofstream out(path);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
        body(out);
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
        written.push_back(path);
    };
    if (formats.count(ReportFormat::json)) emit("bundle.json", [&](std::ostream& o) { o << to_json(bundle).dump(2) << '\n'; });
    if (formats.count(ReportFormat::csv)) emit("criteria.csv", [&](std::ostream& o) { write_criteria_table(o, bundle); });
    if (formats.count(ReportFormat::plotdata)) emit("plotdata.csv", [&](std::ostream& o) { write_plotdata(o, bundle); });
    if (formats.count(ReportFormat::trials)) emit("trials.csv", [&](std::ostream& o) { write_trials(o, bundle); });
    return written;
}

}  // namespace mesbench
