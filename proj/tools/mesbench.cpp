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

// mesbench command line: synth, clean, bench, score, report.
//
// Exit codes: 0 success, 2 partial failure (failed cells or skipped rows),
// 1 fatal error.

#include "mesbench/csv.hpp"
#include "mesbench/harness.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <map>

using namespace mesbench;

namespace {

constexpr int kOk = 0;
constexpr int kFatal = 1;
constexpr int kPartial = 2;

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        if (comma > start) out.push_back(text.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

std::set<ReportFormat> parse_formats(const std::string& text) {
    std::set<ReportFormat> out;
    for (const auto& f : split_list(text)) out.insert(parse_report_format(f));
    if (out.empty()) throw Error(ErrorCode::InvalidConfig, "no report formats selected");
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    return out;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::size_t models = 10;
    std::size_t per_model = 300;
    std::uint64_t seed = 1;
    double duplicate_frac = 0.1;
    double outlier_frac = 0.05;
    double missing_frac = 0.1;
    std::string out;
    std::string labels;
};

int run_synth(const SynthArgs& a) {
    SynthConfig cfg;
    cfg.n_models = a.models;
    cfg.samples_per_model = a.per_model;
    cfg.seed = a.seed;
    cfg.duplicate_frac = a.duplicate_frac;
    cfg.outlier_frac = a.outlier_frac;
    cfg.missing_hours_frac = a.missing_frac;
    const auto result = synth_generate(cfg);
    if (a.out.empty()) {
        write_csv(result.dataset, std::cout);
    } else {
        write_csv(result.dataset, std::filesystem::path(a.out));
    }
    if (!a.labels.empty()) {
        auto out = open_out(a.labels);
        csv::write_row(out, {"row", "source_id", "duplicate", "duplicate_of", "price_outlier", "missing_hours"});
        for (std::size_t i = 0; i < result.labels.size(); ++i) {
            const auto& l = result.labels[i];
            csv::write_row(out, {std::to_string(i), result.dataset.rows[i].source_id, l.duplicate ? "1" : "0",
                                 l.duplicate_of ? std::to_string(*l.duplicate_of) : "", l.price_outlier ? "1" : "0",
                                 l.missing_hours ? "1" : "0"});
        }
    }
    std::cerr << "wrote " << result.dataset.rows.size() << " rows\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct CleanArgs {
    std::string input;
    std::string out;
    std::string rejections;
    std::uint64_t seed = 0;
    double confidence = 0.99;
    double lifetime_cap = 60000.0;
    std::size_t min_model_count = 150;
};

int run_clean(const CleanArgs& a) {
    auto ingested = ingest_csv(std::filesystem::path(a.input));
    for (const auto& e : ingested.errors) {
        std::cerr << a.input << ":" << e.line << ": " << e.column << ": " << e.reason << "\n";
    }
    CleaningConfig cfg;
    cfg.outliers.confidence = a.confidence;
    cfg.outliers.default_lifetime_cap = a.lifetime_cap;
    cfg.min_model_count = a.min_model_count;
    cfg.impute_seed = derive_seed(a.seed, "impute");
    const auto report = clean(ingested.dataset, cfg);

    if (a.out.empty()) {
        write_csv(report.cleaned, std::cout);
    } else {
        write_csv(report.cleaned, std::filesystem::path(a.out));
    }
    if (!a.rejections.empty()) {
        auto out = open_out(a.rejections);
        csv::write_row(out, {"source_id", "model", "reason"});
        for (const auto& r : report.rejected) {
            csv::write_row(out, {r.listing.source_id, r.listing.model, std::string(to_string(r.reason))});
        }
    }
    std::cerr << "read " << ingested.dataset.rows.size() << " rows (" << ingested.errors.size()
              << " unparseable), removed " << report.duplicates_removed << " duplicates, "
              << report.rejected.size() << " outliers, " << report.rare_removed << " rare-model rows; imputed "
              << report.imputed << " working hours; kept " << report.cleaned.rows.size() << "\n";
    return ingested.errors.empty() ? kOk : kPartial;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string config;
    std::string data;
    std::string methods;
    std::string subsets;
    std::optional<std::uint64_t> seed;
    std::optional<double> budget;
    std::string weights;
    std::optional<std::size_t> repetitions;
    std::optional<std::size_t> n_iter;
    std::optional<std::size_t> k_folds;
    std::optional<std::size_t> max_iterations;
    std::string out;
    std::string formats = "json,csv,plotdata,trials";
    bool quiet = false;
};

void print_summary(const Bundle& bundle) {
    for (const auto& report : bundle.reports) {
        std::cout << report.subset << "\n";
        for (auto i : report.ranking) {
            const auto& m = report.methods[i];
            std::cout << "  " << m.rank << ". " << m.record.method << "  error " << csv::format_double(m.record.s_corr)
                      << "  train " << csv::format_double(m.record.s_comp) << " s  MES "
                      << csv::format_double(m.mes_mean) << " +- " << csv::format_double(m.mes_std) << "\n";
        }
    }
    for (const auto& c : bundle.cells) {
        if (c.status == CellStatus::failed) std::cout << "FAILED " << c.method << " / " << c.subset << ": " << c.reason << "\n";
    }
}

int run_bench(const BenchArgs& a) {
    BenchmarkConfig cfg = a.config.empty() ? BenchmarkConfig{} : load_config(a.config);
    if (!a.data.empty()) cfg.data.csv = a.data;
    if (!a.methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : split_list(a.methods)) cfg.methods.push_back(method_from_name(m));
    }
    if (cfg.methods.empty()) {
        for (auto alg : kAllAlgorithms) cfg.methods.push_back(method_from_name(to_string(alg)));
        cfg.methods.push_back(method_from_name("automl_lite"));
    }
    if (!a.subsets.empty()) {
        cfg.subsets.clear();
        for (const auto& s : split_list(a.subsets)) cfg.subsets.push_back(parse_subset(s));
    }
    if (a.seed) cfg.seed = *a.seed;
    if (a.budget) {
        cfg.budget_seconds = *a.budget;
        for (auto& m : cfg.methods) m.budget_seconds.reset();
    }
    if (!a.weights.empty()) cfg.weights = parse_weights(a.weights);
    if (a.repetitions) cfg.repetitions = *a.repetitions;
    if (a.n_iter) cfg.search.n_iter = *a.n_iter;
    if (a.k_folds) cfg.search.k_folds = *a.k_folds;
    if (a.max_iterations) {
        for (auto& m : cfg.methods) {
            if (m.kind == MethodKind::automl_lite) m.max_iterations = *a.max_iterations;
        }
    }
    if (!a.out.empty()) cfg.output_dir = a.out;
    const auto formats = parse_formats(a.formats);

    Progress progress;
    if (!a.quiet) progress = [](const std::string& line) { std::cerr << line << "\n"; };
    const auto bundle = run_benchmark(cfg, progress);
    for (const auto& path : emit_report(bundle, formats, cfg.output_dir)) std::cerr << "wrote " << path.string() << "\n";
    print_summary(bundle);
    return bundle.failed_cells() > 0 ? kPartial : kOk;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
    std::string input;
    std::string weights;
    double alpha = 0.05;
    std::string out;
};

int run_score(const ScoreArgs& a) {
    const auto weights = a.weights.empty() ? Weights{} : parse_weights(a.weights);
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!a.out.empty()) {
        file = open_out(a.out);
        out = &file;
    }
    if (std::filesystem::path(a.input).extension() == ".json") {
        // Per-repetition records: MES is recomputed per repetition.
        auto bundle = bundle_from_json(read_json(a.input));
        bundle.weights = weights;
        bundle.alpha = a.alpha;
        assemble(bundle);
        write_criteria_table(*out, bundle);
        return bundle.failed_cells() > 0 ? kPartial : kOk;
    }
    std::ifstream in(a.input);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + a.input);
    const auto records = read_criteria_table(in);
    if (records.empty()) throw Error(ErrorCode::EmptyTable, "no complete rows in " + a.input);
    std::vector<std::string> order;
    std::map<std::string, std::vector<CriteriaRecord>> by_subset;
    for (const auto& r : records) {
        if (!by_subset.count(r.subset)) order.push_back(r.subset);
        by_subset[r.subset].push_back(r);
    }
    write_mes_csv_header(*out);
    for (const auto& subset : order) write_mes_csv_rows(*out, build_report(subset, by_subset[subset], weights, a.alpha));
    return kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string bundle;
    std::string out = "mesbench-out";
    std::string formats = "json,csv,plotdata,trials";
    std::string weights;
};

int run_report(const ReportArgs& a) {
    auto bundle = bundle_from_json(read_json(a.bundle));
    if (!a.weights.empty()) {
        bundle.weights = parse_weights(a.weights);
        assemble(bundle);
    }
    for (const auto& path : emit_report(bundle, parse_formats(a.formats), a.out)) {
        std::cerr << "wrote " << path.string() << "\n";
    }
    return bundle.failed_cells() > 0 ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark manual and automated regression pipelines and score them with MES"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic listings CSV");
    s->add_option("--models", synth.models, "number of machine models")->check(CLI::PositiveNumber);
    s->add_option("--per-model", synth.per_model, "rows per model before injections")->check(CLI::PositiveNumber);
    s->add_option("--seed", synth.seed, "generator seed");
    s->add_option("--duplicate-frac", synth.duplicate_frac, "fraction of injected duplicates");
    s->add_option("--outlier-frac", synth.outlier_frac, "fraction of injected 10x price outliers");
    s->add_option("--missing-frac", synth.missing_frac, "fraction of rows without working hours");
    s->add_option("-o,--out", synth.out, "output CSV (default: stdout)");
    s->add_option("--labels", synth.labels, "write injection labels to this CSV");

    CleanArgs cleaning;
    auto* c = app.add_subcommand("clean", "deduplicate, filter outliers, impute and drop rare models");
    c->add_option("input", cleaning.input, "listings CSV")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", cleaning.out, "cleaned CSV (default: stdout)");
    c->add_option("--rejections", cleaning.rejections, "write rejected rows with reasons to this CSV");
    c->add_option("--seed", cleaning.seed, "master seed for imputation noise");
    c->add_option("--confidence", cleaning.confidence, "outlier confidence level")->check(CLI::Range(0.5, 0.999999));
    c->add_option("--lifetime-cap", cleaning.lifetime_cap, "default working-hours cap");
    c->add_option("--min-model-count", cleaning.min_model_count, "keep models with more rows than this");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "run the benchmark and write the report bundle");
    b->add_option("--config", bench.config, "JSON config file")->check(CLI::ExistingFile);
    b->add_option("--data", bench.data, "listings CSV (default: synthetic data)")->check(CLI::ExistingFile);
    b->add_option("--methods", bench.methods, "comma list, e.g. forest,knn,automl_lite");
    b->add_option("--subsets", bench.subsets, "comma list of basic,basic_series,basic_location,full");
    b->add_option("--seed", bench.seed, "master seed");
    b->add_option("--budget", bench.budget, "budget in seconds for automated methods")->check(CLI::PositiveNumber);
    b->add_option("--weights", bench.weights, "criteria weights, e.g. corr=50,exp=40,comp=10");
    b->add_option("--repetitions", bench.repetitions, "repetitions per cell")->check(CLI::PositiveNumber);
    b->add_option("--n-iter", bench.n_iter, "random-search trials for manual methods")->check(CLI::PositiveNumber);
    b->add_option("--k-folds", bench.k_folds, "cross-validation folds")->check(CLI::Range(2, 1000));
    b->add_option("--max-iterations", bench.max_iterations, "run automl_lite for a fixed trial count")
        ->check(CLI::PositiveNumber);
    b->add_option("--out", bench.out, "output directory");
    b->add_option("--formats", bench.formats, "comma list of json,csv,plotdata,trials");
    b->add_flag("-q,--quiet", bench.quiet, "no progress output");

    ScoreArgs score;
    auto* sc = app.add_subcommand("score", "recompute MES from a bundle.json or criteria CSV");
    sc->add_option("input", score.input, "bundle.json or criteria CSV")->required()->check(CLI::ExistingFile);
    sc->add_option("--weights", score.weights, "criteria weights, e.g. corr=50,exp=40,comp=10");
    sc->add_option("--alpha", score.alpha, "t-test significance level")->check(CLI::Range(1e-9, 0.999999));
    sc->add_option("-o,--out", score.out, "output CSV (default: stdout)");

    ReportArgs report;
    auto* r = app.add_subcommand("report", "re-emit report files from a bundle.json");
    r->add_option("bundle", report.bundle, "bundle.json")->required()->check(CLI::ExistingFile);
    r->add_option("--out", report.out, "output directory");
    r->add_option("--formats", report.formats, "comma list of json,csv,plotdata,trials");
    r->add_option("--weights", report.weights, "rescore with these weights");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kFatal;
    }

    try {
        if (*s) return run_synth(synth);
        if (*c) return run_clean(cleaning);
        if (*b) return run_bench(bench);
        if (*sc) return run_score(score);
        if (*r) return run_report(report);
    } catch (const std::exception& e) {
        std::cerr << "mesbench: error: " << e.what() << "\n";
        return kFatal;
    }
    return kFatal;
}
