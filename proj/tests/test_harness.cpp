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
#include "mesbench/harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace mesbench;

namespace {

BenchmarkConfig small_config() {
    BenchmarkConfig cfg;
    cfg.data.synth.n_models = 3;
    cfg.data.synth.samples_per_model = 40;
    cfg.data.cleaning.min_model_count = 10;
    cfg.search.n_iter = 2;
    cfg.search.k_folds = 3;
    cfg.seed = 11;
    return cfg;
}

std::size_t data_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n - 1;
}

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("two methods on four subsets with five repetitions") {
    auto cfg = small_config();
    cfg.methods = {method_from_name("knn"), method_from_name("tree")};
    std::size_t progress_lines = 0;
    const auto bundle = run_benchmark(cfg, [&](const std::string&) { ++progress_lines; });

    CHECK(bundle.cells.size() == 8);
    std::size_t cycles = 0;
    for (const auto& c : bundle.cells) {
        CHECK(c.status == CellStatus::ok);
        cycles += c.record.repetitions.size();
        CHECK(c.trials.size() == 5 * 2);
    }
    CHECK(cycles == 40);
    CHECK(progress_lines == 40);
    CHECK(bundle.reports.size() == 4);
    CHECK(bundle.summary.size() == 2);

    std::ostringstream table, plot, trials;
    write_criteria_table(table, bundle);
    write_plotdata(plot, bundle);
    write_trials(trials, bundle);
    CHECK(data_lines(table.str()) == 8);
    CHECK(data_lines(plot.str()) == 2 * 4 * 5 * kPlotCriteria);
    CHECK(data_lines(trials.str()) == 8 * 5 * 2);
}

TEST_CASE("cells are method-major and expertise follows the method kind") {
    auto cfg = small_config();
    cfg.repetitions = 2;
    cfg.subsets = {SubsetId::basic, SubsetId::full};
    auto automl = method_from_name("automl_lite");
    automl.max_iterations = 3;
    cfg.methods = {method_from_name("knn"), automl};
    const auto bundle = run_benchmark(cfg);
    REQUIRE(bundle.cells.size() == 4);
    CHECK(bundle.cells[0].method == "knn");
    CHECK(bundle.cells[0].subset == "basic");
    CHECK(bundle.cells[1].subset == "full");
    CHECK(bundle.cells[2].method == "automl_lite");
    CHECK(bundle.cells[0].record.s_exp == kManualExpertise);
    CHECK(bundle.cells[2].record.s_exp == kAutomatedExpertise);
    CHECK(bundle.cells[2].trials.size() == 2 * 3);
}

TEST_CASE("iteration-budget runs repeat exactly") {
    auto cfg = small_config();
    cfg.repetitions = 2;
    cfg.subsets = {SubsetId::basic_series};
    auto automl = method_from_name("automl_lite");
    automl.max_iterations = 4;
    cfg.methods = {method_from_name("forest"), automl};
    const auto a = run_benchmark(cfg);
    const auto b = run_benchmark(cfg);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const auto& ra = a.cells[i].record.repetitions;
        const auto& rb = b.cells[i].record.repetitions;
        REQUIRE(ra.size() == rb.size());
        for (std::size_t r = 0; r < ra.size(); ++r) CHECK(ra[r].correctness == rb[r].correctness);
        REQUIRE(a.cells[i].trials.size() == b.cells[i].trials.size());
        for (std::size_t t = 0; t < a.cells[i].trials.size(); ++t) {
            const auto& ta = a.cells[i].trials[t].trial;
            const auto& tb = b.cells[i].trials[t].trial;
            CHECK(ta.spec == tb.spec);
            CHECK((ta.score == tb.score || (std::isnan(ta.score) && std::isnan(tb.score))));
        }
    }
    // Repetitions use distinct seeds, so their trial draws differ.
    const auto& forest = a.cells[0].trials;
    bool differ = false;
    for (std::size_t t = 0; t < 2; ++t) differ |= !(forest[t].trial.spec == forest[t + 2].trial.spec);
    CHECK(differ);

    cfg.seed += 1;
    const auto c = run_benchmark(cfg);
    CHECK(c.cells[0].record.repetitions[0].correctness != a.cells[0].record.repetitions[0].correctness);
}

TEST_CASE("failed cells are emitted with status and reason") {
    auto cfg = small_config();
    cfg.repetitions = 3;
    cfg.subsets = {SubsetId::basic, SubsetId::full};
    MethodConfig broken;
    broken.name = "broken";
    broken.kind = MethodKind::external;
    broken.command = {"/nonexistent/adapter"};
    cfg.methods = {method_from_name("knn"), broken};
    const auto bundle = run_benchmark(cfg);
    CHECK(bundle.failed_cells() == 2);

    std::ostringstream table, plot;
    write_criteria_table(table, bundle);
    write_plotdata(plot, bundle);
    CHECK(data_lines(table.str()) == 4);
    CHECK(data_lines(plot.str()) == 2 * 2 * 3 * kPlotCriteria);

    std::istringstream rows(table.str());
    std::string line;
    std::getline(rows, line);
    std::size_t failed = 0;
    while (std::getline(rows, line)) {
        const auto f = csv::split_line(line);
        REQUIRE(f.size() == 15);
        if (f[1] != "broken") continue;
        ++failed;
        CHECK(f[2] == "failed");
        CHECK(f[3].find("AdapterError") != std::string::npos);
        for (std::size_t i = 4; i < f.size(); ++i) CHECK(f[i].empty());
    }
    CHECK(failed == 2);

    std::istringstream plot_rows(plot.str());
    std::getline(plot_rows, line);
    while (std::getline(plot_rows, line)) {
        const auto f = csv::split_line(line);
        if (f[0] == "broken") {
            CHECK(f[4].empty());
            CHECK(f[5] == "failed");
        } else {
            CHECK_FALSE(f[4].empty());
            CHECK(f[5] == "ok");
        }
    }

    cfg.methods = {broken};
    CHECK(code_of([&] { run_benchmark(cfg); }) == ErrorCode::AllMethodsFailed);
}

TEST_CASE("bundle json round trip and report emission") {
    auto cfg = small_config();
    cfg.repetitions = 2;
    cfg.subsets = {SubsetId::basic, SubsetId::basic_location};
    cfg.methods = {method_from_name("knn"), method_from_name("poly")};
    const auto bundle = run_benchmark(cfg);
    const auto json = to_json(bundle);
    const auto back = bundle_from_json(nlohmann::json::parse(json.dump()));
    CHECK(to_json(back) == json);

    const auto dir = std::filesystem::temp_directory_path() / ("mesbench_report_" + std::to_string(::getpid()));
    const auto files = emit_report(bundle, kAllFormats, dir);
    CHECK(files.size() == 4);
    for (const auto& f : files) CHECK(std::filesystem::file_size(f) > 0);
    const auto only_json = emit_report(bundle, {ReportFormat::json}, dir / "json");
    CHECK(only_json.size() == 1);
    std::filesystem::remove_all(dir);

    std::ostringstream table;
    write_criteria_table(table, bundle);
    std::istringstream in(table.str());
    const auto records = read_criteria_table(in);
    REQUIRE(records.size() == 4);
    for (const auto& r : records) {
        const CellResult* cell = nullptr;
        for (const auto& c : bundle.cells) {
            if (c.method == r.method && c.subset == r.subset) cell = &c;
        }
        REQUIRE(cell != nullptr);
        CHECK(r.s_corr == cell->record.s_corr);
        CHECK(r.s_comp == cell->record.s_comp);
        CHECK(r.s_exp == cell->record.s_exp);
        CHECK(r.s_resp == cell->record.s_resp);
        CHECK(r.s_repr == cell->record.s_repr);
    }
}

TEST_CASE("config schema") {
    const auto j = nlohmann::json::parse(R"({
        "dataset": {"synth": {"n_models": 4, "samples_per_model": 50, "seed": 3},
                    "cleaning": {"min_model_count": 20, "lifetime_caps": {"M01": 30000}}},
        "methods": ["forest", {"name": "automl_lite", "max_iterations": 30, "budget_seconds": 30},
                    {"name": "flaml", "command": ["python3", "adapter.py", "--stub"], "timeout_seconds": 5},
                    {"name": "svr_fast", "algorithm": "svr", "n_iter": 5}],
        "subsets": ["basic", "full"],
        "repetitions": 3,
        "seed": 42,
        "weights": {"corr": 50, "exp": 40, "comp": 10},
        "budget_seconds": 300,
        "search": {"n_iter": 6, "k_folds": 3},
        "output_dir": "out"
    })");
    const auto cfg = config_from_json(j, "/base");
    validate(cfg);
    CHECK(cfg.data.synth.n_models == 4);
    CHECK(cfg.data.synth.seed == 3);
    CHECK(cfg.data.cleaning.min_model_count == 20);
    CHECK(cfg.data.cleaning.outliers.lifetime_caps.at("M01") == 30000.0);
    REQUIRE(cfg.methods.size() == 4);
    CHECK(cfg.methods[0].kind == MethodKind::manual);
    CHECK(cfg.methods[0].algorithm == Algorithm::forest);
    CHECK(cfg.methods[1].kind == MethodKind::automl_lite);
    CHECK(cfg.methods[1].max_iterations == 30u);
    CHECK(cfg.methods[2].kind == MethodKind::external);
    CHECK(cfg.methods[2].command.size() == 3);
    CHECK(cfg.methods[3].algorithm == Algorithm::svr);
    CHECK(cfg.methods[3].n_iter == 5u);
    CHECK(cfg.subsets == std::vector<SubsetId>{SubsetId::basic, SubsetId::full});
    CHECK(cfg.repetitions == 3);
    CHECK(cfg.seed == 42);
    CHECK(cfg.weights == parse_weights("corr=50,exp=40,comp=10"));
    CHECK(cfg.budget_seconds == 300.0);
    CHECK(cfg.search.k_folds == 3);
    CHECK(cfg.output_dir == std::filesystem::path("/base/out"));

    const auto again = config_from_json(to_json(cfg));
    CHECK(to_json(again) == to_json(cfg));

    const auto defaults = config_from_json(nlohmann::json::object());
    CHECK(defaults.repetitions == 5);
    CHECK(defaults.test_frac == 0.1);
    CHECK(defaults.budget_seconds == 1800.0);
    CHECK(defaults.subsets.size() == 4);
    CHECK(code_of([&] { validate(defaults); }) == ErrorCode::InvalidConfig);

    CHECK(code_of([] { config_from_json(nlohmann::json::parse(R"({"repetitons": 3})")); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config_from_json(nlohmann::json::parse(R"({"methods": ["gbm"]})")); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config_from_json(nlohmann::json::parse(R"({"subsets": ["everything"]})")); }) ==
          ErrorCode::InvalidConfig);
    CHECK(code_of([] {
              validate(config_from_json(nlohmann::json::parse(R"({"methods": ["knn", "knn"]})")));
          }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] {
              validate(config_from_json(nlohmann::json::parse(R"({"methods": ["knn"], "repetitions": 0})")));
          }) == ErrorCode::InvalidConfig);
}
