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

#include "mesbench/dataset.hpp"
#include "mesbench/mes.hpp"
#include "mesbench/search.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mesbench {

enum class MethodKind { manual, automl_lite, external };
std::string_view to_string(MethodKind kind) noexcept;

/// One benchmarked method. Unset optionals fall back to the benchmark-wide
/// values.
struct MethodConfig {
    std::string name;
    MethodKind kind = MethodKind::manual;
    Algorithm algorithm = Algorithm::forest;     ///< manual only
    std::vector<std::string> command;            ///< external only
    std::optional<std::size_t> n_iter;           ///< manual only
    std::optional<std::size_t> k_folds;          ///< manual only
    std::optional<double> budget_seconds;        ///< automated only
    std::optional<std::size_t> max_iterations;   ///< automl_lite only
    std::optional<double> timeout_seconds;       ///< external only
    std::optional<int> expertise;                ///< overrides the default level
};

struct DatasetSource {
    std::optional<std::filesystem::path> csv;  ///< synthetic data when unset
    SynthConfig synth;
    bool clean = true;
    CleaningConfig cleaning;
};

struct BenchmarkConfig {
    DatasetSource data;
    std::vector<MethodConfig> methods;
    std::vector<SubsetId> subsets{std::begin(kAllSubsets), std::end(kAllSubsets)};
    std::size_t repetitions = 5;
    double test_frac = 0.1;
    std::uint64_t seed = 0;
    Weights weights;
    double budget_seconds = 1800.0;
    SearchConfig search;  ///< its seed is ignored; repetitions derive their own
    ErrorKind scoring = ErrorKind::mape;
    double alpha = 0.05;
    /// Test rows timed one by one for responsiveness (all when larger).
    std::size_t response_rows = 100;
    std::filesystem::path output_dir = "mesbench-out";
};

/// Throws InvalidConfig.
void validate(const BenchmarkConfig& cfg);

/// Reads the JSON config schema described in README.md. Unknown keys are
/// rejected.
BenchmarkConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
BenchmarkConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const BenchmarkConfig& cfg);

/// "forest", "knn", "automl_lite", ...
MethodConfig method_from_name(std::string_view name);

enum class CellStatus { ok, failed };
std::string_view to_string(CellStatus s) noexcept;

struct TrialRecord {
    std::size_t repetition = 0;
    Trial trial;
};

/// One (method, subset) pair. `record` holds all repetitions when ok.
struct CellResult {
    std::string method;
    std::string subset;
    CellStatus status = CellStatus::ok;
    std::string reason;
    CriteriaRecord record;
    std::vector<TrialRecord> trials;
    std::vector<std::string> warnings;
};

struct MethodSummary {
    std::string method;
    std::size_t subsets_scored = 0;
    double mean_mes = 0.0;
    double mean_rank = 0.0;
    double mean_correctness = 0.0;
};

struct Bundle {
    std::uint64_t seed = 0;
    Weights weights;
    double alpha = 0.05;
    std::vector<std::string> methods;
    std::vector<std::string> subsets;
    std::size_t repetitions = 0;
    std::vector<CellResult> cells;     ///< method-major, in configured order
    std::vector<MesReport> reports;    ///< one per subset with a complete cell
    std::vector<MethodSummary> summary;
    nlohmann::json config;             ///< echo of the run configuration

    [[nodiscard]] std::size_t failed_cells() const;
};

/// Scores the complete cells per subset and fills `reports` and `summary`.
void assemble(Bundle& bundle);

using Progress = std::function<void(const std::string&)>;

/// Runs every method on every subset. Failures stay inside their cell;
/// throws AllMethodsFailed when no cell completes. `progress` receives one
/// line per finished repetition.
Bundle run_benchmark(const BenchmarkConfig& cfg, const Progress& progress = {});

/// Reads or generates the data and runs the configured cleaning steps.
/// Imputation draws from a seed derived from `master_seed`.
Dataset load_dataset(const DatasetSource& source, std::uint64_t master_seed);

nlohmann::json to_json(const Bundle& bundle);
Bundle bundle_from_json(const nlohmann::json& j);

enum class ReportFormat { json, csv, plotdata, trials };
std::string_view to_string(ReportFormat f) noexcept;
ReportFormat parse_report_format(std::string_view text);

inline const std::set<ReportFormat> kAllFormats{ReportFormat::json, ReportFormat::csv,
                                                ReportFormat::plotdata, ReportFormat::trials};

/// Writes bundle.json, criteria.csv, plotdata.csv and trials.csv into `dir`.
/// Returns the written paths.
std::vector<std::filesystem::path> emit_report(const Bundle& bundle, const std::set<ReportFormat>& formats,
                                               const std::filesystem::path& dir);

/// One row per cell: subset, method, status, reason, then the MES table
/// columns.
void write_criteria_table(std::ostream& out, const Bundle& bundle);

/// Long format: method, subset, repetition, criterion, value, status.
/// Correctness, complexity, responsiveness and MES per repetition.
void write_plotdata(std::ostream& out, const Bundle& bundle);

inline constexpr std::size_t kPlotCriteria = 4;

void write_trials(std::ostream& out, const Bundle& bundle);

/// Reads the criteria table written by `write_criteria_table`; failed rows
/// are skipped. Records carry summary values only.
std::vector<CriteriaRecord> read_criteria_table(std::istream& in);

}  // namespace mesbench
