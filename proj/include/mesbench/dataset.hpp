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
#include "mesbench/table.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mesbench {

/// One used-equipment advertisement.
struct Listing {
    std::string brand;
    std::string model;
    std::optional<std::string> series;
    int construction_year = 0;
    std::optional<double> working_hours;
    std::string location;
    double price = 0.0;
    std::string source_id;
    std::string observed_at;  ///< ISO date, YYYY-MM-DD; lexical order is chronological.
    /// Set by imputation. Outlier checks on working hours skip imputed values.
    bool hours_imputed = false;

    friend bool operator==(const Listing&, const Listing&) = default;
};

enum class Provenance { ingested, synthetic };

struct Dataset {
    std::vector<Listing> rows;
    int schema_version = 1;
    Provenance provenance = Provenance::ingested;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// CSV ingestion

struct RowParseError {
    std::size_t line = 0;
    std::string column;
    std::string reason;
};

struct IngestResult {
    Dataset dataset;
    /// Rows listed here were skipped; parsing continues past them.
    std::vector<RowParseError> errors;
};

/// Header must contain brand,model,series,construction_year,working_hours,
/// location,price (any order, case-insensitive); source_id and observed_at are
/// optional. Rows without a source_id get "csv:<line>" zero-padded.
IngestResult ingest_csv(std::istream& in);
IngestResult ingest_csv(const std::filesystem::path& path);

void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cleaning

using KeySet = std::vector<std::string>;

/// [{source_id}, {model, series, construction_year, working_hours, price}]
std::vector<KeySet> default_duplicate_keys();

/// Collapses rows that agree on every field of a key set, one key set at a
/// time. Survivor: earliest observed_at, then lowest source_id. Survivors keep
/// their original relative order.
Dataset deduplicate(const Dataset& data, const std::vector<KeySet>& key_sets);

enum class RejectReason { lifetime_cap, price_interval, hours_interval };
std::string_view to_string(RejectReason reason) noexcept;

struct Rejection {
    Listing listing;
    RejectReason reason;
};

struct OutlierConfig {
    double confidence = 0.99;
    double default_lifetime_cap = 60000.0;
    std::map<std::string, double> lifetime_caps;  ///< per model, overrides the default
    std::size_t min_group_size = 3;
};

struct OutlierResult {
    Dataset kept;
    std::vector<Rejection> rejected;
};

/// Two-sided standard normal quantile, e.g. 2.5758 for 0.99.
double two_sided_normal_quantile(double confidence);

/// Per model group, rejects rows whose price or working-hours z-score exceeds
/// the two-sided normal quantile for `confidence`, re-estimating the group
/// statistics until no further row is rejected. Hours above the model's
/// lifetime cap are rejected first.
OutlierResult filter_outliers(const Dataset& data, const OutlierConfig& config = {});

/// Stochastic regression imputation of missing working hours: least squares
/// on construction year plus model indicators, prediction plus gaussian noise
/// with the residual standard deviation, clamped at zero.
Dataset impute_working_hours(const Dataset& data, std::uint64_t seed);

/// Keeps rows whose model occurs strictly more than `min_count` times.
Dataset filter_rare_models(const Dataset& data, std::size_t min_count = 150);

struct CleaningConfig {
    std::vector<KeySet> duplicate_keys = default_duplicate_keys();
    OutlierConfig outliers;
    std::uint64_t impute_seed = 0;
    std::size_t min_model_count = 150;
};

struct CleaningReport {
    Dataset cleaned;
    std::vector<Rejection> rejected;
    std::size_t duplicates_removed = 0;
    std::size_t imputed = 0;
    std::size_t rare_removed = 0;
};

/// dedup -> outlier filter -> imputation -> rare-model filter.
CleaningReport clean(const Dataset& data, const CleaningConfig& config);

// ---------------------------------------------------------------------------
// Feature subsets and splitting

enum class SubsetId { basic, basic_series, basic_location, full };

inline constexpr SubsetId kAllSubsets[] = {SubsetId::basic, SubsetId::basic_series,
                                           SubsetId::basic_location, SubsetId::full};

std::string_view to_string(SubsetId id) noexcept;
SubsetId parse_subset(std::string_view text);

struct FeatureSubset {
    SubsetId id;
    std::vector<std::string> columns;
};

FeatureSubset feature_subset(SubsetId id);

/// Names of the columns treated as categorical in feature tables.
const std::vector<std::string>& categorical_feature_names();

struct SubsetData {
    FeatureTable features;
    std::vector<double> target;
};

SubsetData make_subset(const Dataset& data, SubsetId id);
std::map<SubsetId, SubsetData> make_subsets(const Dataset& data);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Test size round(n * test_frac), at least one row; depends only on (n, seed).
Split holdout_split(std::size_t n, double test_frac, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthConfig {
    std::size_t n_models = 10;
    std::size_t samples_per_model = 300;
    double depreciation_rate_year = 0.92;
    double depreciation_rate_hours = 0.97;
    std::map<std::string, double> series_premiums{
        {"D", 0.85}, {"E", 0.95}, {"F", 1.05}, {"K", 1.2}};
    std::map<std::string, double> location_premiums{{"BE", 0.97}, {"CH", 1.2}, {"DE", 1.05},
                                                    {"FR", 0.98}, {"NL", 1.0}, {"PL", 0.8}};
    double noise_sigma = 0.05;
    double missing_hours_frac = 0.1;
    double duplicate_frac = 0.1;
    double outlier_frac = 0.05;
    std::uint64_t seed = 1;
    int reference_year = 2022;
    std::size_t max_age_years = 14;
};

/// Which injections a generated row carries.
struct RowLabel {
    bool duplicate = false;                   ///< copy of another generated row
    std::optional<std::size_t> duplicate_of;  ///< index of that row in the output
    bool price_outlier = false;               ///< price multiplied by 10
    bool missing_hours = false;
};

struct SynthResult {
    Dataset dataset;
    std::vector<RowLabel> labels;  ///< parallel to dataset.rows
};

void validate(const SynthConfig& config);

/// Price = base(model) * rate_year^age * rate_hours^(hours/1000) * series premium
/// * location premium * exp(N(0, noise_sigma^2)); then injects outliers,
/// missing hours and duplicates.
SynthResult synth_generate(const SynthConfig& config);

/// Noise-free price used by the generator.
double synth_price(double base_price, int age, double hours, double series_premium,
                   double location_premium, const SynthConfig& config);

}  // namespace mesbench
