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

#include "mesbench/dataset.hpp"

#include "mesbench/common.hpp"
#include "mesbench/csv.hpp"
#include "mesbench/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace mesbench {

namespace {

constexpr std::array<std::string_view, 7> kRequiredColumns = {
    "brand", "model", "series", "construction_year", "working_hours", "location", "price"};

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t");
    return std::string(text.substr(first, last - first + 1));
}

int current_year() {
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    return utc.tm_year + 1900;
}

template <typename T>
bool parse_full(const std::string& text, T& out) {
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

std::string padded(std::size_t value, int width) {
    std::ostringstream out;
    out << std::setw(width) << std::setfill('0') << value;
    return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV

IngestResult ingest_csv(std::istream& in) {
    IngestResult result;
    result.dataset.provenance = Provenance::ingested;
    result.dataset.schema_version = kSchemaVersion;

    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::MissingColumn, "empty file: no header row");
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
    }
    const auto header = csv::split_line(line);
    std::map<std::string, std::size_t> position;
    for (std::size_t j = 0; j < header.size(); ++j) {
        position.emplace(lower(trim(header[j])), j);
    }
    for (auto name : kRequiredColumns) {
        if (!position.contains(std::string(name))) {
            throw Error(ErrorCode::MissingColumn, std::string(name));
        }
    }
    const auto optional_column = [&](const char* name) -> std::optional<std::size_t> {
        auto it = position.find(name);
        return it == position.end() ? std::nullopt : std::optional(it->second);
    };
    const auto source_col = optional_column("source_id");
    const auto observed_col = optional_column("observed_at");
    const int max_year = current_year();

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty() || trim(line) == "\r") {
            continue;
        }
        const auto fields = csv::split_line(line);
        if (fields.size() != header.size()) {
            result.errors.push_back({lineno, "", "expected " + std::to_string(header.size()) +
                                                     " fields, found " +
                                                     std::to_string(fields.size())});
            continue;
        }
        const auto cell = [&](std::string_view name) { return trim(fields[position.at(std::string(name))]); };

        Listing row;
        bool ok = true;
        const auto fail = [&](std::string_view column, std::string reason) {
            result.errors.push_back({lineno, std::string(column), std::move(reason)});
            ok = false;
        };

        row.brand = cell("brand");
        row.model = cell("model");
        row.location = cell("location");
        for (auto [name, value] : {std::pair{"brand", &row.brand}, std::pair{"model", &row.model},
                                   std::pair{"location", &row.location}}) {
            if (value->empty()) {
                fail(name, "missing required value");
            }
        }
        if (auto s = cell("series"); !s.empty()) {
            row.series = s;
        }

        const auto year_text = cell("construction_year");
        if (year_text.empty()) {
            fail("construction_year", "missing required value");
        } else if (!parse_full(year_text, row.construction_year)) {
            fail("construction_year", "not an integer: '" + year_text + "'");
        } else if (row.construction_year < 1950 || row.construction_year > max_year) {
            fail("construction_year", "outside [1950, " + std::to_string(max_year) + "]");
        }

        if (auto hours_text = cell("working_hours"); !hours_text.empty()) {
            double hours = 0.0;
            if (!parse_full(hours_text, hours) || !std::isfinite(hours)) {
                fail("working_hours", "not a number: '" + hours_text + "'");
            } else if (hours < 0.0) {
                fail("working_hours", "negative");
            } else {
                row.working_hours = hours;
            }
        }

        const auto price_text = cell("price");
        if (price_text.empty()) {
            fail("price", "missing required value");
        } else if (!parse_full(price_text, row.price) || !std::isfinite(row.price)) {
            fail("price", "not a number: '" + price_text + "'");
        } else if (row.price <= 0.0) {
            fail("price", "not positive");
        }

        row.source_id = source_col ? trim(fields[*source_col]) : std::string{};
        if (row.source_id.empty()) {
            row.source_id = "csv:" + padded(lineno, 9);
        }
        if (observed_col) {
            row.observed_at = trim(fields[*observed_col]);
        }
        if (ok) {
            result.dataset.rows.push_back(std::move(row));
        }
    }
    return result;
}

IngestResult ingest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return ingest_csv(in);
}

void write_csv(const Dataset& data, std::ostream& out) {
    csv::write_row(out, {"brand", "model", "series", "construction_year", "working_hours",
                         "location", "price", "source_id", "observed_at"});
    for (const auto& r : data.rows) {
        csv::write_row(out, {r.brand, r.model, r.series.value_or(""),
                             std::to_string(r.construction_year),
                             r.working_hours ? csv::format_double(*r.working_hours) : "",
                             r.location, csv::format_double(r.price), r.source_id, r.observed_at});
    }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    write_csv(data, out);
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

// ---------------------------------------------------------------------------
// Deduplication

std::vector<KeySet> default_duplicate_keys() {
    return {{"source_id"}, {"model", "series", "construction_year", "working_hours", "price"}};
}

namespace {

using FieldGetter = std::string (*)(const Listing&);

FieldGetter field_getter(const std::string& name) {
    static const std::map<std::string, FieldGetter, std::less<>> getters = {
        {"brand", [](const Listing& r) { return r.brand; }},
        {"model", [](const Listing& r) { return r.model; }},
        {"series", [](const Listing& r) { return r.series ? "=" + *r.series : std::string("\x1e"); }},
        {"construction_year", [](const Listing& r) { return std::to_string(r.construction_year); }},
        {"working_hours",
         [](const Listing& r) {
             return r.working_hours ? csv::format_double(*r.working_hours) : std::string("\x1e");
         }},
        {"location", [](const Listing& r) { return r.location; }},
        {"price", [](const Listing& r) { return csv::format_double(r.price); }},
        {"source_id", [](const Listing& r) { return r.source_id; }},
        {"observed_at", [](const Listing& r) { return r.observed_at; }},
    };
    auto it = getters.find(name);
    if (it == getters.end()) {
        throw Error(ErrorCode::UnknownFeature, name);
    }
    return it->second;
}

bool survives_over(const Listing& a, const Listing& b) {
    if (a.observed_at != b.observed_at) {
        return a.observed_at < b.observed_at;
    }
    return a.source_id < b.source_id;
}

}  // namespace

Dataset deduplicate(const Dataset& data, const std::vector<KeySet>& key_sets) {
    std::vector<std::vector<FieldGetter>> getters;
    for (const auto& keys : key_sets) {
        auto& g = getters.emplace_back();
        for (const auto& name : keys) {
            g.push_back(field_getter(name));
        }
    }

    Dataset out = data;
    for (const auto& g : getters) {
        if (g.empty()) {
            continue;
        }
        std::unordered_map<std::string, std::size_t> best;
        std::vector<std::string> keys(out.rows.size());
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            std::string key;
            for (auto get : g) {
                key += get(out.rows[i]);
                key.push_back('\x1f');
            }
            auto [it, inserted] = best.emplace(key, i);
            if (!inserted && survives_over(out.rows[i], out.rows[it->second])) {
                it->second = i;
            }
            keys[i] = std::move(key);
        }
        std::vector<Listing> kept;
        kept.reserve(best.size());
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            if (best.at(keys[i]) == i) {
                kept.push_back(std::move(out.rows[i]));
            }
        }
        out.rows = std::move(kept);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Outliers

std::string_view to_string(RejectReason reason) noexcept {
    switch (reason) {
        case RejectReason::lifetime_cap: return "lifetime_cap";
        case RejectReason::price_interval: return "price_interval";
        case RejectReason::hours_interval: return "hours_interval";
    }
    return "unknown";
}

double two_sided_normal_quantile(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "confidence must lie in (0, 1)");
    }
    const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, 0.5 + confidence / 2.0);
}

namespace {

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

template <typename Value>
Moments moments_of(const std::vector<std::size_t>& members, Value value) {
    Moments m;
    double sum = 0.0;
    for (auto i : members) {
        if (auto v = value(i)) {
            sum += *v;
            ++m.n;
        }
    }
    if (m.n == 0) {
        return m;
    }
    m.mean = sum / static_cast<double>(m.n);
    double ss = 0.0;
    for (auto i : members) {
        if (auto v = value(i)) {
            ss += (*v - m.mean) * (*v - m.mean);
        }
    }
    m.sd = std::sqrt(ss / static_cast<double>(m.n));
    return m;
}

}  // namespace

OutlierResult filter_outliers(const Dataset& data, const OutlierConfig& config) {
    const double z_max = two_sided_normal_quantile(config.confidence);
    const auto& rows = data.rows;

    std::vector<std::optional<RejectReason>> verdict(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!r.working_hours || r.hours_imputed) {
            continue;
        }
        auto cap_it = config.lifetime_caps.find(r.model);
        const double cap =
            cap_it == config.lifetime_caps.end() ? config.default_lifetime_cap : cap_it->second;
        if (*r.working_hours > cap) {
            verdict[i] = RejectReason::lifetime_cap;
        }
    }

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        groups[rows[i].model].push_back(i);
    }

    for (auto& [model, all_members] : groups) {
        std::vector<std::size_t> members;
        for (auto i : all_members) {
            if (!verdict[i]) {
                members.push_back(i);
            }
        }
        // Re-estimate until the surviving group is self-consistent, so a second
        // pass over the output rejects nothing.
        while (members.size() >= config.min_group_size) {
            const auto price = moments_of(members, [&](std::size_t i) {
                return std::optional<double>(rows[i].price);
            });
            const auto observed_hours = [&](std::size_t i) -> std::optional<double> {
                const auto& r = rows[i];
                if (!r.working_hours || r.hours_imputed) {
                    return std::nullopt;
                }
                return r.working_hours;
            };
            const auto hours = moments_of(members, observed_hours);

            std::vector<std::size_t> survivors;
            for (auto i : members) {
                if (price.sd > 0.0 && std::abs(rows[i].price - price.mean) / price.sd > z_max) {
                    verdict[i] = RejectReason::price_interval;
                    continue;
                }
                if (auto h = observed_hours(i); h && hours.n >= config.min_group_size &&
                                                  hours.sd > 0.0 &&
                                                  std::abs(*h - hours.mean) / hours.sd > z_max) {
                    verdict[i] = RejectReason::hours_interval;
                    continue;
                }
                survivors.push_back(i);
            }
            if (survivors.size() == members.size()) {
                break;
            }
            members = std::move(survivors);
        }
    }

    OutlierResult result;
    result.kept.schema_version = data.schema_version;
    result.kept.provenance = data.provenance;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (verdict[i]) {
            result.rejected.push_back({rows[i], *verdict[i]});
        } else {
            result.kept.rows.push_back(rows[i]);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Imputation

Dataset impute_working_hours(const Dataset& data, std::uint64_t seed) {
    std::vector<std::size_t> complete;
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        (data.rows[i].working_hours ? complete : missing).push_back(i);
    }
    if (missing.empty()) {
        return data;
    }
    if (complete.size() < 10) {
        throw Error(ErrorCode::InsufficientCompleteRows,
                    std::to_string(complete.size()) + " rows with working hours, need 10");
    }

    std::map<std::string, Eigen::Index> model_column;
    for (auto i : complete) {
        const auto& m = data.rows[i].model;
        if (!model_column.contains(m)) {
            model_column.emplace(m, 2 + static_cast<Eigen::Index>(model_column.size()));
        }
    }
    double year_mean = 0.0;
    for (auto i : complete) {
        year_mean += data.rows[i].construction_year;
    }
    year_mean /= static_cast<double>(complete.size());

    const auto width = 2 + static_cast<Eigen::Index>(model_column.size());
    const auto design_row = [&](const Listing& r) {
        Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(width);
        x(0) = 1.0;
        x(1) = r.construction_year - year_mean;
        if (auto it = model_column.find(r.model); it != model_column.end()) {
            x(it->second) = 1.0;
        }
        return x;
    };

    Eigen::MatrixXd design(static_cast<Eigen::Index>(complete.size()), width);
    Eigen::VectorXd hours(static_cast<Eigen::Index>(complete.size()));
    for (std::size_t k = 0; k < complete.size(); ++k) {
        const auto& r = data.rows[complete[k]];
        design.row(static_cast<Eigen::Index>(k)) = design_row(r);
        hours(static_cast<Eigen::Index>(k)) = *r.working_hours;
    }
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    const Eigen::VectorXd beta = cod.solve(hours);
    const Eigen::VectorXd residual = hours - design * beta;
    const auto dof = std::max<Eigen::Index>(1, design.rows() - cod.rank());
    const double sigma = std::sqrt(residual.squaredNorm() / static_cast<double>(dof));

    Dataset out = data;
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto i : missing) {
        auto& r = out.rows[i];
        const double predicted = design_row(r).dot(beta);
        r.working_hours = std::max(0.0, predicted + sigma * noise(rng));
        r.hours_imputed = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rare models

Dataset filter_rare_models(const Dataset& data, std::size_t min_count) {
    if (min_count < 1) {
        throw Error(ErrorCode::InvalidConfig, "min_count must be >= 1");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& r : data.rows) {
        ++counts[r.model];
    }
    Dataset out;
    out.schema_version = data.schema_version;
    out.provenance = data.provenance;
    for (const auto& r : data.rows) {
        if (counts[r.model] > min_count) {
            out.rows.push_back(r);
        }
    }
    return out;
}

CleaningReport clean(const Dataset& data, const CleaningConfig& config) {
    CleaningReport report;
    const auto unique = deduplicate(data, config.duplicate_keys);
    report.duplicates_removed = data.rows.size() - unique.rows.size();
    auto filtered = filter_outliers(unique, config.outliers);
    report.rejected = std::move(filtered.rejected);
    std::size_t missing_before = 0;
    for (const auto& r : filtered.kept.rows) {
        missing_before += r.working_hours ? 0 : 1;
    }
    const auto imputed = impute_working_hours(filtered.kept, config.impute_seed);
    report.imputed = missing_before;
    report.cleaned = filter_rare_models(imputed, config.min_model_count);
    report.rare_removed = imputed.rows.size() - report.cleaned.rows.size();
    return report;
}

// ---------------------------------------------------------------------------
// Subsets

std::string_view to_string(SubsetId id) noexcept {
    switch (id) {
        case SubsetId::basic: return "basic";
        case SubsetId::basic_series: return "basic_series";
        case SubsetId::basic_location: return "basic_location";
        case SubsetId::full: return "full";
    }
    return "unknown";
}

SubsetId parse_subset(std::string_view text) {
    for (auto id : kAllSubsets) {
        if (to_string(id) == text) {
            return id;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown subset '" + std::string(text) + "'");
}

FeatureSubset feature_subset(SubsetId id) {
    FeatureSubset s{id, {"model", "working_hours", "construction_year"}};
    if (id == SubsetId::basic_series || id == SubsetId::full) {
        s.columns.emplace_back("series");
    }
    if (id == SubsetId::basic_location || id == SubsetId::full) {
        s.columns.emplace_back("location");
    }
    return s;
}

const std::vector<std::string>& categorical_feature_names() {
    static const std::vector<std::string> names = {"model", "series", "location"};
    return names;
}

SubsetData make_subset(const Dataset& data, SubsetId id) {
    SubsetData out;
    const auto n = data.rows.size();
    for (const auto& name : feature_subset(id).columns) {
        if (name == "model" || name == "series" || name == "location") {
            std::vector<std::string> labels;
            labels.reserve(n);
            for (const auto& r : data.rows) {
                if (name == "model") {
                    labels.push_back(r.model);
                } else if (name == "series") {
                    labels.push_back(r.series.value_or(""));
                } else {
                    labels.push_back(r.location);
                }
            }
            out.features.add_categorical(name, std::move(labels));
        } else {
            std::vector<double> values;
            values.reserve(n);
            for (const auto& r : data.rows) {
                if (name == "construction_year") {
                    values.push_back(r.construction_year);
                } else {
                    if (!r.working_hours) {
                        throw Error(ErrorCode::SchemaMismatch,
                                    "working_hours missing for " + r.source_id +
                                        "; impute before building subsets");
                    }
                    values.push_back(*r.working_hours);
                }
            }
            out.features.add_numeric(name, std::move(values));
        }
    }
    out.target.reserve(n);
    for (const auto& r : data.rows) {
        out.target.push_back(r.price);
    }
    return out;
}

std::map<SubsetId, SubsetData> make_subsets(const Dataset& data) {
    std::map<SubsetId, SubsetData> out;
    for (auto id : kAllSubsets) {
        out.emplace(id, make_subset(data, id));
    }
    return out;
}

Split holdout_split(std::size_t n, double test_frac, std::uint64_t seed) {
    if (!(test_frac > 0.0 && test_frac < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "test_frac must lie in (0, 1)");
    }
    if (n < 2) {
        throw Error(ErrorCode::TooFewRows, "holdout split needs at least 2 rows");
    }
    auto test_size = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_frac));
    test_size = std::clamp<std::size_t>(test_size, 1, n - 1);
    const auto order = shuffled_indices(n, seed);
    Split split;
    split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_size));
    split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(test_size), order.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void validate(const SynthConfig& c) {
    const auto fraction = [](double f) { return f >= 0.0 && f < 1.0; };
    const auto decay = [](double r) { return r > 0.0 && r <= 1.0; };
    std::string problem;
    if (c.n_models == 0) problem = "n_models must be >= 1";
    else if (c.samples_per_model == 0) problem = "samples_per_model must be >= 1";
    else if (!decay(c.depreciation_rate_year)) problem = "depreciation_rate_year must lie in (0, 1]";
    else if (!decay(c.depreciation_rate_hours)) problem = "depreciation_rate_hours must lie in (0, 1]";
    else if (!(c.noise_sigma >= 0.0)) problem = "noise_sigma must be >= 0";
    else if (!fraction(c.missing_hours_frac)) problem = "missing_hours_frac must lie in [0, 1)";
    else if (!fraction(c.duplicate_frac)) problem = "duplicate_frac must lie in [0, 1)";
    else if (!fraction(c.outlier_frac)) problem = "outlier_frac must lie in [0, 1)";
    else if (c.location_premiums.empty()) problem = "location_premiums must name at least one location";
    for (const auto& [name, p] : c.series_premiums) {
        if (!(p > 0.0)) problem = "series premium for '" + name + "' must be positive";
    }
    for (const auto& [name, p] : c.location_premiums) {
        if (!(p > 0.0)) problem = "location premium for '" + name + "' must be positive";
    }
    if (!problem.empty()) {
        throw Error(ErrorCode::InvalidConfig, problem);
    }
}

double synth_price(double base_price, int age, double hours, double series_premium,
                   double location_premium, const SynthConfig& config) {
    return base_price * std::pow(config.depreciation_rate_year, age) *
           std::pow(config.depreciation_rate_hours, hours / 1000.0) * series_premium *
           location_premium;
}

namespace {

constexpr std::array<std::string_view, 10> kModelNames = {"308", "D6",  "330", "M318", "966",
                                                          "320", "950", "336", "D8",   "M315"};
constexpr std::array<std::string_view, 7> kPortals = {"mascus",        "catused", "mobile",
                                                      "machineryline", "trademachines",
                                                      "truck1",        "truckscout24"};

// 2021-01-01 plus `offset` days, offset < 365.
std::string date_from_offset(int offset) {
    static constexpr std::array<int, 12> days = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int month = 0;
    while (offset >= days[static_cast<std::size_t>(month)]) {
        offset -= days[static_cast<std::size_t>(month)];
        ++month;
    }
    std::ostringstream out;
    out << "2021-" << std::setw(2) << std::setfill('0') << month + 1 << '-' << std::setw(2)
        << std::setfill('0') << offset + 1;
    return out.str();
}

std::size_t fraction_count(double frac, std::size_t n) {
    return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
}

}  // namespace

SynthResult synth_generate(const SynthConfig& config) {
    validate(config);
    Rng rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    struct ModelProfile {
        std::string name;
        double base_price;
        double hours_per_year;
    };
    std::vector<ModelProfile> models;
    for (std::size_t m = 0; m < config.n_models; ++m) {
        std::string name = m < kModelNames.size() ? std::string(kModelNames[m])
                                                  : "M" + std::to_string(400 + m);
        const double base = 60000.0 + 240000.0 * unit(rng);
        const double hpy = 600.0 + 600.0 * unit(rng);
        models.push_back({std::move(name), base, hpy});
    }
    std::vector<std::pair<std::string, double>> series(config.series_premiums.begin(),
                                                       config.series_premiums.end());
    std::vector<std::pair<std::string, double>> locations(config.location_premiums.begin(),
                                                          config.location_premiums.end());
    std::uniform_int_distribution<std::size_t> pick_age(0, config.max_age_years);

    const std::size_t n_base = config.n_models * config.samples_per_model;
    std::vector<Listing> rows;
    std::vector<RowLabel> labels(n_base);
    rows.reserve(n_base);
    for (std::size_t m = 0; m < models.size(); ++m) {
        for (std::size_t s = 0; s < config.samples_per_model; ++s) {
            const auto& profile = models[m];
            const int age = static_cast<int>(pick_age(rng));
            const double wear = std::max(0.0, 1.0 + 0.25 * gauss(rng));
            const double hours =
                std::round(age * profile.hours_per_year * wear + 400.0 * unit(rng));

            Listing r;
            r.brand = "Caterpillar";
            r.model = profile.name;
            double series_premium = 1.0;
            if (!series.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, series.size() - 1);
                const auto& [label, premium] = series[pick(rng)];
                r.series = label;
                series_premium = premium;
            }
            std::uniform_int_distribution<std::size_t> pick_loc(0, locations.size() - 1);
            const auto& [loc, loc_premium] = locations[pick_loc(rng)];
            r.location = loc;
            r.construction_year = config.reference_year - age;
            r.working_hours = hours;
            const double noise = config.noise_sigma > 0.0
                                     ? std::exp(config.noise_sigma * gauss(rng))
                                     : 1.0;
            r.price = synth_price(profile.base_price, age, hours, series_premium, loc_premium,
                                  config) *
                      noise;
            std::uniform_int_distribution<std::size_t> pick_portal(0, kPortals.size() - 1);
            r.source_id = std::string(kPortals[pick_portal(rng)]) + ":" + padded(rows.size(), 7);
            std::uniform_int_distribution<int> pick_day(0, 180);
            r.observed_at = date_from_offset(pick_day(rng));
            rows.push_back(std::move(r));
        }
    }

    const auto choose = [&](std::size_t count) {
        auto order = shuffled_indices(n_base, rng());
        order.resize(std::min(count, n_base));
        return order;
    };
    for (auto i : choose(fraction_count(config.outlier_frac, n_base))) {
        rows[i].price *= 10.0;
        labels[i].price_outlier = true;
    }
    for (auto i : choose(fraction_count(config.missing_hours_frac, n_base))) {
        rows[i].working_hours.reset();
        labels[i].missing_hours = true;
    }
    for (auto original : choose(fraction_count(config.duplicate_frac, n_base))) {
        Listing copy = rows[original];
        std::uniform_int_distribution<std::size_t> pick_portal(0, kPortals.size() - 1);
        copy.source_id = std::string(kPortals[pick_portal(rng)]) + ":" + padded(rows.size(), 7);
        std::uniform_int_distribution<int> delay(1, 60);
        const int day = std::min(364, 181 + delay(rng));
        copy.observed_at = date_from_offset(day);
        RowLabel label = labels[original];
        label.duplicate = true;
        label.duplicate_of = original;
        rows.push_back(std::move(copy));
        labels.push_back(label);
    }

    // Interleave the copies with the originals.
    const auto order = shuffled_indices(rows.size(), rng());
    std::vector<std::size_t> position(rows.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        position[order[k]] = k;
    }
    SynthResult result;
    result.dataset.provenance = Provenance::synthetic;
    result.dataset.schema_version = kSchemaVersion;
    result.dataset.rows.reserve(rows.size());
    result.labels.reserve(rows.size());
    for (auto k : order) {
        result.dataset.rows.push_back(rows[k]);
        RowLabel label = labels[k];
        if (label.duplicate_of) {
            label.duplicate_of = position[*label.duplicate_of];
        }
        result.labels.push_back(label);
    }
    return result;
}

}  // namespace mesbench
