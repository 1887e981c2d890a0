#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtlppa/dataset.hpp"
#include "rtlppa/model.hpp"

namespace rtlppa {

// |pred - truth| / truth; DomainError when truth <= 0.
double relative_error(double pred, double truth);

// Fraction of RE values <= theta (inclusive). InsufficientData on an empty
// list, ConfigError on negative theta.
double pass_rate(const std::vector<double>& res, double theta);

struct PredictionRecord {
    std::string id;
    Metric metric = Metric::area;
    double predicted = 0.0;
    double truth = 0.0;
    std::size_t token_count = 0;
};

struct PassRateCell {
    Metric metric = Metric::area;
    double threshold = 0.0;
    std::string stratum;  // "all", "small", "medium", "large"
    double rate = 0.0;
    std::size_t count = 0;  // records in this metric x stratum

    bool operator==(const PassRateCell&) const = default;
};

struct PassRateReport {
    std::vector<Metric> metrics;
    std::vector<double> thresholds;
    std::vector<PassRateCell> cells;  // metric-major, then threshold, then stratum
    std::size_t sample_count = 0;     // prediction records entering aggregation
    std::size_t excluded = 0;         // dropped for nonpositive ground truth
    std::size_t small_max = 0;        // token-count boundaries (inclusive uppers)
    std::size_t medium_max = 0;
    std::vector<std::string> warnings;

    bool operator==(const PassRateReport&) const = default;
};

// Pure aggregation: REs per metric, overall and per token-size stratum.
// Strata boundaries default to terciles of the evaluated token counts.
PassRateReport aggregate_pass_rates(
    const std::vector<PredictionRecord>& records, const std::vector<double>& thresholds,
    std::optional<std::pair<std::size_t, std::size_t>> strata = std::nullopt);

// predict_physical over every record, one PredictionRecord per metric, then
// aggregate. Records with nonpositive ground truth are excluded with a
// warning.
PassRateReport evaluate_model(
    const PpaModel& model, const std::vector<DatasetRecord>& records,
    const std::vector<double>& thresholds,
    std::optional<std::pair<std::size_t, std::size_t>> strata = std::nullopt);

// "0.716" -> "71.6%"
std::string format_percent(double rate);

std::string render_text(const PassRateReport& report);
// header: metric,threshold,stratum,pass_rate,count
std::string render_csv(const PassRateReport& report);
std::string render_json(const PassRateReport& report);
PassRateReport report_from_json(const std::string& text);

}  // namespace rtlppa
