#include "rtlppa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtlppa/errors.hpp"
#include "rtlppa/frontend.hpp"

namespace rtlppa {

double relative_error(double pred, double truth) {
    if (!(truth > 0.0)) {
        throw DomainError("relative_error: ground truth must be positive");
    }
    if (!std::isfinite(pred)) throw NumericError("relative_error: non-finite prediction");
    return std::fabs(pred - truth) / truth;
}

double pass_rate(const std::vector<double>& res, double theta) {
    if (res.empty()) throw InsufficientData("pass_rate: no relative errors");
    if (theta < 0.0) throw ConfigError("pass_rate: negative threshold");
    std::size_t hits = 0;
    for (double re : res) {
        if (re <= theta) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(res.size());
}

namespace {

const char* kStrata[] = {"all", "small", "medium", "large"};

std::string stratum_of(std::size_t token_count, std::size_t small_max,
                       std::size_t medium_max) {
    if (token_count <= small_max) return "small";
    if (token_count <= medium_max) return "medium";
    return "large";
}

}  // namespace

PassRateReport aggregate_pass_rates(
    const std::vector<PredictionRecord>& records, const std::vector<double>& thresholds,
    std::optional<std::pair<std::size_t, std::size_t>> strata) {
    if (records.empty()) throw InsufficientData("aggregate_pass_rates: no records");
    if (thresholds.empty()) throw ConfigError("aggregate_pass_rates: no thresholds");

    PassRateReport report;
    report.thresholds = thresholds;
    report.sample_count = records.size();

    if (strata) {
        report.small_max = strata->first;
        report.medium_max = strata->second;
    } else {
        std::vector<std::size_t> counts;
        counts.reserve(records.size());
        for (const PredictionRecord& r : records) counts.push_back(r.token_count);
        std::sort(counts.begin(), counts.end());
        const std::size_t n = counts.size();
        report.small_max = counts[(n + 2) / 3 - 1];
        report.medium_max = counts[(2 * n + 2) / 3 - 1];
    }
    if (report.small_max > report.medium_max) {
        throw ConfigError("strata boundaries must be nondecreasing");
    }

    // REs bucketed per metric x stratum.
    std::map<Metric, std::map<std::string, std::vector<double>>> buckets;
    for (const PredictionRecord& r : records) {
        const double re = relative_error(r.predicted, r.truth);
        auto& per_metric = buckets[r.metric];
        per_metric["all"].push_back(re);
        per_metric[stratum_of(r.token_count, report.small_max, report.medium_max)]
            .push_back(re);
        if (std::find(report.metrics.begin(), report.metrics.end(), r.metric) ==
            report.metrics.end()) {
            report.metrics.push_back(r.metric);
        }
    }

    for (Metric metric : report.metrics) {
        for (double theta : thresholds) {
            for (const char* stratum : kStrata) {
                PassRateCell cell;
                cell.metric = metric;
                cell.threshold = theta;
                cell.stratum = stratum;
                const auto& bucket = buckets[metric][stratum];
                cell.count = bucket.size();
                cell.rate = bucket.empty() ? 0.0 : pass_rate(bucket, theta);
                report.cells.push_back(std::move(cell));
            }
        }
    }
    return report;
}

PassRateReport evaluate_model(
    const PpaModel& model, const std::vector<DatasetRecord>& records,
    const std::vector<double>& thresholds,
    std::optional<std::pair<std::size_t, std::size_t>> strata) {
    if (!model.stats_fitted) {
        throw ConfigError("evaluate_model: normalization stats not fitted");
    }
    std::vector<PredictionRecord> predictions;
    std::vector<std::string> warnings;
    std::size_t excluded = 0;
    for (const DatasetRecord& record : records) {
        const SourceUnit unit = tokenize(record.source);
        const std::vector<double> predicted = predict_physical(model, unit);
        const std::size_t tokens = unit.counted_tokens();
        for (std::size_t h = 0; h < model.metrics.size(); ++h) {
            double truth = 0.0;
            switch (model.metrics[h]) {
                case Metric::area: truth = record.area; break;
                case Metric::delay: truth = record.delay; break;
                default: truth = record.power; break;
            }
            if (!(truth > 0.0)) {
                ++excluded;
                warnings.push_back("excluded '" + record.id + "' " +
                                   metric_label(model.metrics[h]) +
                                   ": nonpositive ground truth");
                continue;
            }
            PredictionRecord p;
            p.id = record.id;
            p.metric = model.metrics[h];
            p.predicted = predicted[h];
            p.truth = truth;
            p.token_count = tokens;
            predictions.push_back(std::move(p));
        }
    }
    PassRateReport report = aggregate_pass_rates(predictions, thresholds, strata);
    report.excluded = excluded;
    report.warnings = std::move(warnings);
    return report;
}

std::string format_percent(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", rate * 100.0);
    return buf;
}

std::string render_text(const PassRateReport& report) {
    std::ostringstream out;
    out << "pass rates (" << report.sample_count << " records";
    if (report.excluded > 0) out << ", " << report.excluded << " excluded";
    out << ")\n";
    out << "strata: small <= " << report.small_max << " tokens, medium <= "
        << report.medium_max << " tokens\n\n";
    out << "metric      stratum   count";
    for (double theta : report.thresholds) {
        char head[32];
        std::snprintf(head, sizeof(head), "  theta=%.2f", theta);
        out << head;
    }
    out << "\n";
    for (Metric metric : report.metrics) {
        for (const char* stratum : kStrata) {
            char line[64];
            const PassRateCell* first = nullptr;
            std::snprintf(line, sizeof(line), "%-10s  %-8s", metric_label(metric),
                          stratum);
            out << line;
            for (double theta : report.thresholds) {
                for (const PassRateCell& cell : report.cells) {
                    if (cell.metric == metric && cell.stratum == stratum &&
                        cell.threshold == theta) {
                        if (!first) {
                            char cnt[16];
                            std::snprintf(cnt, sizeof(cnt), "%7zu", cell.count);
                            out << cnt;
                            first = &cell;
                        }
                        char val[32];
                        std::snprintf(val, sizeof(val), "%11s",
                                      format_percent(cell.rate).c_str());
                        out << val;
                        break;
                    }
                }
            }
            out << "\n";
        }
    }
    for (const std::string& warning : report.warnings) {
        out << "warning: " << warning << "\n";
    }
    return out.str();
}

std::string render_csv(const PassRateReport& report) {
    std::ostringstream out;
    out << "metric,threshold,stratum,pass_rate,count\n";
    for (const PassRateCell& cell : report.cells) {
        char line[128];
        std::snprintf(line, sizeof(line), "%s,%g,%s,%.6f,%zu\n",
                      metric_label(cell.metric), cell.threshold, cell.stratum.c_str(),
                      cell.rate, cell.count);
        out << line;
    }
    return out.str();
}

std::string render_json(const PassRateReport& report) {
    nlohmann::ordered_json j;
    j["sample_count"] = report.sample_count;
    j["excluded"] = report.excluded;
    j["small_max"] = report.small_max;
    j["medium_max"] = report.medium_max;
    nlohmann::ordered_json metrics = nlohmann::ordered_json::array();
    for (Metric m : report.metrics) metrics.push_back(metric_label(m));
    j["metrics"] = metrics;
    j["thresholds"] = report.thresholds;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const PassRateCell& cell : report.cells) {
        nlohmann::ordered_json c;
        c["metric"] = metric_label(cell.metric);
        c["threshold"] = cell.threshold;
        c["stratum"] = cell.stratum;
        c["pass_rate"] = cell.rate;
        c["count"] = cell.count;
        cells.push_back(std::move(c));
    }
    j["cells"] = cells;
    j["warnings"] = report.warnings;
    return j.dump(2);
}

PassRateReport report_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorClass::data, "report_from_json: invalid JSON");
    }
    PassRateReport report;
    try {
        report.sample_count = j.at("sample_count").get<std::size_t>();
        report.excluded = j.at("excluded").get<std::size_t>();
        report.small_max = j.at("small_max").get<std::size_t>();
        report.medium_max = j.at("medium_max").get<std::size_t>();
        for (const auto& m : j.at("metrics")) {
            report.metrics.push_back(metric_from_name(m.get<std::string>()));
        }
        report.thresholds = j.at("thresholds").get<std::vector<double>>();
        for (const auto& c : j.at("cells")) {
            PassRateCell cell;
            cell.metric = metric_from_name(c.at("metric").get<std::string>());
            cell.threshold = c.at("threshold").get<double>();
            cell.stratum = c.at("stratum").get<std::string>();
            cell.rate = c.at("pass_rate").get<double>();
            cell.count = c.at("count").get<std::size_t>();
            report.cells.push_back(std::move(cell));
        }
        report.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& err) {
        throw Error(ErrorClass::data,
                    std::string("report_from_json: missing field: ") + err.what());
    }
    return report;
}

}  // namespace rtlppa
