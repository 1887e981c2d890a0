#include "rtlppa/normalize.hpp"

#include <cmath>

namespace rtlppa {

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::area: return "area";
        case Metric::delay: return "delay";
        case Metric::total_power: return "total_power";
        case Metric::static_power: return "static_power";
    }
    return "unknown";
}

const char* metric_label(Metric m) {
    switch (m) {
        case Metric::area: return "area";
        case Metric::delay: return "delay";
        case Metric::total_power: return "power";
        case Metric::static_power: return "static_power";
    }
    return "unknown";
}

Metric metric_from_name(const std::string& name) {
    if (name == "area") return Metric::area;
    if (name == "delay") return Metric::delay;
    if (name == "total_power" || name == "power") return Metric::total_power;
    if (name == "static_power") return Metric::static_power;
    throw ConfigError("unknown metric name: " + name);
}

NormalizationStats fit_stats(const std::vector<double>& train_values, Metric metric,
                             double epsilon) {
    if (epsilon <= 0.0) throw ConfigError("epsilon must be positive");
    if (train_values.size() < 2)
        throw InsufficientData("fit_stats needs at least 2 samples, got " +
                               std::to_string(train_values.size()));

    std::vector<double> logs;
    logs.reserve(train_values.size());
    for (double x : train_values) {
        if (x < 0.0) throw DomainError("fit_stats: negative target value");
        if (!std::isfinite(x)) throw NumericError("fit_stats: non-finite target value");
        logs.push_back(std::log(x + epsilon));
    }

    double mean = 0.0;
    for (double v : logs) mean += v;
    mean /= static_cast<double>(logs.size());

    double var = 0.0;
    for (double v : logs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(logs.size());  // population variance

    if (var == 0.0)
        throw DegenerateVariance("all log-space targets identical for metric " +
                                 std::string(metric_name(metric)));

    NormalizationStats stats;
    stats.metric = metric;
    stats.mu = mean;
    stats.sigma = std::sqrt(var);
    stats.epsilon = epsilon;
    return stats;
}

double normalize(const NormalizationStats& stats, double x) {
    if (x < 0.0) throw DomainError("normalize: negative value");
    if (!std::isfinite(x)) throw NumericError("normalize: non-finite value");
    return (std::log(x + stats.epsilon) - stats.mu) / stats.sigma;
}

double denormalize(const NormalizationStats& stats, double xhat) {
    if (!std::isfinite(xhat)) throw NumericError("denormalize: non-finite input");
    const double exponent = stats.sigma * xhat + stats.mu;
    const double value = std::exp(exponent);
    if (!std::isfinite(value))
        throw NumericError("denormalize: exp overflow at xhat = " + std::to_string(xhat));
    return std::max(0.0, value - stats.epsilon);
}

}  // namespace rtlppa
