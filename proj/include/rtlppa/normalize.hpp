#pragma once

#include <string>
#include <vector>

#include "rtlppa/errors.hpp"

namespace rtlppa {

enum class Metric { area, delay, total_power, static_power };

const char* metric_name(Metric m);
// Short label used in logs, reports and CSV ("power" for total_power).
const char* metric_label(Metric m);
Metric metric_from_name(const std::string& name);

// Log-space z-score statistics for one metric, fit on the training split only.
struct NormalizationStats {
    Metric metric = Metric::area;
    double mu = 0.0;
    double sigma = 1.0;
    double epsilon = 1e-6;
};

constexpr double kDefaultEpsilon = 1e-6;

// Population mean/std of log(x + epsilon). Throws InsufficientData for fewer
// than two samples and DegenerateVariance when all log-values coincide.
NormalizationStats fit_stats(const std::vector<double>& train_values, Metric metric,
                             double epsilon = kDefaultEpsilon);

// (log(x + eps) - mu) / sigma
double normalize(const NormalizationStats& stats, double x);

// max(0, exp(sigma * xhat + mu) - eps); inverse of normalize up to the clamp.
double denormalize(const NormalizationStats& stats, double xhat);

}  // namespace rtlppa
