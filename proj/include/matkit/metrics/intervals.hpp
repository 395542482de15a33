#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "matkit/common.hpp"

namespace matkit::metrics {

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 1.0;
    std::string method;
    double level = 0.95;
};

/// Standard normal quantile, accurate to ~1e-14 (rational approximation plus
/// a Newton refinement against erfc).
double normal_quantile(double p);

/// Regularized incomplete beta I_x(a, b) via continued fraction.
double reg_inc_beta(double a, double b, double x);

/// Wilson score interval for k successes out of n. Throws InvalidCounts.
ConfidenceInterval wilson(int k, int n, double level = 0.95);

/// Clopper-Pearson exact interval (beta quantiles; closed boundaries at
/// k = 0 and k = n). Throws InvalidCounts.
ConfidenceInterval clopper_pearson(int k, int n, double level = 0.95);

/// Seeded percentile bootstrap over index resampling. The statistic may
/// return nullopt for degenerate resamples (they are skipped); the result is
/// absent when every resample was degenerate.
std::optional<ConfidenceInterval> bootstrap_indices(
    int n, const std::function<std::optional<double>(const std::vector<int>&)>& statistic,
    int resamples, std::uint64_t seed, double level = 0.95);

/// Percentile bootstrap of a statistic of a value vector.
std::optional<ConfidenceInterval> bootstrap_ci(
    const std::vector<double>& values,
    const std::function<std::optional<double>(const std::vector<double>&)>& statistic,
    int resamples, std::uint64_t seed, double level = 0.95);

}  // namespace matkit::metrics
