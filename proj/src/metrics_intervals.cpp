#include "matkit/metrics/intervals.hpp"

#include <algorithm>
#include <cmath>

namespace matkit::metrics {

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidCounts("quantile argument must be in (0,1)");
    // Acklam's rational approximation.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double q, x;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Two Newton refinements against the exact CDF.
    for (int i = 0; i < 2; ++i) {
        double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
        double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        if (pdf > 0.0) x -= (cdf - p) / pdf;
    }
    return x;
}

namespace {

double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3.0e-16;
    const double fpmin = 1.0e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                b * std::log(1.0 - x);
    double front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

namespace {

double beta_quantile(double p, double a, double b) {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (reg_inc_beta(a, b, mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

void check_counts(int k, int n) {
    if (n < 1 || k < 0 || k > n)
        throw InvalidCounts("need 0 <= k <= n, n >= 1; got k=" + std::to_string(k) +
                            " n=" + std::to_string(n));
}

}  // namespace

ConfidenceInterval wilson(int k, int n, double level) {
    check_counts(k, n);
    double z = normal_quantile(0.5 + level / 2.0);
    double nn = static_cast<double>(n);
    double p_hat = static_cast<double>(k) / nn;
    double z2 = z * z;
    double denom = 1.0 + z2 / nn;
    double center = (p_hat + z2 / (2.0 * nn)) / denom;
    double half = z * std::sqrt(p_hat * (1.0 - p_hat) / nn + z2 / (4.0 * nn * nn)) / denom;
    ConfidenceInterval ci;
    // boundary cases pin exactly; roundoff otherwise leaves ~1e-17 residue
    ci.lower = k == 0 ? 0.0 : std::max(0.0, center - half);
    ci.upper = k == n ? 1.0 : std::min(1.0, center + half);
    ci.method = "Wilson";
    ci.level = level;
    return ci;
}

ConfidenceInterval clopper_pearson(int k, int n, double level) {
    check_counts(k, n);
    double alpha = 1.0 - level;
    ConfidenceInterval ci;
    ci.method = "ClopperPearson";
    ci.level = level;
    ci.lower = k == 0 ? 0.0 : beta_quantile(alpha / 2.0, k, n - k + 1);
    ci.upper = k == n ? 1.0 : beta_quantile(1.0 - alpha / 2.0, k + 1, n - k);
    return ci;
}

std::optional<ConfidenceInterval> bootstrap_indices(
    int n, const std::function<std::optional<double>(const std::vector<int>&)>& statistic,
    int resamples, std::uint64_t seed, double level) {
    if (n < 1 || resamples < 1) throw InvalidCounts("bootstrap needs n >= 1, resamples >= 1");
    Rng rng = substream(seed, "bootstrap");
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(resamples));
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int r = 0; r < resamples; ++r) {
        for (int i = 0; i < n; ++i)
            idx[static_cast<std::size_t>(i)] =
                static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        auto s = statistic(idx);
        if (s) stats.push_back(*s);
    }
    if (stats.empty()) return std::nullopt;
    std::sort(stats.begin(), stats.end());
    auto pick = [&stats](double q) {
        double pos = q * static_cast<double>(stats.size() - 1);
        auto i = static_cast<std::size_t>(std::llround(pos));
        return stats[std::min(i, stats.size() - 1)];
    };
    ConfidenceInterval ci;
    ci.lower = pick((1.0 - level) / 2.0);
    ci.upper = pick((1.0 + level) / 2.0);
    ci.method = "Bootstrap";
    ci.level = level;
    return ci;
}

std::optional<ConfidenceInterval> bootstrap_ci(
    const std::vector<double>& values,
    const std::function<std::optional<double>(const std::vector<double>&)>& statistic,
    int resamples, std::uint64_t seed, double level) {
    std::vector<double> sample(values.size());
    return bootstrap_indices(
        static_cast<int>(values.size()),
        [&](const std::vector<int>& idx) {
            for (std::size_t i = 0; i < idx.size(); ++i)
                sample[i] = values[static_cast<std::size_t>(idx[i])];
            return statistic(sample);
        },
        resamples, seed, level);
}

}  // namespace matkit::metrics
