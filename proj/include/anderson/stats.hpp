#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "anderson/errors.hpp"

// Small statistics toolbox: Wilson score intervals for proportions,
// normal-approximation intervals for means, Neumaier compensated summation,
// and unweighted log-log regression for scaling exponents.

namespace anderson {

inline constexpr double kZ95 = 1.959963984540054; // two-sided 95% normal quantile

struct Interval95 {
    double lo = 0.0;
    double hi = 0.0;
    double halfwidth() const { return 0.5 * (hi - lo); }
};

// Wilson score interval for a binomial proportion.
inline Interval95 wilson_interval(long hits, long n) {
    if (n < 1) throw validation_error("Wilson interval requires n >= 1");
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    const double z2 = kZ95 * kZ95;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return Interval95{center - half, center + half};
}

// Normal-approximation halfwidth for a sample mean given sum and sum of squares.
inline double mean_ci_halfwidth(double sum, double sum_sq, long n) {
    if (n < 2) return 0.0;
    const double mean = sum / n;
    double var = (sum_sq - n * mean * mean) / (n - 1);
    if (var < 0.0) var = 0.0;
    return kZ95 * std::sqrt(var / n);
}

// Neumaier compensated accumulator; deterministic for a fixed input order.
struct CompensatedSum {
    double sum = 0.0;
    double compensation = 0.0;

    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            compensation += (sum - t) + x;
        else
            compensation += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + compensation; }
};

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
};

// Unweighted least squares of log(value) against log(scale).
inline LogLogFit fit_log_slope(const std::vector<double>& scales, const std::vector<double>& values) {
    if (scales.size() != values.size() || scales.size() < 2)
        throw validation_error("log-log fit needs at least two (scale, value) pairs");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(scales.size());
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (!(scales[i] > 0.0)) throw validation_error("log-log fit requires positive scales");
        if (!(values[i] > 0.0))
            throw compute_error("log-log fit requires positive values (an estimate was zero; raise n_realizations)");
        const double x = std::log(scales[i]);
        const double y = std::log(values[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    if (!(denom > 0.0)) throw validation_error("log-log fit requires distinct scales");
    LogLogFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    return fit;
}

} // namespace anderson
