#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "sednoise/errors.hpp"

namespace sednoise::stats {

inline double mean(std::span<const double> x) {
    if (x.empty()) throw ArgumentError("mean of an empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double sample_stddev(std::span<const double> x) {
    if (x.size() < 2) throw ArgumentError("sample standard deviation needs at least 2 values");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Two-sided Student-t quantile t_{p, dof}.
inline double student_t_quantile(double p, std::size_t dof) {
    boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, p);
}

/// Half-width of the 95% confidence interval of the mean: t_{0.975, n-1} * s / sqrt(n).
inline double ci95_halfwidth(std::span<const double> x) {
    const double s = sample_stddev(x);
    if (s == 0.0) return 0.0;
    return student_t_quantile(0.975, x.size() - 1) * s / std::sqrt(static_cast<double>(x.size()));
}

inline double median(std::vector<double> x) {
    if (x.empty()) throw ArgumentError("median of an empty sample");
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

}  // namespace sednoise::stats
