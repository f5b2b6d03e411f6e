#pragma once

// Student t and F tail probabilities via the regularized incomplete beta
// function, evaluated with the modified Lentz continued fraction.

#include <cmath>
#include <limits>
#include <utility>

#include "neus/error.hpp"

namespace neus::stats {

namespace detail {

// Continued fraction for I_x(a, b); converges quickly for x < (a + 1) / (a + b + 2).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int max_iterations = 10000;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < eps) return h;
    }
    fail(ErrorKind::numerical, "incomplete beta: continued fraction did not converge");
}

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

} // namespace detail

/// Returns {I_x(a, b), 1 - I_x(a, b)}, each evaluated without cancellation on
/// the side where the continued fraction is used directly.
inline std::pair<double, double> incomplete_beta_pair(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::numerical, "incomplete beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::numerical, "incomplete beta: x outside [0, 1]");
    if (x == 0.0) return {0.0, 1.0};
    if (x == 1.0) return {1.0, 0.0};
    const double log_front = a * std::log(x) + b * std::log1p(-x) - detail::log_beta(a, b);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        const double lower = std::exp(log_front) * detail::beta_continued_fraction(a, b, x) / a;
        return {lower, 1.0 - lower};
    }
    const double upper = std::exp(log_front) * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
    return {1.0 - upper, upper};
}

inline double incomplete_beta(double a, double b, double x) {
    return incomplete_beta_pair(a, b, x).first;
}

/// P(|T| >= |t|) for Student t with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) fail(ErrorKind::numerical, "t distribution: df must be positive");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    const double t2 = t * t;
    // P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2); use the complement form for small t
    if (t2 < df) {
        return incomplete_beta_pair(0.5, df / 2.0, t2 / (df + t2)).second;
    }
    return incomplete_beta_pair(df / 2.0, 0.5, df / (df + t2)).first;
}

/// P(T <= t).
inline double t_cdf(double t, double df) {
    const double tail = t_two_sided_p(t, df) / 2.0;
    return t < 0 ? tail : 1.0 - tail;
}

/// Upper tail P(F >= f) for the F distribution with (d1, d2) degrees of freedom.
inline double f_upper_tail(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) fail(ErrorKind::numerical, "F distribution: df must be positive");
    if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    const double x = d1 * f / (d1 * f + d2);
    // P(F >= f) = 1 - I_x(d1/2, d2/2) = I_{1-x}(d2/2, d1/2)
    return incomplete_beta_pair(d1 / 2.0, d2 / 2.0, x).second;
}

inline double f_cdf(double f, double d1, double d2) {
    if (f <= 0.0) return 0.0;
    const double x = d1 * f / (d1 * f + d2);
    return incomplete_beta_pair(d1 / 2.0, d2 / 2.0, x).first;
}

} // namespace neus::stats
