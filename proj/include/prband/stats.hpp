#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "prband/rng.hpp"

namespace prband {

/// Mean and population variance (E[v^2] - E[v]^2 form), computed with
/// centered sums so the variance never goes negative.
inline std::pair<double, double> mean_variance(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_variance: empty input");
    bool constant = true;
    for (double v : values) constant = constant && v == values[0];
    if (constant) return {values[0], 0.0};
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return {mean, acc / static_cast<double>(values.size())};
}

inline std::pair<double, double> scalar_uncertainty(std::span<const double> values) {
    return mean_variance(values);
}

/// Linear interpolation between closest order statistics at rank
/// h = (n-1)*p/100 (the "type 7" rule). p is a percentage in [0, 100].
inline double quantile(std::span<const double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile: empty input");
    if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("quantile: p must be in [0, 100]");
    std::vector<double> v(values.begin(), values.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double x_lo = v[lo];
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(hi), v.end());
    const double x_hi = v[hi];
    return x_lo + (h - std::floor(h)) * (x_hi - x_lo);
}

// ---------------------------------------------------------------------------
// Student-t survival function via the regularized incomplete beta function.

namespace detail {

/// Continued-fraction core of the incomplete beta function (modified Lentz).
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0 && b > 0)) throw std::invalid_argument("incomplete_beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// P(T > t) for Student's t with df degrees of freedom.
inline double student_t_sf(double t, double df) {
    if (!(df > 0)) throw std::invalid_argument("student_t_sf: df must be positive");
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0 ? tail : 1.0 - tail;
}

// ---------------------------------------------------------------------------
// Paired tests

struct TTestResult {
    double t = 0.0;
    double p = 0.5;
};

/// Paired t-test on differences d = b - a with sample (M-1 divisor)
/// standard deviation. One-sided by default: p is the upper-tail
/// probability, small when b exceeds a. All-zero differences return
/// (0, 0.5) by convention.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                                 bool two_sided = false) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    const std::size_t m = a.size();
    if (m < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");

    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += b[i] - a[i];
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double d = (b[i] - a[i]) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(m - 1));

    TTestResult r;
    if (sd == 0.0) {
        if (mean == 0.0) return {0.0, 0.5};
        r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
        r.p = mean > 0 ? 0.0 : 1.0;
        if (two_sided) r.p = 0.0;
        return r;
    }
    r.t = mean / (sd / std::sqrt(static_cast<double>(m)));
    const double df = static_cast<double>(m - 1);
    r.p = two_sided ? 2.0 * student_t_sf(std::fabs(r.t), df) : student_t_sf(r.t, df);
    return r;
}

/// Seeded sign-flip permutation test on paired differences. p uses the
/// add-one convention, so it never reaches zero.
inline double permutation_test_p(std::span<const double> a, std::span<const double> b,
                                 int resamples, std::uint64_t seed, bool two_sided = false) {
    if (a.size() != b.size()) throw std::invalid_argument("permutation_test_p: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("permutation_test_p: need at least two pairs");
    if (resamples < 1) throw std::invalid_argument("permutation_test_p: resamples must be >= 1");

    const std::size_t m = a.size();
    std::vector<double> d(m);
    double observed = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        d[i] = b[i] - a[i];
        observed += d[i];
    }
    observed /= static_cast<double>(m);

    Rng rng(seed);
    int hits = 0;
    for (int r = 0; r < resamples; ++r) {
        double s = 0.0;
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if (i % 64 == 0) bits = rng.next_u64();
            s += (bits >> (i % 64)) & 1u ? d[i] : -d[i];
        }
        s /= static_cast<double>(m);
        if (two_sided ? std::fabs(s) >= std::fabs(observed) : s >= observed) ++hits;
    }
    return (1.0 + hits) / (1.0 + resamples);
}

/// Holm step-down adjustment. Returns adjusted p-values in input order.
inline std::vector<double> holm_adjust(std::span<const double> p_values) {
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });

    std::vector<double> adjusted(m);
    double running = 0.0;
    for (std::size_t rank = 0; rank < m; ++rank) {
        const double scaled = static_cast<double>(m - rank) * p_values[order[rank]];
        running = std::max(running, std::min(1.0, scaled));
        adjusted[order[rank]] = running;
    }
    return adjusted;
}

}  // namespace prband
