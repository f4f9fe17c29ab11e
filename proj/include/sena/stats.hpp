#ifndef SENA_STATS_HPP
#define SENA_STATS_HPP

#include "error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

/**
 * @file stats.hpp
 * @brief Two-sample tests, multiple-testing corrections and correlation.
 */

namespace sena::stats {

/**
 * Direction of the alternative hypothesis. `less` means the first sample tends to be smaller.
 */
enum class Alternative { two_sided, less, greater };

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    double df = 0.0;
    std::string method;
    bool degenerate = false;
};

namespace detail {

// 7-point Gauss and 15-point Kronrod abscissae and weights on [-1, 1].
constexpr std::array<double, 8> kronrod_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kronrod_w = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> gauss_w = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780, 0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

template<typename Fun_>
std::pair<double, double> gauss_kronrod(const Fun_& f, double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * kronrod_w[7];
    double gauss = fc * gauss_w[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kronrod_x[i];
        const double fsum = f(center - dx) + f(center + dx);
        kronrod += kronrod_w[i] * fsum;
        if (i % 2 == 1) {
            gauss += gauss_w[i / 2] * fsum;
        }
    }
    return {kronrod * half, std::abs((kronrod - gauss) * half)};
}

template<typename Fun_>
double adaptive_integrate(const Fun_& f, double a, double b, double tolerance, int depth = 0) {
    auto [value, err] = gauss_kronrod(f, a, b);
    if (err <= tolerance || depth >= 50) {
        return value;
    }
    const double mid = 0.5 * (a + b);
    return adaptive_integrate(f, a, mid, 0.5 * tolerance, depth + 1) + adaptive_integrate(f, mid, b, 0.5 * tolerance, depth + 1);
}

}

/**
 * Adaptive Gauss-Kronrod quadrature of `f` over [a, b] to the requested absolute error.
 */
template<typename Fun_>
double integrate(const Fun_& f, double a, double b, double tolerance = 1e-12) {
    return detail::adaptive_integrate(f, a, b, tolerance);
}

inline double student_t_density(double x, double df) {
    const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi);
    return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df));
}

/**
 * Upper tail P(T > t) of Student's t distribution, by numerical integration of the density.
 * Large arguments are integrated through the substitution x = t / w so the tail keeps relative accuracy.
 */
inline double student_t_upper_tail(double t, double df) {
    if (!(df > 0.0)) {
        throw Error(ErrorKind::domain, "t distribution requires positive degrees of freedom");
    }
    if (std::isinf(t)) {
        return t > 0 ? 0.0 : 1.0;
    }
    if (t < 0.0) {
        return 1.0 - student_t_upper_tail(-t, df);
    }
    auto density = [df](double x) { return student_t_density(x, df); };
    if (t <= 1.0) {
        return 0.5 - integrate(density, 0.0, t, 1e-13);
    }
    auto transformed = [df, t](double w) {
        if (w <= 0.0) {
            return 0.0;
        }
        const double x = t / w;
        return student_t_density(x, df) * t / (w * w);
    };
    return integrate(transformed, 0.0, 1.0, 1e-13);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v;
    }
    return s / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) {
        s += (v - m) * (v - m);
    }
    return s / static_cast<double>(x.size() - 1);
}

/**
 * Welch's unequal-variance t-test with Satterthwaite degrees of freedom.
 */
inline TestResult welch_t(std::span<const double> a, std::span<const double> b, Alternative alt = Alternative::two_sided) {
    if (a.size() < 2 || b.size() < 2) {
        throw Error(ErrorKind::insufficient_sample, "Welch t-test needs at least two values per sample");
    }
    TestResult res;
    res.method = "welch_t";
    res.n_a = a.size();
    res.n_b = b.size();

    const double ma = mean(a), mb = mean(b);
    const double va = sample_variance(a) / static_cast<double>(a.size());
    const double vb = sample_variance(b) / static_cast<double>(b.size());
    const double se2 = va + vb;

    if (se2 == 0.0) {
        res.degenerate = true;
        if (ma == mb) {
            res.statistic = 0.0;
            res.p_value = 1.0;
            return res;
        }
        res.statistic = ma > mb ? INFINITY : -INFINITY;
        const bool supports = alt == Alternative::two_sided || (alt == Alternative::greater) == (ma > mb);
        res.p_value = supports ? 0.0 : 1.0;
        return res;
    }

    res.statistic = (ma - mb) / std::sqrt(se2);
    res.df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    const double upper = student_t_upper_tail(res.statistic, res.df);
    switch (alt) {
        case Alternative::greater: res.p_value = upper; break;
        case Alternative::less: res.p_value = 1.0 - upper; break;
        case Alternative::two_sided: res.p_value = 2.0 * std::min(upper, 1.0 - upper); break;
    }
    res.p_value = std::clamp(res.p_value, 0.0, 1.0);
    return res;
}

/**
 * Mid-ranks (1-based) of the pooled values, with ties sharing the average rank.
 */
inline std::vector<double> mid_ranks(std::span<const double> pooled) {
    std::vector<std::size_t> order(pooled.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return pooled[l] < pooled[r]; });
    std::vector<double> ranks(pooled.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

/**
 * Mann-Whitney U test. `statistic` is U for the first sample.
 *
 * When `n_a * n_b <= exact_limit` the p-value comes from the exact permutation distribution
 * of the mid-rank sum, counted by dynamic programming over subsets of the smaller sample.
 * Otherwise a normal approximation with tie and continuity corrections is used.
 */
inline TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b, Alternative alt = Alternative::two_sided,
    std::size_t exact_limit = 400) {
    if (a.empty() || b.empty()) {
        throw Error(ErrorKind::insufficient_sample, "Mann-Whitney test needs non-empty samples");
    }
    const std::size_t n = a.size(), m = b.size(), total = n + m;
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto ranks = mid_ranks(pooled);

    double rank_sum_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rank_sum_a += ranks[i];
    }
    const double nm = static_cast<double>(n) * static_cast<double>(m);
    const double u_a = rank_sum_a - 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);

    TestResult res;
    res.statistic = u_a;
    res.n_a = n;
    res.n_b = m;

    double p_less = 1.0, p_greater = 1.0;
    if (n * m <= exact_limit) {
        res.method = "mann_whitney_exact";
        // Doubled mid-ranks are integers.
        std::vector<long> twice(total);
        long twice_total = 0;
        for (std::size_t i = 0; i < total; ++i) {
            twice[i] = std::lround(2.0 * ranks[i]);
            twice_total += twice[i];
        }
        const bool small_is_a = n <= m;
        const std::size_t k = small_is_a ? n : m;
        const std::size_t max_sum = static_cast<std::size_t>(twice_total);

        // counts[j][s]: number of j-subsets of the items seen so far with doubled rank sum s.
        std::vector<std::vector<double>> counts(k + 1, std::vector<double>(max_sum + 1, 0.0));
        counts[0][0] = 1.0;
        for (std::size_t item = 0; item < total; ++item) {
            const std::size_t r = static_cast<std::size_t>(twice[item]);
            for (std::size_t j = std::min(k, item + 1); j >= 1; --j) {
                auto& dst = counts[j];
                const auto& src = counts[j - 1];
                for (std::size_t s = max_sum; s >= r; --s) {
                    dst[s] += src[s - r];
                    if (s == r) {
                        break;
                    }
                }
            }
        }

        const double offset = 0.5 * static_cast<double>(k) * static_cast<double>(k + 1);
        double below = 0.0, above = 0.0, all = 0.0;
        const double slack = 1e-9;
        for (std::size_t s = 0; s <= max_sum; ++s) {
            const double c = counts[k][s];
            if (c == 0.0) {
                continue;
            }
            const double u_small = 0.5 * static_cast<double>(s) - offset;
            const double u_first = small_is_a ? u_small : nm - u_small;
            all += c;
            if (u_first <= u_a + slack) {
                below += c;
            }
            if (u_first >= u_a - slack) {
                above += c;
            }
        }
        p_less = below / all;
        p_greater = above / all;
    } else {
        res.method = "mann_whitney_normal";
        std::vector<double> sorted = pooled;
        std::sort(sorted.begin(), sorted.end());
        double tie_term = 0.0;
        std::size_t i = 0;
        while (i < sorted.size()) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) {
                ++j;
            }
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
        const double N = static_cast<double>(total);
        const double var = nm / 12.0 * ((N + 1.0) - tie_term / (N * (N - 1.0)));
        if (var <= 0.0) {
            p_less = p_greater = 1.0;
        } else {
            const double sd = std::sqrt(var);
            p_less = normal_cdf((u_a + 0.5 - 0.5 * nm) / sd);
            p_greater = 1.0 - normal_cdf((u_a - 0.5 - 0.5 * nm) / sd);
        }
    }

    switch (alt) {
        case Alternative::less: res.p_value = p_less; break;
        case Alternative::greater: res.p_value = p_greater; break;
        case Alternative::two_sided: res.p_value = 2.0 * std::min(p_less, p_greater); break;
    }
    res.p_value = std::clamp(res.p_value, 0.0, 1.0);
    return res;
}

/**
 * Benjamini-Hochberg step-up adjustment, returned in input order.
 */
inline std::vector<double> bh_adjust(std::span<const double> p) {
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return p[l] < p[r]; });
    std::vector<double> out(m);
    double running = 1.0;
    for (std::size_t rank = m; rank >= 1; --rank) {
        const std::size_t idx = order[rank - 1];
        running = std::min(running, std::max(p[idx], p[idx] * static_cast<double>(m) / static_cast<double>(rank)));
        out[idx] = std::min(1.0, running);
    }
    return out;
}

inline std::vector<double> bonferroni_adjust(std::span<const double> p) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        out[i] = std::min(1.0, p[i] * static_cast<double>(p.size()));
    }
    return out;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorKind::dimension, "pearson: length mismatch");
    }
    if (x.size() < 2) {
        throw Error(ErrorKind::undefined_correlation, "pearson needs at least two points");
    }
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::undefined_correlation, "pearson: zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/**
 * Central acceptance interval for the fraction of successes in `trials` Bernoulli(p) draws,
 * holding at least `level` of the exact binomial mass.
 */
inline std::pair<double, double> binomial_interval(std::size_t trials, double p, double level = 0.99) {
    const double tail = 0.5 * (1.0 - level);
    const double n = static_cast<double>(trials);
    double cdf = 0.0;
    std::size_t lo = 0, hi = trials;
    bool lo_set = false;
    for (std::size_t k = 0; k <= trials; ++k) {
        const double kk = static_cast<double>(k);
        const double logpmf = std::lgamma(n + 1) - std::lgamma(kk + 1) - std::lgamma(n - kk + 1) + kk * std::log(p) + (n - kk) * std::log1p(-p);
        const double before = cdf;
        cdf += std::exp(logpmf);
        if (!lo_set && cdf > tail) {
            lo = k;
            lo_set = true;
        }
        if (before < 1.0 - tail && cdf >= 1.0 - tail) {
            hi = k;
            break;
        }
    }
    return {static_cast<double>(lo) / n, static_cast<double>(hi) / n};
}

}

#endif
