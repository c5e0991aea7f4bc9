#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "rng.hpp"

namespace smalljump {

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

[[nodiscard]] inline MeanEstimate mean_estimate(std::span<const double> v) {
    MeanEstimate out;
    out.n = v.size();
    if (v.empty()) return out;
    double m = 0.0, s2 = 0.0;
    std::size_t k = 0;
    for (double x : v) {
        ++k;
        const double d = x - m;
        m += d / static_cast<double>(k);
        s2 += d * (x - m);
    }
    out.mean = m;
    if (v.size() > 1) out.se = std::sqrt(s2 / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    return out;
}

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
[[nodiscard]] inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// One-sample KS statistic against a continuous cdf.
template <class Cdf>
[[nodiscard]] double ks_statistic(std::vector<double> a, Cdf&& cdf) {
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double f = cdf(a[i]);
        d = std::max({d, std::fabs(static_cast<double>(i + 1) / n - f), std::fabs(f - static_cast<double>(i) / n)});
    }
    return d;
}

// Regularized upper incomplete gamma Q(a, x).
[[nodiscard]] inline double gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int n = 0; n < 1000; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 1000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

// Goodness of fit of integer counts against Poisson(lambda); cells with expected count
// below 5 are pooled into the tail.
[[nodiscard]] inline ChiSquareResult poisson_chi_square(std::span<const std::uint64_t> counts, double lambda) {
    const double n = static_cast<double>(counts.size());
    std::uint64_t kmax = 0;
    for (auto c : counts) kmax = std::max(kmax, c);
    std::vector<double> observed(kmax + 2, 0.0);
    for (auto c : counts) observed[c] += 1.0;
    std::vector<double> obs_cells, exp_cells;
    double p = std::exp(-lambda), cum = 0.0, pooled_obs = 0.0;
    for (std::uint64_t k = 0; k <= kmax + 1; ++k) {
        if (k > 0) p *= lambda / static_cast<double>(k);
        const double expected = n * p;
        const double rest_expected = n * (1.0 - cum - p);
        if (expected >= 5.0 && rest_expected >= 5.0) {
            obs_cells.push_back(observed[k]);
            exp_cells.push_back(expected);
            cum += p;
        } else {
            for (std::uint64_t j = k; j <= kmax + 1; ++j) pooled_obs += observed[j];
            obs_cells.push_back(pooled_obs);
            exp_cells.push_back(n * (1.0 - cum));
            break;
        }
    }
    ChiSquareResult out;
    for (std::size_t i = 0; i < obs_cells.size(); ++i) {
        const double d = obs_cells[i] - exp_cells[i];
        out.statistic += d * d / exp_cells[i];
    }
    out.dof = static_cast<int>(obs_cells.size()) - 1;
    out.p_value = out.dof > 0 ? gamma_q(0.5 * out.dof, 0.5 * out.statistic) : 1.0;
    return out;
}

struct LinearFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
};

[[nodiscard]] inline LinearFit ordinary_least_squares(std::span<const double> x, std::span<const double> y) {
    LinearFit f;
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) return f;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

struct BootstrapInterval {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap of the sample mean.
[[nodiscard]] inline BootstrapInterval bootstrap_mean(std::span<const double> v, int resamples, std::uint64_t seed,
                                                      double level = 0.95) {
    BootstrapInterval out;
    if (v.empty()) return out;
    out.estimate = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    std::vector<double> means(static_cast<std::size_t>(resamples));
    Rng rng(seed, 0, StreamTag::bootstrap);
    for (int b = 0; b < resamples; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += v[rng.below(v.size())];
        means[static_cast<std::size_t>(b)] = s / static_cast<double>(v.size());
    }
    std::sort(means.begin(), means.end());
    const double alpha = 0.5 * (1.0 - level);
    auto pick = [&](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double w = pos - static_cast<double>(i);
        return i + 1 < means.size() ? means[i] * (1.0 - w) + means[i + 1] * w : means[i];
    };
    out.lo = pick(alpha);
    out.hi = pick(1.0 - alpha);
    return out;
}

}  // namespace smalljump
