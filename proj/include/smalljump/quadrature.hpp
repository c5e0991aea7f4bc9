#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "errors.hpp"

namespace smalljump {

struct QuadratureOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-300;
    int max_subdivisions = 4000;
};

struct QuadratureResult {
    double value = 0.0;
    double abs_error = 0.0;
    int evaluations = 0;
    bool converged = false;
};

namespace detail {

inline constexpr std::array<double, 8> gk15_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> gk15_wk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gk15_wg = {0.129484966168869693270611432679082,
                                                  0.279705391489276667901467771423780,
                                                  0.381830050505118944950369775488975,
                                                  0.417959183673469387755102040816327};

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double rk = fc * gk15_wk[7];
    double rg = fc * gk15_wg[3];
    double rabs = std::fabs(rk);
    std::array<double, 7> f1{}, f2{};
    for (int j = 0; j < 7; ++j) {
        const double dx = h * gk15_x[j];
        f1[j] = f(c - dx);
        f2[j] = f(c + dx);
        rk += gk15_wk[j] * (f1[j] + f2[j]);
        rabs += gk15_wk[j] * (std::fabs(f1[j]) + std::fabs(f2[j]));
        if (j % 2 == 1) rg += gk15_wg[j / 2] * (f1[j] + f2[j]);
    }
    const double mean = 0.5 * rk;
    double rasc = gk15_wk[7] * std::fabs(fc - mean);
    for (int j = 0; j < 7; ++j) rasc += gk15_wk[j] * (std::fabs(f1[j] - mean) + std::fabs(f2[j] - mean));
    double err = std::fabs((rk - rg) * h);
    rasc *= std::fabs(h);
    rabs *= std::fabs(h);
    if (rasc != 0.0 && err != 0.0) err = rasc * std::min(1.0, std::pow(200.0 * err / rasc, 1.5));
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (rabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * rabs, err);
    return {a, b, rk * h, err};
}

}  // namespace detail

// Adaptive Gauss-Kronrod (7/15) on a finite interval, bisecting the worst segment.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
    QuadratureResult out;
    if (a == b) {
        out.converged = true;
        return out;
    }
    double sign = 1.0;
    if (b < a) {
        std::swap(a, b);
        sign = -1.0;
    }
    std::priority_queue<detail::Segment> heap;
    auto first = detail::gk15(f, a, b);
    heap.push(first);
    double total = first.value;
    double err = first.error;
    int evals = 15;
    int splits = 0;
    while (err > std::max(opt.abs_tol, opt.rel_tol * std::fabs(total)) && splits < opt.max_subdivisions) {
        const auto worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            heap.push(worst);
            break;
        }
        auto left = detail::gk15(f, worst.a, mid);
        auto right = detail::gk15(f, mid, worst.b);
        evals += 30;
        ++splits;
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to remove drift from incremental updates.
    double sum = 0.0, esum = 0.0;
    while (!heap.empty()) {
        sum += heap.top().value;
        esum += heap.top().error;
        heap.pop();
    }
    out.value = sign * sum;
    out.abs_error = esum;
    out.evaluations = evals;
    out.converged = esum <= std::max(opt.abs_tol, opt.rel_tol * std::fabs(sum)) && std::isfinite(sum);
    return out;
}

// Integral over [a, inf) through x = a + t/(1-t).
template <class F>
QuadratureResult integrate_to_infinity(F&& f, double a, const QuadratureOptions& opt = {}) {
    auto g = [&](double t) {
        const double s = 1.0 - t;
        const double v = f(a + t / s);
        return v / (s * s);
    };
    return integrate(g, 0.0, 1.0, opt);
}

// Integral over (0, eps] of an integrand that may be singular at 0, via z = eps*exp(-u).
template <class F>
QuadratureResult integrate_near_zero(F&& f, double eps, const QuadratureOptions& opt = {}) {
    if (!(eps > 0.0)) return {0.0, 0.0, 0, true};
    auto g = [&](double u) {
        const double z = eps * std::exp(-u);
        if (z == 0.0) return 0.0;
        const double v = f(z) * z;
        if (!std::isfinite(v) && z < 1e-150) return 0.0;
        return v;
    };
    return integrate_to_infinity(g, 0.0, opt);
}

template <class F>
double integrate_or_throw(F&& f, double a, double b, const std::string& what, const QuadratureOptions& opt = {}) {
    const auto r = integrate(f, a, b, opt);
    if (!r.converged)
        throw NumericalError(what + ": quadrature did not converge (estimate " + std::to_string(r.value) +
                             ", error " + std::to_string(r.abs_error) + ")");
    return r.value;
}

// Double-exponential rule, used as an independent cross-check.
template <class F>
QuadratureResult integrate_tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12, int max_level = 12) {
    const double half = 0.5 * (b - a);
    const double pi2 = 0.5 * 3.14159265358979323846;
    auto term = [&](double t, double& weight) {
        const double s = pi2 * std::sinh(t);
        const double e = std::exp(2.0 * std::fabs(s));
        const double comp = 2.0 / (1.0 + e);  // 1 - tanh|s|
        const double ch = std::cosh(s);
        weight = half * pi2 * std::cosh(t) / (ch * ch);
        return comp;
    };
    QuadratureResult out;
    double h = 1.0;
    const double tmax = 3.2;
    double w0 = half * pi2;
    double sum = w0 * f(a + half);
    int evals = 1;
    for (double t = h; t <= tmax; t += h) {
        double w;
        const double comp = term(t, w);
        const double d = (b - a) * 0.5 * comp;
        if (d <= 0.0) break;
        sum += w * (f(a + d) + f(b - d));
        evals += 2;
    }
    double prev = sum * h;
    for (int level = 1; level <= max_level; ++level) {
        h *= 0.5;
        for (double t = h; t <= tmax; t += 2.0 * h) {
            double w;
            const double comp = term(t, w);
            const double d = (b - a) * 0.5 * comp;
            if (d <= 0.0) break;
            sum += w * (f(a + d) + f(b - d));
            evals += 2;
        }
        const double cur = sum * h;
        if (level >= 3 && std::fabs(cur - prev) <= rel_tol * std::fabs(cur)) {
            out.value = cur;
            out.abs_error = std::fabs(cur - prev);
            out.evaluations = evals;
            out.converged = true;
            return out;
        }
        prev = cur;
    }
    out.value = prev;
    out.evaluations = evals;
    out.converged = false;
    return out;
}

}  // namespace smalljump
