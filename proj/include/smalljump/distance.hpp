#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "stats.hpp"
#include "test_functions.hpp"

namespace smalljump {

// Generator gap.

struct GeneratorGap {
    double gap_sup = 0.0;
    double bound = 0.0;
    double argmax_x = 0.0;
    std::vector<double> L;      // L_s phi on the grid
    std::vector<double> L_eps;  // L_s^eps phi on the grid
    std::vector<double> gap;    // (L_s - L_s^eps) phi, integrated directly
};

inline GeneratorGap generator_gap(const LevyModel& model, const TestFunction& phi, double eps,
                                  const std::vector<double>& x_grid, double s = 0.0,
                                  const QuadratureOptions& opt = {1e-11, 1e-13, 4000}) {
    if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps out of (0,1]");
    GeneratorGap out;
    out.bound = phi.norm_bound() / 6.0 * eta_p(model, 3, eps);
    const auto& mu = model.mu;
    auto q = [&](auto&& f, double lo, double hi) {
        const auto r = mu.integrate(f, lo, hi, opt);
        if (!std::isfinite(r.value)) throw NumericalError("generator_gap: quadrature failed");
        return r.value;
    };
    for (double x : x_grid) {
        const double f0 = phi(x), f1 = phi.derivative(1, x), f2 = phi.derivative(2, x), f3 = phi.derivative(3, x);
        auto jump = [&](double z) { return phi(x + model.c.c(s, z, x)) - f0; };
        // Taylor form for tiny jumps; the plain difference is rounding noise against a z^(-1-rho) weight.
        auto jump_small = [&](double z) {
            const double c = model.c.c(s, z, x);
            if (std::fabs(c) < 1e-4) return c * (f1 + c * (0.5 * f2 + c * f3 / 6.0));
            return phi(x + c) - f0;
        };
        auto remainder = [&](double z) {
            const double c = model.c.c(s, z, x);
            if (std::fabs(c) < 1e-4) return f3 * c * c * c / 6.0;
            return phi(x + c) - f0 - f1 * c - 0.5 * f2 * c * c;
        };
        const double big = q(jump, eps, 1.0);
        const double small = q(jump_small, 0.0, eps);
        const double b = b_eps(model, s, x, eps, opt);
        const double a = a_eps(model, s, x, eps, opt);
        out.L.push_back(big + small);
        out.L_eps.push_back(big + f1 * b + 0.5 * f2 * a);
        const double g = q(remainder, 0.0, eps);
        out.gap.push_back(g);
        if (std::fabs(g) > out.gap_sup) {
            out.gap_sup = std::fabs(g);
            out.argmax_x = x;
        }
    }
    return out;
}

// Total variation via kernel density estimates.

struct TvEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
    double bandwidth = 0.0;
    bool supported = true;
};

[[nodiscard]] inline double silverman_bandwidth(const std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    std::vector<double> s = v;
    const auto q = [&](double p) {
        const auto k = static_cast<std::size_t>(p * (n - 1.0));
        std::nth_element(s.begin(), s.begin() + static_cast<long>(k), s.end());
        return s[k];
    };
    const double iqr = q(0.75) - q(0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * spread * std::pow(n, -0.2);
}

namespace detail {

// Binned Gaussian KDE on a uniform grid.
inline std::vector<double> kde_on_grid(const std::vector<double>& v, double lo, double step, int points, double h) {
    std::vector<double> bins(static_cast<std::size_t>(points), 0.0);
    for (double x : v) {
        const double pos = (x - lo) / step;
        const int i = static_cast<int>(std::floor(pos));
        const double w = pos - i;
        if (i >= 0 && i < points) bins[static_cast<std::size_t>(i)] += 1.0 - w;
        if (i + 1 >= 0 && i + 1 < points) bins[static_cast<std::size_t>(i) + 1] += w;
    }
    const int half = static_cast<int>(std::ceil(6.0 * h / step));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    const double norm = 1.0 / (static_cast<double>(v.size()) * h * std::sqrt(2.0 * 3.14159265358979323846));
    for (int j = -half; j <= half; ++j) {
        const double u = j * step / h;
        kernel[static_cast<std::size_t>(j + half)] = norm * std::exp(-0.5 * u * u);
    }
    std::vector<double> dens(static_cast<std::size_t>(points), 0.0);
    for (int i = 0; i < points; ++i) {
        const double bi = bins[static_cast<std::size_t>(i)];
        if (bi == 0.0) continue;
        const int j0 = std::max(0, i - half), j1 = std::min(points - 1, i + half);
        for (int j = j0; j <= j1; ++j) dens[static_cast<std::size_t>(j)] += bi * kernel[static_cast<std::size_t>(j - i + half)];
    }
    return dens;
}

inline double tv_fixed(const std::vector<double>& a, const std::vector<double>& b, double h, int points) {
    const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    const double lo = std::min(*amin, *bmin) - 3.0 * h;
    const double hi = std::max(*amax, *bmax) + 3.0 * h;
    const double step = (hi - lo) / (points - 1);
    const auto p = kde_on_grid(a, lo, step, points, h);
    const auto q = kde_on_grid(b, lo, step, points, h);
    double s = 0.0;
    for (int i = 0; i < points; ++i) {
        const double d = std::fabs(p[static_cast<std::size_t>(i)] - q[static_cast<std::size_t>(i)]);
        s += (i == 0 || i == points - 1) ? 0.5 * d : d;
    }
    return std::clamp(0.5 * s * step, 0.0, 1.0);
}

}  // namespace detail

struct TvOptions {
    double bandwidth_factor = 0.8;
    int grid_points = 4096;
    int splits = 8;
    std::uint64_t seed = 7;
    bool paired = true;  // split halves keep a and b draws with the same index together
};

// Half the L1 distance between Gaussian KDEs with Silverman bandwidth times a factor,
// using the mean of the two bandwidths. Standard error from repeated split halves.
inline TvEstimate tv_kde(const std::vector<double>& a, const std::vector<double>& b, const TvOptions& opt = {}) {
    TvEstimate out;
    if (a.size() < 2 || b.size() < 2) {
        out.supported = false;
        return out;
    }
    const double ha = silverman_bandwidth(a), hb = silverman_bandwidth(b);
    if (!(ha > 0.0) || !(hb > 0.0)) {
        out.supported = false;
        return out;
    }
    const double h = opt.bandwidth_factor * 0.5 * (ha + hb);
    out.bandwidth = h;
    out.estimate = detail::tv_fixed(a, b, h, opt.grid_points);
    if (opt.splits > 0) {
        double acc = 0.0;
        const bool paired = opt.paired && a.size() == b.size();
        for (int r = 0; r < opt.splits; ++r) {
            Rng rng(opt.seed, static_cast<std::uint64_t>(r), StreamTag::kde_split);
            auto split = [&](const std::vector<double>& v, std::vector<std::size_t>& idx) {
                idx.resize(v.size());
                std::iota(idx.begin(), idx.end(), std::size_t{0});
                for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
            };
            std::vector<std::size_t> ia, ib;
            split(a, ia);
            if (paired) ib = ia;
            else split(b, ib);
            auto half = [](const std::vector<double>& v, const std::vector<std::size_t>& idx, bool first) {
                std::vector<double> out;
                const std::size_t m = idx.size() / 2;
                for (std::size_t i = first ? 0 : m; i < (first ? m : 2 * m); ++i) out.push_back(v[idx[i]]);
                return out;
            };
            const double t1 = detail::tv_fixed(half(a, ia, true), half(b, ib, true), h, opt.grid_points);
            const double t2 = detail::tv_fixed(half(a, ia, false), half(b, ib, false), h, opt.grid_points);
            acc += (t1 - t2) * (t1 - t2);
        }
        out.stderr_ = 0.5 * std::sqrt(acc / opt.splits);
    }
    return out;
}

// Rate fits.

struct RateRow {
    double eps = 0.0;
    double estimate = 0.0;
    double stderr_ = 0.0;
};

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    bool ok = false;
    std::string flag;  // "insufficient", "not_significant" or empty
};

// OLS of ln estimate on ln eps. Rows with stderr > 0.5 * estimate are excluded; the fit is
// refused when a remaining row is not above 2 standard errors or fewer than 3 rows remain.
inline RateFit rate_fit(const std::vector<RateRow>& rows) {
    RateFit f;
    std::vector<double> x, y;
    for (const auto& r : rows) {
        if (!(r.estimate > 0.0) || !(r.eps > 0.0)) continue;
        if (r.stderr_ > 0.5 * r.estimate) continue;
        if (r.estimate <= 2.0 * r.stderr_) {
            f.flag = "not_significant";
            return f;
        }
        x.push_back(std::log(r.eps));
        y.push_back(std::log(r.estimate));
    }
    f.used = x.size();
    if (x.size() < 3) {
        f.flag = "insufficient";
        return f;
    }
    const auto lf = ordinary_least_squares(x, y);
    f.slope = lf.slope;
    f.intercept = lf.intercept;
    f.r2 = lf.r2;
    f.ok = true;
    return f;
}

// Coupled ladder of levels for smooth-distance estimation.

struct LadderConfig {
    std::vector<double> eps_grid{0.4, 0.2, 0.1, 0.05};
    std::vector<double> eps_refs;  // descending; empty means {min(eps_grid)/8}
    double x0 = 0.0;
    double T = 1.0;
    int n_steps = 128;
    int ref_step_factor = 4;
    Stepper stepper = Stepper::weak2;
    std::size_t N = 100000;
    std::uint64_t seed = 1;
    int workers = 1;
    bool rank_coupling = true;
    bool control_variate = true;
    bool truncation = true;

    void validate() const {
        if (eps_grid.empty()) throw ConfigError("ladder: empty eps grid");
        for (double e : eps_grid)
            if (!(e > 0.0 && e <= 1.0)) throw ConfigError("eps out of (0,1]");
        for (double e : eps_refs)
            if (!(e > 0.0 && e <= 1.0)) throw ConfigError("eps_ref out of (0,1]");
        if (n_steps < 1 || ref_step_factor < 1) throw ConfigError("ladder: step counts must be >= 1");
        if (N < 2) throw ConfigError("ladder: N must be >= 2");
        if (!(T > 0.0)) throw ConfigError("T must be positive");
        const double emin = *std::min_element(eps_grid.begin(), eps_grid.end());
        for (double e : refs())
            if (!(e < emin)) throw ConfigError("ladder: eps_ref must be below every eps in the grid");
    }

    [[nodiscard]] std::vector<double> refs() const {
        std::vector<double> r = eps_refs;
        if (r.empty()) r.push_back(*std::min_element(eps_grid.begin(), eps_grid.end()) / 8.0);
        std::sort(r.begin(), r.end(), std::greater<>());
        return r;
    }
};

struct LadderLink {
    int fine = 0;    // level index
    int coarse = 0;  // level index
    std::vector<double> S_T;  // skeleton terminal values
    std::vector<double> V;    // first-order difference weights
};

struct LadderResult {
    LadderConfig cfg;
    // Level l < refs.size() is reference refs[l]; the rest follow eps_grid.
    std::vector<double> level_eps;
    std::vector<int> level_grid;  // continuous steps per level
    std::size_t n_refs = 0;
    std::vector<std::vector<double>> terminal;        // [level][path]
    std::vector<std::vector<double>> trunc_terminal;  // [grid index][path]
    std::vector<LadderLink> links;
    bool coupled = false;  // rank coupling and control variates available

    [[nodiscard]] std::size_t grid_level(std::size_t j) const { return n_refs + j; }
};

namespace detail {

struct LevelSpec {
    double eps = 0.0;
    double M = 1.0;
    int stride = 1;
    double B = 0.0;      // int_{(0,eps]} g dmu
    double sigma = 0.0;  // sqrt(int_{(0,eps]} g^2 dmu)
};

struct SkeletonOut {
    double S_T = 0.0;
    double V = 0.0;
};

// Skeleton of the coarse level (big jumps and drift only) with the tangent-weighted sum of
// small-noise difference increments between the fine and coarse level.
inline SkeletonOut run_skeleton(const LevyModel& model, const BrownianTape& tape, const std::vector<JumpEvent>& events,
                                const LevelSpec& fine, const LevelSpec& coarse, double shift_fine,
                                double shift_coarse, double x0) {
    const auto& sf = *model.c.separable;
    const double T = tape.T;
    const int stride = coarse.stride;
    const int n = tape.n / stride;
    double S = x0, logY = 0.0, t = 0.0;
    double acc = 0.0;
    std::size_t ev = 0;
    const double dB = coarse.B - fine.B;
    for (int j = 1; j <= n; ++j) {
        const double t0 = t;
        const double tj = tape.grid_time(j * stride);
        const HJet hj = sf.h(t0, S);
        const double weight = hj.h * std::exp(-logY);
        double dD = -dB * (tj - t0);
        const double w0 = tape.grid[static_cast<std::size_t>((j - 1) * stride)];
        const double w1 = tape.grid[static_cast<std::size_t>(j * stride)];
        dD += fine.sigma * (w1 - w0 + (tj - t0) / T * shift_fine);
        dD -= coarse.sigma * (w1 - w0 + (tj - t0) / T * shift_coarse);
        while (ev < events.size() && events[ev].time < tj) {
            const JumpEvent& e = events[ev];
            if (e.z_tilde < coarse.M) {
                const double h = e.time - t;
                if (h > 0.0) {
                    const HJet hs = sf.h(t, S);
                    S += hs.h * coarse.B * h;
                    logY += hs.h_x * coarse.B * h;
                    t = e.time;
                }
                const double r = model.c.c_x(e.time, e.z, S);
                S += model.c.c(e.time, e.z, S);
                logY += std::log(std::fabs(1.0 + r));
            } else if (e.z_tilde < fine.M) {
                dD += sf.g(e.z);
            }
            ++ev;
        }
        const double h = tj - t;
        if (h > 0.0) {
            const HJet hs = sf.h(t, S);
            S += hs.h * coarse.B * h;
            logY += hs.h_x * coarse.B * h;
        }
        t = tj;
        acc += weight * dD;
    }
    return {S, std::exp(logY) * acc};
}

}  // namespace detail

inline LadderResult run_ladder(const LevyModel& model, const SectorSettings& sector, const LadderConfig& cfg) {
    cfg.validate();
    LadderResult res;
    res.cfg = cfg;
    const auto refs = cfg.refs();
    res.n_refs = refs.size();
    const std::size_t n_grid = cfg.eps_grid.size();
    const int n_fine = cfg.n_steps * cfg.ref_step_factor;
    std::vector<detail::LevelSpec> lv;
    auto spec = [&](double eps, int stride) {
        detail::LevelSpec s;
        s.eps = eps;
        s.M = snap_level(1.0 / eps);
        s.stride = stride;
        if (model.c.separable) {
            const auto& g = model.c.separable->g;
            s.B = model.mu.integrate([&](double z) { return g(z); }, 0.0, eps).value;
            s.sigma = std::sqrt(model.mu.integrate([&](double z) { return g(z) * g(z); }, 0.0, eps).value);
        }
        return s;
    };
    for (double e : refs) {
        lv.push_back(spec(e, 1));
        res.level_eps.push_back(e);
        res.level_grid.push_back(n_fine);
    }
    for (double e : cfg.eps_grid) {
        lv.push_back(spec(e, cfg.ref_step_factor));
        res.level_eps.push_back(e);
        res.level_grid.push_back(cfg.n_steps);
    }
    const std::size_t n_levels = lv.size();
    const std::size_t floor_level = res.n_refs - 1;

    // Links: r_{i+1} -> r_i, then r_0 -> each grid level.
    for (std::size_t i = res.n_refs - 1; i >= 1; --i) res.links.push_back({static_cast<int>(i), static_cast<int>(i - 1), {}, {}});
    for (std::size_t j = 0; j < n_grid; ++j) res.links.push_back({0, static_cast<int>(res.n_refs + j), {}, {}});

    const BandDecomposition bands(model.nu(), refs.back(), sector);
    const BandSamplers samplers(bands);
    std::vector<SmallJumpCoefficients> coef;
    coef.reserve(n_levels);
    for (const auto& s : lv) coef.emplace_back(model, s.eps, cfg.T);

    res.coupled = model.c.separable.has_value() && cfg.rank_coupling;
    const std::size_t N = cfg.N;
    // Terminal Brownian value of each level, per path.
    std::vector<std::vector<double>> WT(n_levels, std::vector<double>(N, 0.0));

    // Phase 1: layer sums and floor endpoints.
    std::vector<std::vector<double>> layer(res.links.size(), std::vector<double>(N, 0.0));
    parallel_for(N, cfg.workers, [&](std::size_t i) {
        Rng end_rng(cfg.seed, i, StreamTag::brownian_end);
        const double wT = std::sqrt(cfg.T) * end_rng.normal();
        for (std::size_t l = 0; l < n_levels; ++l) WT[l][i] = wT;
        if (!res.coupled) return;
        const auto stream = sample_big_jumps(bands, samplers, cfg.T, cfg.seed, i);
        const auto& g = model.c.separable->g;
        for (const auto& e : stream.events)
            for (std::size_t l = 0; l < res.links.size(); ++l) {
                const auto& f = lv[static_cast<std::size_t>(res.links[l].fine)];
                const auto& c = lv[static_cast<std::size_t>(res.links[l].coarse)];
                if (e.z_tilde >= c.M && e.z_tilde < f.M) layer[l][i] += g(e.z);
            }
    });
    if (res.coupled) {
        std::vector<double> G(N);
        std::vector<std::size_t> order(N);
        std::vector<double> pool(N);
        for (std::size_t l = 0; l < res.links.size(); ++l) {
            const auto fi = static_cast<std::size_t>(res.links[l].fine);
            const auto ci = static_cast<std::size_t>(res.links[l].coarse);
            const auto& f = lv[fi];
            const auto& c = lv[ci];
            for (std::size_t i = 0; i < N; ++i) G[i] = layer[l][i] - cfg.T * (c.B - f.B) + f.sigma * WT[fi][i];
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return G[a] < G[b] || (G[a] == G[b] && a < b);
            });
            Rng prng(cfg.seed, l, StreamTag::rank_gauss);
            for (auto& z : pool) z = prng.normal();
            std::sort(pool.begin(), pool.end());
            const double sign = c.sigma >= 0.0 ? 1.0 : -1.0;
            for (std::size_t r = 0; r < N; ++r) WT[ci][order[r]] = sign * std::sqrt(cfg.T) * pool[r];
        }
    }

    // Phase 2: paths.
    res.terminal.assign(n_levels, std::vector<double>(N, 0.0));
    if (cfg.truncation) res.trunc_terminal.assign(n_grid, std::vector<double>(N, 0.0));
    for (auto& lk : res.links) {
        lk.S_T.assign(N, 0.0);
        lk.V.assign(N, 0.0);
    }
    parallel_for(N, cfg.workers, [&](std::size_t i) {
        const auto stream = sample_big_jumps(bands, samplers, cfg.T, cfg.seed, i);
        const auto tape = build_brownian(cfg.T, n_fine, stream.events, cfg.seed, i);
        const double w_floor = tape.grid.back();
        (void)floor_level;
        NullObserver obs;
        for (std::size_t l = 0; l < n_levels; ++l) {
            const double shift = WT[l][i] - w_floor;
            res.terminal[l][i] = evolve_on_tape(model, &coef[l], cfg.stepper, tape, stream.events, lv[l].stride,
                                                lv[l].M, cfg.x0, shift, obs);
        }
        if (cfg.truncation)
            for (std::size_t j = 0; j < n_grid; ++j) {
                const auto& s = lv[res.n_refs + j];
                double x = cfg.x0;
                for (const auto& e : stream.events)
                    if (e.z_tilde < s.M) x += model.c.c(e.time, e.z, x);
                res.trunc_terminal[j][i] = x;
            }
        if (res.coupled && cfg.control_variate)
            for (auto& lk : res.links) {
                const auto fi = static_cast<std::size_t>(lk.fine);
                const auto ci = static_cast<std::size_t>(lk.coarse);
                const auto sk = detail::run_skeleton(model, tape, stream.events, lv[fi], lv[ci], WT[fi][i] - w_floor,
                                                     WT[ci][i] - w_floor, cfg.x0);
                lk.S_T[i] = sk.S_T;
                lk.V[i] = sk.V;
            }
    });
    return res;
}

// Per-function estimates of E phi(X_fine) - E phi(X_coarse).
struct PhiEstimate {
    std::string name;
    double estimate = 0.0;
    double stderr_ = 0.0;
};

struct SmoothDistance {
    std::vector<PhiEstimate> per_phi;
    double sup = 0.0;  // d_3 lower proxy
    double sup_stderr = 0.0;
    std::string argmax;
};

namespace detail {

// Solves the small symmetric system A beta = c; falls back to zero on singular input.
inline std::vector<double> solve_small(std::vector<std::vector<double>> A, std::vector<double> c) {
    const std::size_t k = c.size();
    for (std::size_t p = 0; p < k; ++p) {
        std::size_t piv = p;
        for (std::size_t r = p + 1; r < k; ++r)
            if (std::fabs(A[r][p]) > std::fabs(A[piv][p])) piv = r;
        if (std::fabs(A[piv][p]) < 1e-300) return std::vector<double>(k, 0.0);
        std::swap(A[p], A[piv]);
        std::swap(c[p], c[piv]);
        for (std::size_t r = p + 1; r < k; ++r) {
            const double f = A[r][p] / A[p][p];
            for (std::size_t q = p; q < k; ++q) A[r][q] -= f * A[p][q];
            c[r] -= f * c[p];
        }
    }
    std::vector<double> beta(k, 0.0);
    for (std::size_t p = k; p-- > 0;) {
        double s = c[p];
        for (std::size_t q = p + 1; q < k; ++q) s -= A[p][q] * beta[q];
        beta[p] = s / A[p][p];
    }
    return beta;
}

// Mean of y with regression control variates xs (each exactly mean zero in law).
inline MeanEstimate cv_mean(const std::vector<double>& y, const std::vector<std::vector<double>>& xs) {
    const std::size_t n = y.size();
    const std::size_t k = xs.size();
    const double nn = static_cast<double>(n);
    if (k == 0) return mean_estimate(y);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / nn;
    std::vector<double> mx(k, 0.0);
    for (std::size_t a = 0; a < k; ++a) mx[a] = std::accumulate(xs[a].begin(), xs[a].end(), 0.0) / nn;
    std::vector<std::vector<double>> A(k, std::vector<double>(k, 0.0));
    std::vector<double> c(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double dy = y[i] - my;
        for (std::size_t a = 0; a < k; ++a) {
            const double da = xs[a][i] - mx[a];
            c[a] += da * dy;
            for (std::size_t b = a; b < k; ++b) A[a][b] += da * (xs[b][i] - mx[b]);
        }
    }
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < a; ++b) A[a][b] = A[b][a];
    const auto beta = solve_small(A, c);
    double est = my;
    for (std::size_t a = 0; a < k; ++a) est -= beta[a] * mx[a];
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - my;
        for (std::size_t a = 0; a < k; ++a) r -= beta[a] * (xs[a][i] - mx[a]);
        ss += r * r;
    }
    MeanEstimate out;
    out.mean = est;
    out.n = n;
    out.se = std::sqrt(ss / ((nn - 1.0 - static_cast<double>(k)) * nn));
    return out;
}

inline SmoothDistance summarize(std::vector<PhiEstimate> per) {
    SmoothDistance d;
    d.per_phi = std::move(per);
    for (const auto& p : d.per_phi)
        if (std::fabs(p.estimate) >= d.sup) {
            d.sup = std::fabs(p.estimate);
            d.sup_stderr = p.stderr_;
            d.argmax = p.name;
        }
    return d;
}

}  // namespace detail

// Gaussian-substitution level j against reference r.
inline SmoothDistance smooth_distance(const LadderResult& lad, const std::vector<TestFunction>& family,
                                      std::size_t ref, std::size_t grid_index) {
    const std::size_t coarse = lad.grid_level(grid_index);
    std::vector<std::size_t> chain;
    if (lad.coupled && lad.cfg.control_variate) {
        std::size_t cur = ref;
        while (cur > 0) {
            for (std::size_t l = 0; l < lad.links.size(); ++l)
                if (static_cast<std::size_t>(lad.links[l].fine) == cur &&
                    static_cast<std::size_t>(lad.links[l].coarse) == cur - 1)
                    chain.push_back(l);
            --cur;
        }
        for (std::size_t l = 0; l < lad.links.size(); ++l)
            if (lad.links[l].fine == 0 && static_cast<std::size_t>(lad.links[l].coarse) == coarse) chain.push_back(l);
    }
    const auto& a = lad.terminal[ref];
    const auto& b = lad.terminal[coarse];
    const std::size_t N = a.size();
    std::vector<PhiEstimate> per;
    std::vector<double> y(N);
    std::vector<std::vector<double>> xs(chain.size(), std::vector<double>(N));
    for (const auto& phi : family) {
        for (std::size_t i = 0; i < N; ++i) y[i] = phi(a[i]) - phi(b[i]);
        for (std::size_t c = 0; c < chain.size(); ++c) {
            const auto& lk = lad.links[chain[c]];
            for (std::size_t i = 0; i < N; ++i) xs[c][i] = phi.derivative(1, lk.S_T[i]) * lk.V[i];
        }
        const auto m = detail::cv_mean(y, xs);
        per.push_back({phi.name, m.mean, m.se});
    }
    return detail::summarize(std::move(per));
}

// Truncation-only level j against reference r.
inline SmoothDistance truncation_distance(const LadderResult& lad, const std::vector<TestFunction>& family,
                                          std::size_t ref, std::size_t grid_index) {
    if (lad.trunc_terminal.empty()) throw ConfigError("truncation scheme was not simulated");
    const auto& a = lad.terminal[ref];
    const auto& b = lad.trunc_terminal[grid_index];
    std::vector<PhiEstimate> per;
    std::vector<double> y(a.size());
    for (const auto& phi : family) {
        for (std::size_t i = 0; i < a.size(); ++i) y[i] = phi(a[i]) - phi(b[i]);
        const auto m = mean_estimate(y);
        per.push_back({phi.name, m.mean, m.se});
    }
    return detail::summarize(std::move(per));
}

struct DistanceRow {
    double eps = 0.0;
    std::string scheme;
    double eps_ref = 0.0;
    double d3 = 0.0;
    double d3_stderr = 0.0;
    std::string argmax;
    double tv = std::numeric_limits<double>::quiet_NaN();
    double tv_stderr = std::numeric_limits<double>::quiet_NaN();
    double eta3 = 0.0;
    double eta1 = 0.0;
};

struct DistanceReport {
    std::vector<DistanceRow> rows;
    RateFit fit_gauss;
    RateFit fit_trunc;
    RateFit fit_tv;
    double eps_ref = 0.0;
    std::size_t N = 0;
    std::uint64_t seed = 0;
    double bandwidth_factor = 0.8;
};

[[nodiscard]] inline std::vector<RateRow> rate_rows(const std::vector<DistanceRow>& rows, const std::string& scheme,
                                                    bool tv = false) {
    std::vector<RateRow> out;
    for (const auto& r : rows)
        if (r.scheme == scheme) out.push_back({r.eps, tv ? r.tv : r.d3, tv ? r.tv_stderr : r.d3_stderr});
    return out;
}

// Full report for one reference level of a ladder.
inline DistanceReport distance_report(const LevyModel& model, const LadderResult& lad,
                                      const std::vector<TestFunction>& family, std::size_t ref, bool with_tv = true,
                                      const TvOptions& tv_opt = {}) {
    DistanceReport rep;
    rep.eps_ref = lad.level_eps[ref];
    rep.N = lad.cfg.N;
    rep.seed = lad.cfg.seed;
    rep.bandwidth_factor = tv_opt.bandwidth_factor;
    for (std::size_t j = 0; j < lad.cfg.eps_grid.size(); ++j) {
        const double eps = lad.cfg.eps_grid[j];
        DistanceRow g;
        g.eps = eps;
        g.scheme = "gaussian_substitution";
        g.eps_ref = rep.eps_ref;
        const auto sd = smooth_distance(lad, family, ref, j);
        g.d3 = sd.sup;
        g.d3_stderr = sd.sup_stderr;
        g.argmax = sd.argmax;
        g.eta3 = eta_p(model, 3, eps);
        g.eta1 = eta_p(model, 1, eps);
        if (with_tv) {
            const auto tv = tv_kde(lad.terminal[ref], lad.terminal[lad.grid_level(j)], tv_opt);
            g.tv = tv.estimate;
            g.tv_stderr = tv.stderr_;
        }
        rep.rows.push_back(g);
        if (!lad.trunc_terminal.empty()) {
            DistanceRow t = g;
            t.scheme = "truncation_only";
            const auto td = truncation_distance(lad, family, ref, j);
            t.d3 = td.sup;
            t.d3_stderr = td.sup_stderr;
            t.argmax = td.argmax;
            if (with_tv) {
                const auto tv = tv_kde(lad.terminal[ref], lad.trunc_terminal[j], tv_opt);
                t.tv = tv.estimate;
                t.tv_stderr = tv.stderr_;
            }
            rep.rows.push_back(t);
        }
    }
    rep.fit_gauss = rate_fit(rate_rows(rep.rows, "gaussian_substitution"));
    rep.fit_trunc = rate_fit(rate_rows(rep.rows, "truncation_only"));
    if (with_tv) rep.fit_tv = rate_fit(rate_rows(rep.rows, "gaussian_substitution", true));
    return rep;
}

// Family centered on the empirical law of a sample.
[[nodiscard]] inline std::vector<TestFunction> family_for(const std::vector<double>& sample) {
    const auto m = mean_estimate(sample);
    const double sd = m.se * std::sqrt(static_cast<double>(sample.size()));
    return standard_family(m.mean, std::max(1e-3, std::min(sd, 2.0)));
}

}  // namespace smalljump
