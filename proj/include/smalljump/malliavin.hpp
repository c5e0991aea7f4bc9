#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "simulate.hpp"
#include "stats.hpp"

namespace smalljump {

struct TangentFlowState {
    double Y = 1.0;
    double Ybar = 1.0;
    // Values after each recorded point, aligned with Trajectory::times.
    std::vector<double> Y_history;
    std::vector<double> Ybar_history;
    // Ybar at the start of each continuous step and just before each jump.
    std::vector<double> Ybar_step_start;
    std::vector<double> Ybar_before_jump;
    std::vector<double> Y_before_jump;
    std::vector<double> Y_step_start;
    double max_product_error = 0.0;  // max |Y*Ybar - 1| over recorded points
};

// Tangent flow along a trajectory with the trajectory's own noise. Ybar follows its own
// recursion; the product Y*Ybar is only used as an accuracy sensor.
inline TangentFlowState simulate_tangent_flow(const LevyModel& model, const Trajectory& traj) {
    TangentFlowState st;
    st.Y_history.reserve(traj.times.size());
    st.Ybar_history.reserve(traj.times.size());
    st.Y_history.push_back(1.0);
    st.Ybar_history.push_back(1.0);
    double Y = 1.0, Yb = 1.0;
    auto record = [&] {
        st.Y_history.push_back(Y);
        st.Ybar_history.push_back(Yb);
        st.max_product_error = std::max(st.max_product_error, std::fabs(Y * Yb - 1.0));
    };
    auto apply_jump = [&](const JumpEvent& e) {
        const double r = model.c.tilde_x(e.time, e.z_tilde, e.x_before);
        if (std::fabs(1.0 + r) < 1e-12)
            throw HypothesisError("tangent flow degenerate: 1 + d_x c~ = " + std::to_string(1.0 + r) +
                                  " at t=" + std::to_string(e.time));
        st.Y_before_jump.push_back(Y);
        st.Ybar_before_jump.push_back(Yb);
        Y *= 1.0 + r;
        Yb *= 1.0 - r / (1.0 + r);
        record();
    };
    std::size_t ev = 0;
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        while (ev < traj.events.size() && traj.events[ev].step_index == i) apply_jump(traj.events[ev++]);
        const StepRecord& s = traj.steps[i];
        st.Y_step_start.push_back(Y);
        st.Ybar_step_start.push_back(Yb);
        const double dw = s.normal * std::sqrt(s.h);
        const double sx = s.vol_x;
        const double q = 0.5 * sx * sx * (dw * dw - s.h);
        Y *= std::exp(s.b_x * s.h) * (1.0 + sx * dw + q);
        Yb *= std::exp((sx * sx - s.b_x) * s.h) * (1.0 - sx * dw + q);
        record();
    }
    while (ev < traj.events.size()) apply_jump(traj.events[ev++]);
    st.Y = Y;
    st.Ybar = Yb;
    return st;
}

struct JumpContribution {
    double time = 0.0;
    int band = 0;
    int xi = 0;
    double value = 0.0;
};

struct MalliavinRecord {
    double sigma = 0.0;
    double jump_part = 0.0;
    double gaussian_part = 0.0;
    std::vector<JumpContribution> contributions;
    double rho = 0.0;         // sum of xi * c_(Z) over logged jumps
    double alpha_M = 0.0;     // int_{z >= M} c_ dnu
    double q_factor = 0.0;    // min_s (Y_t Ybar_s)^2 over step starts and jump left limits
    double lower_bound = 0.0; // q_factor * (rho + t * alpha_M)
    double literal_lower_bound = 0.0;  // (inf_s |Y_s Ybar_t|)^-2 * (rho + t * alpha_M)
};

[[nodiscard]] inline double lower_envelope_tail(const LevyModel& model, double M) {
    const auto nu = model.nu();
    const auto r = nu.integrate([&](double z) { return model.env.under(z); }, M,
                                std::numeric_limits<double>::infinity(), QuadratureOptions{1e-12, 1e-300, 4000});
    return r.value;
}

inline MalliavinRecord malliavin_covariance(const LevyModel& model, const Trajectory& traj,
                                            const TangentFlowState& flow, double alpha_M = -1.0) {
    MalliavinRecord rec;
    const double Yt = flow.Y;
    double t = 0.0;
    for (std::size_t i = 0; i < traj.events.size(); ++i) {
        const JumpEvent& e = traj.events[i];
        JumpContribution jc{e.time, e.band, e.split.xi, 0.0};
        if (e.split.xi == 1) {
            const double d = Yt * flow.Ybar_before_jump[i] * model.c.tilde_z(e.time, e.z_tilde, e.x_before);
            jc.value = d * d;
            rec.jump_part += jc.value;
            rec.rho += model.env.under(e.z_tilde);
        }
        rec.contributions.push_back(jc);
    }
    double g = 0.0;
    for (std::size_t j = 0; j < traj.steps.size(); ++j) {
        const double yb = flow.Ybar_step_start[j];
        g += yb * yb * traj.steps[j].var_rate * traj.steps[j].h;
        t += traj.steps[j].h;
    }
    rec.gaussian_part = Yt * Yt * g;
    rec.sigma = rec.jump_part + rec.gaussian_part;

    rec.alpha_M = alpha_M >= 0.0 ? alpha_M : lower_envelope_tail(model, traj.M);
    double qf = std::numeric_limits<double>::infinity();
    for (double yb : flow.Ybar_step_start) qf = std::min(qf, (Yt * yb) * (Yt * yb));
    for (double yb : flow.Ybar_before_jump) qf = std::min(qf, (Yt * yb) * (Yt * yb));
    if (!std::isfinite(qf)) qf = 1.0;
    rec.q_factor = qf;
    rec.lower_bound = qf * (rec.rho + t * rec.alpha_M);
    double ql = std::numeric_limits<double>::infinity();
    for (double y : flow.Y_history) ql = std::min(ql, std::fabs(y * flow.Ybar));
    rec.literal_lower_bound = (rec.rho + t * rec.alpha_M) / (ql * ql);
    return rec;
}

// Covariance of one simulated path of the gaussian-substitution scheme at level 1/M.
struct CovarianceSample {
    MalliavinRecord record;
    double product_error = 0.0;
};

struct NondegeneracyRow {
    double M = 0.0;
    double p = 1.0;
    double inv_moment = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t degeneracy_count = 0;
    bool heavy_tail = false;
    std::size_t lower_bound_violations = 0;
    std::size_t literal_bound_violations = 0;
    std::size_t paths = 0;
};

struct NondegeneracyReport {
    std::vector<NondegeneracyRow> rows;
    std::vector<std::string> warnings;
    bool growth_flag = false;  // monotone growth in M with non-overlapping extreme CIs, for some p
};

struct NondegeneracyConfig {
    double t = 1.0;
    std::vector<double> M_grid{2, 4, 8, 16};
    std::vector<double> p_list{1.0};
    std::size_t N = 10000;
    int n_steps = 256;
    std::uint64_t seed = 1;
    int workers = 1;
    int bootstrap_resamples = 1000;
    double x0 = 0.0;
};

// Runs the covariance for N paths at level 1/M.
inline std::vector<MalliavinRecord> covariance_samples(const LevyModel& model, const SectorSettings& sector, double M,
                                                       double t, std::size_t N, int n_steps, std::uint64_t seed,
                                                       int workers, double x0 = 0.0) {
    PathConfig cfg;
    cfg.x0 = x0;
    cfg.T = t;
    cfg.eps = 1.0 / M;
    cfg.n_steps = n_steps;
    cfg.seed = seed;
    PathSimulator sim(model, sector, cfg);
    const double alpha_M = lower_envelope_tail(model, sim.bands().M());
    std::vector<MalliavinRecord> out(N);
    parallel_for(N, workers, [&](std::size_t i) {
        const auto traj = sim.simulate(i);
        const auto flow = simulate_tangent_flow(model, traj);
        out[i] = malliavin_covariance(model, traj, flow, alpha_M);
        out[i].contributions.clear();
    });
    return out;
}

inline NondegeneracyReport nondegeneracy_diagnostics(const LevyModel& model, const SectorSettings& sector,
                                                     const NondegeneracyConfig& cfg) {
    NondegeneracyReport rep;
    if (sector.variant == SectorVariant::weak)
        for (double p : cfg.p_list)
            if (cfg.t <= 4.0 * p * sector.alpha / sector.eps_star)
                rep.warnings.push_back("weak sector: t=" + std::to_string(cfg.t) + " <= 4 p alpha / eps_* for p=" +
                                       std::to_string(p) + "; inverse moment not covered");
    std::vector<std::vector<NondegeneracyRow>> by_p(cfg.p_list.size());
    for (double M : cfg.M_grid) {
        const auto recs = covariance_samples(model, sector, M, cfg.t, cfg.N, cfg.n_steps, cfg.seed, cfg.workers, cfg.x0);
        for (std::size_t ip = 0; ip < cfg.p_list.size(); ++ip) {
            const double p = cfg.p_list[ip];
            NondegeneracyRow row;
            row.M = M;
            row.p = p;
            row.paths = recs.size();
            std::vector<double> v;
            v.reserve(recs.size());
            for (const auto& r : recs) {
                if (r.sigma + 1e-12 * std::fabs(r.sigma) < r.lower_bound) ++row.lower_bound_violations;
                if (r.sigma < r.literal_lower_bound) ++row.literal_bound_violations;
                if (!(r.sigma > 0.0)) {
                    ++row.degeneracy_count;
                    continue;
                }
                v.push_back(std::pow(r.sigma, -p));
            }
            if (!v.empty()) {
                const auto b = bootstrap_mean(v, cfg.bootstrap_resamples, cfg.seed ^ 0xb007ULL, 0.95);
                row.inv_moment = b.estimate;
                row.ci_lo = b.lo;
                row.ci_hi = b.hi;
                std::vector<double> sorted = v;
                std::sort(sorted.begin(), sorted.end(), std::greater<>());
                const std::size_t top = std::max<std::size_t>(1, sorted.size() / 100);
                const double top_sum = std::accumulate(sorted.begin(), sorted.begin() + static_cast<long>(top), 0.0);
                const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
                row.heavy_tail = top_sum > 0.5 * total;
                if (row.heavy_tail)
                    rep.warnings.push_back("heavy tail: top 1% of sigma^-p carries >50% of the sum at M=" +
                                           std::to_string(M) + " p=" + std::to_string(p));
            }
            rep.rows.push_back(row);
            by_p[ip].push_back(row);
        }
    }
    for (const auto& rows : by_p) {
        if (rows.size() < 2) continue;
        bool increasing = true;
        for (std::size_t i = 1; i < rows.size(); ++i) increasing = increasing && rows[i].inv_moment > rows[i - 1].inv_moment;
        if (increasing && rows.back().ci_lo > rows.front().ci_hi) rep.growth_flag = true;
    }
    return rep;
}

// Smallest upper CI end minus largest lower CI end over rows with equal p; >= 0 means all overlap.
[[nodiscard]] inline double ci_overlap_margin(const std::vector<NondegeneracyRow>& rows, double p) {
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
        if (r.p == p) {
            lo = std::max(lo, r.ci_lo);
            hi = std::min(hi, r.ci_hi);
        }
    return hi - lo;
}

// Laplace transform of rho_t^M + t alpha^M against the bound built from m(dv).
struct LaplaceRow {
    double s = 0.0;
    double empirical = 1.0;
    double stderr_ = 0.0;
    double exact = 1.0;          // closed form from the splitting construction
    double bound = 1.0;          // m(dv) with band rates m_k eps_k
    double literal_bound = 1.0;  // m(dv) with eps_k only
};

struct LemmaRow {
    double u = 0.0;
    double m_level = 0.0;          // m(c_ >= 1/u) with rates m_k eps_k
    double m_level_literal = 0.0;  // with eps_k only
    double ratio = 0.0;            // m_level / ln u
    double ratio_literal = 0.0;
    double sector_estimate = 0.0;  // (eps_*/2alpha)((ln u)^(alpha/alpha2) - 2^alpha), strong sector
};

struct LaplaceReport {
    double M = 0.0;
    double t = 1.0;
    double alpha_M = 0.0;
    std::vector<LaplaceRow> rows;
    std::vector<LemmaRow> lemma;
};

struct LaplaceConfig {
    double t = 1.0;
    double M = 16.0;
    std::vector<double> s_grid;
    std::size_t N = 100000;
    std::uint64_t seed = 1;
    int workers = 1;
    std::vector<double> u_grid{1e2, 1e4, 1e8};
    int k_limit = 100000;  // bands summed in m(dv) over [1, inf)

    [[nodiscard]] static std::vector<double> default_s_grid() {
        std::vector<double> s;
        for (int i = 0; i < 20; ++i) s.push_back(std::pow(10.0, -1.0 + 6.0 * i / 19.0));
        return s;
    }
};

namespace detail {

// int over (k+1/4, k+3/4) of (1 - exp(-s c_(v))) dv.
inline double plateau_integral(const LevyModel& model, int k, double s) {
    return integrate([&](double v) { return -std::expm1(-s * model.env.under(v)); }, k + 0.25, k + 0.75,
                     QuadratureOptions{1e-10, 1e-300, 200})
        .value;
}

inline double plateau_length_above(const LevyModel& model, int k, double level) {
    // Length of {v in (k+1/4, k+3/4) : c_(v) >= level} for a decreasing envelope.
    const double a = k + 0.25, b = k + 0.75;
    if (model.env.under(a) < level) return 0.0;
    if (model.env.under(b) >= level) return 0.5;
    double lo = a, hi = b;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (model.env.under(mid) >= level ? lo : hi) = mid;
    }
    return lo - a;
}

}  // namespace detail

inline LaplaceReport laplace_bound_check(const LevyModel& model, const SectorSettings& sector,
                                         const LaplaceConfig& cfg_in) {
    LaplaceConfig cfg = cfg_in;
    if (cfg.s_grid.empty()) cfg.s_grid = LaplaceConfig::default_s_grid();
    for (double s : cfg.s_grid)
        if (!(s >= 0.0)) throw ConfigError("laplace-check: s grid must be nonnegative");
    const BandDecomposition bands(model.nu(), 1.0 / cfg.M, sector);
    const BandSamplers samplers(bands);
    LaplaceReport rep;
    rep.M = bands.M();
    rep.t = cfg.t;
    rep.alpha_M = lower_envelope_tail(model, bands.M());

    // Sample rho_t^M from the band streams.
    std::vector<double> R(cfg.N);
    parallel_for(cfg.N, cfg.workers, [&](std::size_t i) {
        const auto stream = sample_big_jumps(bands, samplers, cfg.t, cfg.seed, i);
        double rho = 0.0;
        for (const auto& e : stream.events)
            if (e.split.xi == 1) rho += model.env.under(e.z_tilde);
        R[i] = rho + cfg.t * rep.alpha_M;
    });

    const auto nu = model.nu();
    const double mpsi = BumpFunction::m_psi();
    for (double s : cfg.s_grid) {
        LaplaceRow row;
        row.s = s;
        std::vector<double> e(cfg.N);
        for (std::size_t i = 0; i < cfg.N; ++i) e[i] = std::exp(-s * R[i]);
        const auto est = mean_estimate(e);
        row.empirical = est.mean;
        row.stderr_ = est.se;
        if (s == 0.0) {
            rep.rows.push_back(row);
            continue;
        }
        // Exact: jumps with xi = 1 in retained bands form a Poisson measure with intensity m_k eps_k psi_k.
        double exact_exp = 0.0;
        for (const auto& b : bands.bands()) {
            const double part = integrate(
                [&](double v) {
                    if (b.partial && v >= b.hi) return 0.0;
                    return BumpFunction::psi_k(b.k, v) * -std::expm1(-s * model.env.under(v));
                },
                b.k, b.k + 1.0, QuadratureOptions{1e-10, 1e-300, 400})
                                    .value;
            exact_exp += b.full_mass * b.eps_k * part;
        }
        row.exact = std::exp(-cfg.t * exact_exp - s * cfg.t * rep.alpha_M);
        (void)mpsi;
        double with_rates = 0.0, literal = 0.0;
        for (int k = 1; k <= cfg.k_limit; ++k) {
            const double ek = splitting_constant(sector, k);
            const double pl = detail::plateau_integral(model, k, s);
            with_rates += nu.mass(k, k + 1.0) * ek * pl;
            literal += ek * pl;
            if (pl * ek < 1e-16 * std::max(literal, 1e-300) && k > 64) break;
        }
        row.bound = std::exp(-cfg.t * with_rates);
        row.literal_bound = std::exp(-cfg.t * literal);
        rep.rows.push_back(row);
    }

    for (double u : cfg.u_grid) {
        LemmaRow lr;
        lr.u = u;
        const double level = 1.0 / u;
        for (int k = 1; k <= cfg.k_limit; ++k) {
            const double len = detail::plateau_length_above(model, k, level);
            if (len <= 0.0) break;
            const double ek = splitting_constant(sector, k);
            lr.m_level += nu.mass(k, k + 1.0) * ek * len;
            lr.m_level_literal += ek * len;
        }
        lr.ratio = lr.m_level / std::log(u);
        lr.ratio_literal = lr.m_level_literal / std::log(u);
        if (sector.variant == SectorVariant::strong)
            lr.sector_estimate = sector.eps_star / (2.0 * sector.alpha) *
                                 (std::pow(std::log(u), sector.alpha / sector.alpha2) - std::pow(2.0, sector.alpha));
        rep.lemma.push_back(lr);
    }
    return rep;
}

}  // namespace smalljump
