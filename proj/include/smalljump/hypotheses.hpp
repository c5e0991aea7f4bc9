#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "measure.hpp"

namespace smalljump {

struct HypothesisGrid {
    std::vector<double> s_values{0.0, 0.5, 1.0};
    std::vector<double> z_values;  // marks on [1, inf); default geometric grid
    std::vector<double> x_values;  // default uniform grid on [-10, 10]
    int p_min = 1;
    int p_max = 8;
    int k_max = 64;
    double z_far = 1e8;  // horizon for eventual (large-z) conditions

    [[nodiscard]] static HypothesisGrid standard() {
        HypothesisGrid g;
        for (int i = 0; i <= 240; ++i) g.z_values.push_back(std::pow(10.0, 4.0 * i / 240.0));
        for (int i = 0; i <= 80; ++i) g.x_values.push_back(-10.0 + 20.0 * i / 80.0);
        return g;
    }
};

struct HypothesisCheck {
    HypothesisCheck() = default;
    explicit HypothesisCheck(std::string name) : condition(std::move(name)) {}

    std::string condition;
    double worst_margin = std::numeric_limits<double>::infinity();
    bool pass = true;
    std::string detail;
};

struct HypothesisReport {
    std::vector<HypothesisCheck> checks;

    [[nodiscard]] bool all_pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const HypothesisCheck& c) { return c.pass; });
    }
    [[nodiscard]] const HypothesisCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.condition == name) return &c;
        return nullptr;
    }
    [[nodiscard]] const HypothesisCheck* first_failure() const {
        for (const auto& c : checks)
            if (!c.pass) return &c;
        return nullptr;
    }
};

namespace detail {

inline void note(HypothesisCheck& chk, double margin, const std::string& where) {
    if (margin < chk.worst_margin) {
        chk.worst_margin = margin;
        chk.detail = where;
    }
}

inline std::string at(double s, double z, double x) {
    return "s=" + std::to_string(s) + " z=" + std::to_string(z) + " x=" + std::to_string(x);
}

// Finite-difference fallback for coefficients without tilde_partial.
inline double tilde_partial(const JumpCoefficient& c, int bx, int bz, double s, double zt, double x) {
    if (c.tilde_partial) return c.tilde_partial(bx, bz, s, zt, x);
    if (bx == 0 && bz == 0) return c.tilde(s, zt, x);
    if (bx == 1 && bz == 0) return c.tilde_x(s, zt, x);
    if (bx == 0 && bz == 1) return c.tilde_z(s, zt, x);
    const double h = 1e-5 * zt;
    return (c.tilde_x(s, zt + h, x) - c.tilde_x(s, zt - h, x)) / (2.0 * h);
}

}  // namespace detail

// Numerical predicates for the regularity, tangent-inversion, ellipticity and sector hypotheses.
inline HypothesisReport check_hypotheses(const LevyModel& model, const SectorSettings& sector,
                                         const HypothesisGrid& grid_in = HypothesisGrid::standard()) {
    HypothesisGrid grid = grid_in;
    if (grid.z_values.empty() || grid.x_values.empty()) {
        const auto std_grid = HypothesisGrid::standard();
        if (grid.z_values.empty()) grid.z_values = std_grid.z_values;
        if (grid.x_values.empty()) grid.x_values = std_grid.x_values;
    }
    const auto& c = model.c;
    const auto& env = model.env;
    const auto nu = model.nu();
    HypothesisReport rep;

    HypothesisCheck reg{"regularity"};
    HypothesisCheck inv{"tangent_inversion"};
    HypothesisCheck ell{"ellipticity"};
    const int q = std::max(0, std::min(env.q_star, c.tilde_partial ? c.max_order : 1));
    for (double s : grid.s_values)
        for (double z : grid.z_values)
            for (double x : grid.x_values) {
                const double bar = env.bar(z);
                for (int bx = 0; bx <= q; ++bx)
                    for (int bz = 0; bz <= q; ++bz) {
                        const double d = std::fabs(detail::tilde_partial(c, bx, bz, s, z, x));
                        detail::note(reg, (bar - d) / std::max(bar, 1e-300),
                                     detail::at(s, z, x) + " bx=" + std::to_string(bx) + " bz=" + std::to_string(bz));
                    }
                const double cx = c.tilde_x(s, z, x);
                const double ratio = std::fabs(1.0 + cx) < 1e-300 ? std::numeric_limits<double>::infinity()
                                                                    : std::fabs(cx / (1.0 + cx));
                const double breve = env.breve(z);
                detail::note(inv, (breve - ratio) / std::max(breve, 1e-300), detail::at(s, z, x));
                const double under = env.under(z);
                const double cz = c.tilde_z(s, z, x);
                const double cv = c.tilde(s, z, x);
                const double lhs = std::min(cz * cz, cv * cv);
                if (!(under > 0.0)) {
                    detail::note(ell, -1.0, "lower envelope not positive at z=" + std::to_string(z));
                } else {
                    detail::note(ell, (lhs - under) / under, detail::at(s, z, x));
                }
            }
    for (auto* chk : {&reg, &inv, &ell}) {
        chk->pass = chk->worst_margin >= -1e-12;
        rep.checks.push_back(*chk);
    }

    // Moment conditions: int |c_bar|^p nu < inf and the sector-weighted variant.
    HypothesisCheck mom{"moment_nu"};
    HypothesisCheck mom_sector{sector.variant == SectorVariant::strong ? "moment_sector_strong" : "moment_sector_weak"};
    const double w_exp = sector.variant == SectorVariant::strong ? 1.0 - sector.alpha : 1.0;
    for (int p = grid.p_min; p <= grid.p_max; ++p) {
        const double r = env.bar.power * p;
        // Power envelopes integrate against power weights; finiteness is decided by the exponent.
        if (nu.origin().is_stable()) {
            const double tail = r + 1.0 - nu.origin().rho();
            detail::note(mom, tail - 1.0, "p=" + std::to_string(p));
        } else {
            const auto res = nu.integrate([&](double z) { return std::pow(std::fabs(env.bar(z)), p); }, 1.0,
                                          std::numeric_limits<double>::infinity());
            detail::note(mom, res.converged && std::isfinite(res.value) ? 1.0 : -1.0, "p=" + std::to_string(p));
        }
        detail::note(mom_sector, r + w_exp - 1.0, "p=" + std::to_string(p));
    }
    mom.pass = mom.worst_margin > 0.0;
    mom_sector.pass = mom_sector.worst_margin > 0.0;
    rep.checks.push_back(mom);
    rep.checks.push_back(mom_sector);

    // Band minorization: density/m_k >= eps_k on [k+1/4, k+3/4] and >= eps_*/z^(1-alpha1) (or eps_*/z) on I_k.
    HypothesisCheck minor{"band_minorization"};
    HypothesisCheck sect{sector.variant == SectorVariant::strong ? "sector_density_strong" : "sector_density_weak"};
    HypothesisCheck bern{"bernoulli_parameter"};
    const double mpsi = BumpFunction::m_psi();
    for (int k = 1; k <= grid.k_max; ++k) {
        const double mk = nu.mass(k, k + 1.0);
        const double ek = splitting_constant(sector, k);
        detail::note(bern, 1.0 - ek * mpsi, "k=" + std::to_string(k));
        for (int i = 0; i <= 64; ++i) {
            const double z = k + i / 64.0 * (1.0 - 1e-9);
            const double d = nu.density(z) / mk;
            if (z >= k + 0.25 && z <= k + 0.75) detail::note(minor, d - ek, "k=" + std::to_string(k));
            const double target = sector.variant == SectorVariant::strong
                                      ? sector.eps_star / std::pow(z, 1.0 - sector.alpha1)
                                      : sector.eps_star / z;
            detail::note(sect, d - target, "k=" + std::to_string(k) + " z=" + std::to_string(z));
        }
    }
    for (auto* chk : {&minor, &sect, &bern}) {
        chk->pass = chk->worst_margin >= 0.0;
        rep.checks.push_back(*chk);
    }

    // Envelope decay: strong c_(z) >= exp(-z^alpha2) for large z, weak c_(z) >= z^-alpha.
    if (sector.variant == SectorVariant::strong) {
        HypothesisCheck ord{"sector_exponents"};
        const double strict = std::min(sector.alpha - sector.alpha2, sector.alpha2);
        ord.worst_margin = std::min(sector.alpha1 - sector.alpha, strict);
        ord.pass = sector.alpha1 >= sector.alpha && strict > 0.0;
        ord.detail = "alpha1 >= alpha0 > alpha2 > 0";
        rep.checks.push_back(ord);

        // Log-margin ln c_(z) + z^alpha2 on a geometric grid; the bound must hold from some z0 on.
        HypothesisCheck decay{"lower_envelope_decay"};
        double last_fail = 0.0;
        double literal = std::numeric_limits<double>::infinity();
        const int nz = 2000;
        for (int i = 0; i <= nz; ++i) {
            const double z = std::pow(grid.z_far, static_cast<double>(i) / nz);
            const double u = env.under(z);
            const double m = (u > 0.0 ? std::log(u) : -std::numeric_limits<double>::infinity()) +
                             std::pow(z, sector.alpha2);
            literal = std::min(literal, m);
            if (m < 0.0) last_fail = z;
        }
        decay.worst_margin = literal;
        decay.pass = last_fail < std::sqrt(grid.z_far);
        decay.detail = last_fail > 0.0 ? "holds for z >= " + std::to_string(last_fail) + " (fails below)"
                                       : "holds for all z >= 1";
        rep.checks.push_back(decay);
    } else {
        HypothesisCheck decay{"lower_envelope_decay"};
        for (double z : grid.z_values) {
            const double m = env.under(z) - std::pow(z, -sector.alpha);
            detail::note(decay, m, "z=" + std::to_string(z));
        }
        decay.pass = decay.worst_margin >= 0.0;
        rep.checks.push_back(decay);
    }
    return rep;
}

}  // namespace smalljump
