#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bump.hpp"
#include "errors.hpp"
#include "quadrature.hpp"

namespace smalljump {

// Levy measure on (0,1] given by a Lebesgue density.
class LevyMeasure {
public:
    LevyMeasure() { set_stable(0.5); }

    static LevyMeasure truncated_stable(double rho) {
        if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("measure: stable index rho must lie in [0,1)");
        LevyMeasure m;
        m.set_stable(rho);
        return m;
    }

    static LevyMeasure from_density(std::function<double(double)> density, std::string name) {
        LevyMeasure m;
        m.rho_.reset();
        m.density_ = std::move(density);
        m.name_ = std::move(name);
        return m;
    }

    [[nodiscard]] double density(double z) const {
        if (!(z > 0.0 && z <= 1.0)) return 0.0;
        return density_(z);
    }

    [[nodiscard]] bool is_stable() const noexcept { return rho_.has_value(); }
    [[nodiscard]] double rho() const { return rho_.value_or(std::numeric_limits<double>::quiet_NaN()); }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

    // Integral of f against mu over (lo, hi], 0 <= lo < hi <= 1.
    template <class F>
    [[nodiscard]] QuadratureResult integrate(F&& f, double lo, double hi, const QuadratureOptions& opt = {}) const {
        hi = std::min(hi, 1.0);
        if (!(hi > lo)) return {0.0, 0.0, 0, true};
        auto g = [&](double z) { return f(z) * density_(z); };
        if (lo <= 0.0) return integrate_near_zero(g, hi, opt);
        // Log substitution keeps wide ranges near zero well resolved.
        auto gl = [&](double u) {
            const double z = std::exp(u);
            return g(z) * z;
        };
        return smalljump::integrate(gl, std::log(lo), std::log(hi), opt);
    }

    // mu((lo, hi]) for 0 < lo < hi <= 1.
    [[nodiscard]] double mass(double lo, double hi) const {
        hi = std::min(hi, 1.0);
        if (!(hi > lo)) return 0.0;
        if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
        if (rho_) {
            const double r = *rho_;
            if (r == 0.0) return std::log(hi / lo);
            return (std::pow(lo, -r) - std::pow(hi, -r)) / r;
        }
        const auto res = integrate([](double) { return 1.0; }, lo, hi);
        if (!res.converged) throw NumericalError("measure: mass quadrature failed on (" + std::to_string(lo) + "," +
                                                 std::to_string(hi) + "]");
        return res.value;
    }

private:
    void set_stable(double rho) {
        rho_ = rho;
        name_ = "truncated_stable";
        density_ = [rho](double z) { return std::pow(z, -1.0 - rho); };
    }

    std::function<double(double)> density_;
    std::optional<double> rho_;
    std::string name_;
};

// Image of mu under z -> 1/z, a measure on [1, inf).
class TransformedMeasure {
public:
    TransformedMeasure() = default;
    explicit TransformedMeasure(LevyMeasure origin) : origin_(std::move(origin)) {}

    [[nodiscard]] const LevyMeasure& origin() const noexcept { return origin_; }

    [[nodiscard]] double density(double z) const {
        if (!(z >= 1.0)) return 0.0;
        return origin_.density(1.0 / z) / (z * z);
    }

    // nu([a, b]) = mu([1/b, 1/a]).
    [[nodiscard]] double mass(double a, double b) const {
        a = std::max(a, 1.0);
        if (!(b > a)) return 0.0;
        return origin_.mass(1.0 / b, 1.0 / a);
    }

    template <class F>
    [[nodiscard]] QuadratureResult integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) const {
        a = std::max(a, 1.0);
        if (std::isinf(b)) {
            auto g = [&](double z) { return f(z) * density(z); };
            return integrate_to_infinity(g, a, opt);
        }
        auto g = [&](double z) { return f(z) * density(z); };
        return smalljump::integrate(g, a, b, opt);
    }

    // Inverse of the conditional cdf of nu restricted to [a, b).
    [[nodiscard]] double conditional_quantile(double a, double b, double u) const {
        if (origin_.is_stable()) {
            const double r = origin_.rho();
            if (r == 0.0) return a * std::exp(u * std::log(b / a));
            const double ar = std::pow(a, r), br = std::pow(b, r);
            return std::pow(ar + u * (br - ar), 1.0 / r);
        }
        // Bisection on the conditional cdf.
        const double total = mass(a, b);
        double lo = a, hi = b;
        for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            (mass(a, mid) / total <= u ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    LevyMeasure origin_;
};

[[nodiscard]] inline TransformedMeasure transform_measure(const LevyMeasure& mu) { return TransformedMeasure(mu); }

struct HJet {
    double h = 0.0, h_x = 0.0, h_xx = 0.0;
};

// c(s,z,x) = h(s,x) * g(z).
struct SeparableForm {
    std::function<HJet(double, double)> h;
    std::function<double(double)> g;
    std::function<double(double)> g_z;
};

struct JumpCoefficient {
    std::string name = "zero";
    std::function<double(double, double, double)> c;
    std::function<double(double, double, double)> c_x;
    std::function<double(double, double, double)> c_xx;
    std::function<double(double, double, double)> c_z;
    // d_x^bx d_z^bz of c~(s, z~, x) = c(s, 1/z~, x); may be empty.
    std::function<double(int, int, double, double, double)> tilde_partial;
    std::optional<SeparableForm> separable;
    bool time_homogeneous = true;
    int max_order = 1;

    [[nodiscard]] double value(double s, double z, double x) const { return c(s, z, x); }
    [[nodiscard]] double tilde(double s, double zt, double x) const { return c(s, 1.0 / zt, x); }
    [[nodiscard]] double tilde_x(double s, double zt, double x) const { return c_x(s, 1.0 / zt, x); }
    [[nodiscard]] double tilde_z(double s, double zt, double x) const {
        return -c_z(s, 1.0 / zt, x) / (zt * zt);
    }
};

// Power-law envelope scale * z^-power on [1, inf).
struct PowerEnvelope {
    double scale = 0.0;
    double power = 0.0;
    [[nodiscard]] double operator()(double z) const { return scale * std::pow(z, -power); }
};

struct Envelopes {
    PowerEnvelope bar{2.5, 1.0};
    PowerEnvelope under{2.25, 4.0};
    PowerEnvelope breve{2.5, 1.0};
    int q_star = 1;
};

// Built-in coefficient families.

// c = (sigma0 + amp * sin(freq*x + phase)) * z.
[[nodiscard]] inline JumpCoefficient sigma_sine_coefficient(double sigma0 = 2.0, double amp = 0.5, double freq = 1.0,
                                                            double phase = 0.0) {
    JumpCoefficient jc;
    jc.name = "sigma_sine";
    auto sigma_n = [=](int n, double x) {
        const double arg = freq * x + phase;
        switch (n % 4) {
            case 0: return (n == 0 ? sigma0 : 0.0) + amp * std::pow(freq, n) * std::sin(arg);
            case 1: return amp * std::pow(freq, n) * std::cos(arg);
            case 2: return -amp * std::pow(freq, n) * std::sin(arg);
            default: return -amp * std::pow(freq, n) * std::cos(arg);
        }
    };
    jc.c = [=](double, double z, double x) { return (sigma0 + amp * std::sin(freq * x + phase)) * z; };
    jc.c_x = [=](double, double z, double x) { return amp * freq * std::cos(freq * x + phase) * z; };
    jc.c_xx = [=](double, double z, double x) { return -amp * freq * freq * std::sin(freq * x + phase) * z; };
    jc.c_z = [=](double, double, double x) { return sigma0 + amp * std::sin(freq * x + phase); };
    jc.tilde_partial = [=](int bx, int bz, double, double zt, double x) {
        double fact = 1.0;
        for (int i = 2; i <= bz; ++i) fact *= i;
        const double sign = (bz % 2 == 0) ? 1.0 : -1.0;
        return sigma_n(bx, x) * sign * fact * std::pow(zt, -1.0 - bz);
    };
    jc.separable = SeparableForm{
        [=](double, double x) {
            const double arg = freq * x + phase;
            const double sn = std::sin(arg), cs = std::cos(arg);
            return HJet{sigma0 + amp * sn, amp * freq * cs, -amp * freq * freq * sn};
        },
        [](double z) { return z; }, [](double) { return 1.0; }};
    jc.max_order = 8;
    return jc;
}

// c = scale * z.
[[nodiscard]] inline JumpCoefficient additive_coefficient(double scale = 1.0) {
    JumpCoefficient jc;
    jc.name = "additive";
    jc.c = [=](double, double z, double) { return scale * z; };
    jc.c_x = [](double, double, double) { return 0.0; };
    jc.c_xx = [](double, double, double) { return 0.0; };
    jc.c_z = [=](double, double, double) { return scale; };
    jc.tilde_partial = [=](int bx, int bz, double, double zt, double) {
        if (bx > 0) return 0.0;
        double fact = 1.0;
        for (int i = 2; i <= bz; ++i) fact *= i;
        return scale * ((bz % 2 == 0) ? 1.0 : -1.0) * fact * std::pow(zt, -1.0 - bz);
    };
    jc.separable = SeparableForm{[=](double, double) { return HJet{scale, 0.0, 0.0}; }, [](double z) { return z; },
                                 [](double) { return 1.0; }};
    jc.max_order = 8;
    return jc;
}

[[nodiscard]] inline JumpCoefficient zero_coefficient() {
    JumpCoefficient jc = additive_coefficient(0.0);
    jc.name = "zero";
    return jc;
}

// Non-separable: c = z * (sigma0 + amp * sin(x + shear * z)).
[[nodiscard]] inline JumpCoefficient sine_shear_coefficient(double sigma0 = 2.0, double amp = 0.5,
                                                            double shear = 1.0) {
    JumpCoefficient jc;
    jc.name = "sine_shear";
    jc.c = [=](double, double z, double x) { return z * (sigma0 + amp * std::sin(x + shear * z)); };
    jc.c_x = [=](double, double z, double x) { return z * amp * std::cos(x + shear * z); };
    jc.c_xx = [=](double, double z, double x) { return -z * amp * std::sin(x + shear * z); };
    jc.c_z = [=](double, double z, double x) {
        return sigma0 + amp * std::sin(x + shear * z) + z * amp * shear * std::cos(x + shear * z);
    };
    jc.tilde_partial = [=](int bx, int bz, double s, double zt, double x) {
        // Central differences in z~ on top of exact x-derivatives; diagnostic use only.
        auto base = [&](double w) {
            const double z = 1.0 / w;
            const double arg = x + shear * z;
            double trig;
            switch (bx % 4) {
                case 0: trig = std::sin(arg); break;
                case 1: trig = std::cos(arg); break;
                case 2: trig = -std::sin(arg); break;
                default: trig = -std::cos(arg); break;
            }
            return z * ((bx == 0 ? sigma0 : 0.0) + amp * trig);
        };
        (void)s;
        if (bz == 0) return base(zt);
        const double h = 1e-4 * zt;
        if (bz == 1) return (base(zt + h) - base(zt - h)) / (2.0 * h);
        return (base(zt + h) - 2.0 * base(zt) + base(zt - h)) / (h * h);
    };
    jc.max_order = 2;
    return jc;
}

struct LevyModel {
    LevyMeasure mu;
    JumpCoefficient c = zero_coefficient();
    Envelopes env;

    [[nodiscard]] TransformedMeasure nu() const { return TransformedMeasure(mu); }
};

// Default worked model: rho = 0.5, sigma(x) = 2 + 0.5 sin x.
[[nodiscard]] inline LevyModel worked_example_model(double rho = 0.5) {
    LevyModel m;
    m.mu = LevyMeasure::truncated_stable(rho);
    m.c = sigma_sine_coefficient();
    m.env = Envelopes{};
    return m;
}

// Moment integrals.

[[nodiscard]] inline double eta_p(const LevyModel& model, int p, double eps, const QuadratureOptions& opt = {}) {
    if (p < 1) throw ConfigError("eta_p: p must be >= 1");
    if (eps == 0.0) return 0.0;
    if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps out of (0,1]");
    const auto& bar = model.env.bar;
    auto f = [&](double z) { return std::pow(std::fabs(bar(1.0 / z)), p); };
    const auto r = model.mu.integrate(f, 0.0, eps, opt);
    if (!r.converged || !std::isfinite(r.value))
        throw NumericalError("eta_p: integrability failure of the envelope (p=" + std::to_string(p) + ")");
    return r.value;
}

[[nodiscard]] inline double b_eps(const LevyModel& model, double s, double x, double eps,
                                  const QuadratureOptions& opt = {}) {
    if (eps == 0.0) return 0.0;
    if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps out of (0,1]");
    const auto r = model.mu.integrate([&](double z) { return model.c.c(s, z, x); }, 0.0, eps, opt);
    if (!r.converged || !std::isfinite(r.value)) throw NumericalError("b_eps: non-integrable configuration");
    return r.value;
}

[[nodiscard]] inline double a_eps(const LevyModel& model, double s, double x, double eps,
                                  const QuadratureOptions& opt = {}) {
    if (eps == 0.0) return 0.0;
    if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps out of (0,1]");
    const auto r = model.mu.integrate(
        [&](double z) {
            const double v = model.c.c(s, z, x);
            return v * v;
        },
        0.0, eps, opt);
    if (!r.converged || !std::isfinite(r.value)) throw NumericalError("a_eps: non-integrable configuration");
    return r.value;
}

// Bands.

enum class SectorVariant { strong, weak };

struct SectorSettings {
    SectorVariant variant = SectorVariant::strong;
    double eps_star = 0.5;
    // Strong: exponent alpha_0 in eps_k = eps_*/(k+1)^(1-alpha). Weak: exponent in c_ >= z^-alpha.
    double alpha = 0.75;
    double alpha1 = 0.75;
    double alpha2 = 0.5;
};

[[nodiscard]] inline double splitting_constant(const SectorSettings& s, int k) {
    if (s.variant == SectorVariant::strong) return s.eps_star / std::pow(k + 1.0, 1.0 - s.alpha);
    return s.eps_star / (k + 1.0);
}

struct Band {
    int k = 1;
    double lo = 1.0;
    double hi = 2.0;
    double mass = 0.0;       // nu([lo, hi))
    double full_mass = 0.0;  // nu([k, k+1))
    double eps_k = 0.0;
    bool partial = false;
};

class BandDecomposition {
public:
    BandDecomposition() = default;

    BandDecomposition(const TransformedMeasure& nu, double eps, SectorSettings sector = {})
        : nu_(nu), sector_(sector), eps_(eps) {
        if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps out of (0,1]");
        double M = 1.0 / eps;
        const double r = std::round(M);
        if (std::fabs(M - r) <= 1e-9 * M) M = r;
        M_ = M;
        const int full = static_cast<int>(std::floor(M));
        const double mpsi = BumpFunction::m_psi();
        for (int k = 1; k <= full; ++k) {
            Band b;
            b.k = k;
            b.lo = k;
            b.hi = std::min<double>(k + 1, M);
            if (!(b.hi > b.lo)) break;
            b.partial = b.hi < k + 1;
            b.full_mass = nu.mass(k, k + 1.0);
            b.mass = b.partial ? nu.mass(b.lo, b.hi) : b.full_mass;
            b.eps_k = splitting_constant(sector, k);
            if (!(b.eps_k * mpsi < 1.0) || !(b.eps_k >= 0.0))
                throw ConfigError("bands: eps_k * m(psi) must lie in [0,1) (band " + std::to_string(k) + ")");
            bands_.push_back(b);
        }
    }

    [[nodiscard]] const std::vector<Band>& bands() const noexcept { return bands_; }
    [[nodiscard]] double M() const noexcept { return M_; }
    [[nodiscard]] double eps() const noexcept { return eps_; }
    [[nodiscard]] const SectorSettings& sector() const noexcept { return sector_; }
    [[nodiscard]] const TransformedMeasure& nu() const noexcept { return nu_; }
    [[nodiscard]] double total_mass() const {
        double s = 0.0;
        for (const auto& b : bands_) s += b.mass;
        return s;
    }

private:
    TransformedMeasure nu_;
    SectorSettings sector_;
    double eps_ = 1.0;
    double M_ = 1.0;
    std::vector<Band> bands_;
};

}  // namespace smalljump
