#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "measure.hpp"

namespace smalljump {

// Drift b_eps, volatility sqrt(a_eps) and their x-derivatives at one point.
struct DriftVolJet {
    double b = 0.0, b_x = 0.0, b_xx = 0.0;
    double vol = 0.0, vol_x = 0.0, vol_xx = 0.0;
};

struct CoefficientBox {
    double x_lo = -40.0;
    double x_hi = 40.0;
    int s_nodes = 64;
    int x_nodes = 256;
};

// Evaluates the small-jump drift and diffusion of level eps. Separable coefficients are
// handled exactly; others are interpolated from a bicubic lattice with a quadrature
// fallback outside the box.
class SmallJumpCoefficients {
public:
    SmallJumpCoefficients() = default;

    SmallJumpCoefficients(const LevyModel& model, double eps, double T, CoefficientBox box = {},
                          const QuadratureOptions& opt = {})
        : model_(&model), eps_(eps), T_(T), box_(box), opt_(opt) {
        if (eps == 0.0) {
            zero_ = true;
            return;
        }
        if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps out of (0,1]");
        if (model.c.separable) {
            const auto& sf = *model.c.separable;
            B_ = model.mu.integrate([&](double z) { return sf.g(z); }, 0.0, eps, opt).value;
            const auto ra = model.mu.integrate(
                [&](double z) {
                    const double g = sf.g(z);
                    return g * g;
                },
                0.0, eps, opt);
            if (!ra.converged) throw NumericalError("small-jump variance: quadrature did not converge");
            sqrtA_ = std::sqrt(ra.value);
            separable_ = true;
            return;
        }
        build_lattice();
    }

    [[nodiscard]] double eps() const noexcept { return eps_; }
    [[nodiscard]] bool exact() const noexcept { return separable_ || zero_; }

    [[nodiscard]] DriftVolJet jet(double s, double x) const {
        DriftVolJet j;
        if (zero_) return j;
        if (separable_) {
            const HJet h = model_->c.separable->h(s, x);
            const double sg = h.h < 0.0 ? -1.0 : 1.0;
            j.b = h.h * B_;
            j.b_x = h.h_x * B_;
            j.b_xx = h.h_xx * B_;
            j.vol = sg * h.h * sqrtA_;
            j.vol_x = sg * h.h_x * sqrtA_;
            j.vol_xx = sg * h.h_xx * sqrtA_;
            return j;
        }
        if (x < box_.x_lo || x > box_.x_hi) return direct_jet(s, x);
        return lattice_jet(s, x);
    }

    [[nodiscard]] double drift(double s, double x) const { return jet(s, x).b; }
    [[nodiscard]] double variance(double s, double x) const {
        const double v = jet(s, x).vol;
        return v * v;
    }

private:
    [[nodiscard]] double direct_b(double s, double x) const { return b_eps(*model_, s, x, eps_, opt_); }
    [[nodiscard]] double direct_vol(double s, double x) const { return std::sqrt(a_eps(*model_, s, x, eps_, opt_)); }

    [[nodiscard]] DriftVolJet direct_jet(double s, double x) const {
        const double h = 1e-3 * std::max(1.0, std::fabs(x));
        DriftVolJet j;
        const double b0 = direct_b(s, x), bp = direct_b(s, x + h), bm = direct_b(s, x - h);
        const double v0 = direct_vol(s, x), vp = direct_vol(s, x + h), vm = direct_vol(s, x - h);
        j.b = b0;
        j.b_x = (bp - bm) / (2.0 * h);
        j.b_xx = (bp - 2.0 * b0 + bm) / (h * h);
        j.vol = v0;
        j.vol_x = (vp - vm) / (2.0 * h);
        j.vol_xx = (vp - 2.0 * v0 + vm) / (h * h);
        return j;
    }

    void build_lattice() {
        ns_ = model_->c.time_homogeneous ? 1 : box_.s_nodes;
        nx_ = box_.x_nodes;
        dx_ = (box_.x_hi - box_.x_lo) / (nx_ - 1);
        ds_ = ns_ > 1 ? T_ / (ns_ - 1) : 1.0;
        bl_.assign(static_cast<std::size_t>(ns_ * nx_), 0.0);
        vl_.assign(static_cast<std::size_t>(ns_ * nx_), 0.0);
        for (int i = 0; i < ns_; ++i)
            for (int j = 0; j < nx_; ++j) {
                const double s = i * ds_;
                const double x = box_.x_lo + j * dx_;
                bl_[static_cast<std::size_t>(i * nx_ + j)] = direct_b(s, x);
                vl_[static_cast<std::size_t>(i * nx_ + j)] = direct_vol(s, x);
            }
    }

    // Catmull-Rom weights and their first and second derivatives.
    static void cubic_weights(double t, std::array<double, 4>& w, std::array<double, 4>& d,
                              std::array<double, 4>& dd) {
        const double t2 = t * t, t3 = t2 * t;
        w = {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t), 0.5 * (t3 - t2)};
        d = {0.5 * (-3 * t2 + 4 * t - 1), 0.5 * (9 * t2 - 10 * t), 0.5 * (-9 * t2 + 8 * t + 1), 0.5 * (3 * t2 - 2 * t)};
        dd = {0.5 * (-6 * t + 4), 0.5 * (18 * t - 10), 0.5 * (-18 * t + 8), 0.5 * (6 * t - 2)};
    }

    [[nodiscard]] DriftVolJet lattice_jet(double s, double x) const {
        const double px = (x - box_.x_lo) / dx_;
        int jx = static_cast<int>(std::floor(px));
        jx = std::clamp(jx, 0, nx_ - 2);
        const double tx = px - jx;
        std::array<double, 4> wx, dwx, ddwx;
        cubic_weights(tx, wx, dwx, ddwx);
        std::array<double, 4> ws{1.0, 0.0, 0.0, 0.0};
        int js = 0;
        int sn = 1;
        if (ns_ > 1) {
            const double ps = std::clamp(s / ds_, 0.0, static_cast<double>(ns_ - 1));
            js = std::clamp(static_cast<int>(std::floor(ps)), 0, ns_ - 2);
            std::array<double, 4> d1, d2;
            cubic_weights(ps - js, ws, d1, d2);
            sn = 4;
        }
        DriftVolJet j;
        for (int a = 0; a < sn; ++a) {
            const int is = ns_ > 1 ? std::clamp(js - 1 + a, 0, ns_ - 1) : 0;
            const double wsa = ws[static_cast<std::size_t>(a)];
            for (int c = 0; c < 4; ++c) {
                const int ix = std::clamp(jx - 1 + c, 0, nx_ - 1);
                const std::size_t idx = static_cast<std::size_t>(is * nx_ + ix);
                const auto cc = static_cast<std::size_t>(c);
                j.b += wsa * wx[cc] * bl_[idx];
                j.b_x += wsa * dwx[cc] * bl_[idx];
                j.b_xx += wsa * ddwx[cc] * bl_[idx];
                j.vol += wsa * wx[cc] * vl_[idx];
                j.vol_x += wsa * dwx[cc] * vl_[idx];
                j.vol_xx += wsa * ddwx[cc] * vl_[idx];
            }
        }
        j.b_x /= dx_;
        j.vol_x /= dx_;
        j.b_xx /= dx_ * dx_;
        j.vol_xx /= dx_ * dx_;
        return j;
    }

    const LevyModel* model_ = nullptr;
    double eps_ = 0.0;
    double T_ = 1.0;
    CoefficientBox box_{};
    QuadratureOptions opt_{};
    bool zero_ = false;
    bool separable_ = false;
    double B_ = 0.0;
    double sqrtA_ = 0.0;
    int ns_ = 1, nx_ = 0;
    double ds_ = 1.0, dx_ = 1.0;
    std::vector<double> bl_, vl_;
};

}  // namespace smalljump
