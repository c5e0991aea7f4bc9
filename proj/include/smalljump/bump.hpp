#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "quadrature.hpp"

namespace smalljump {

// Smooth bump psi supported in [-1/2, 1/2], equal to 1 on [-1/4, 1/4].
struct BumpFunction {
    // a(y) = 1 - 1/(1 - (4y-1)^2) on [1/4, 1/2).
    [[nodiscard]] static double a(double y) noexcept {
        const double w = 4.0 * y - 1.0;
        const double d = 1.0 - w * w;
        if (!(d > 0.0)) return -std::numeric_limits<double>::infinity();
        return 1.0 - 1.0 / d;
    }

    [[nodiscard]] static double a_prime(double y) noexcept {
        const double w = 4.0 * y - 1.0;
        const double d = 1.0 - w * w;
        return -8.0 * w / (d * d);
    }

    [[nodiscard]] static double psi(double y) noexcept {
        const double ay = std::fabs(y);
        if (ay <= 0.25) return 1.0;
        if (ay >= 0.5) return 0.0;
        return std::exp(a(ay));
    }

    [[nodiscard]] static double psi_k(int k, double y) noexcept { return psi(y - (k + 0.5)); }

    // d/dy ln psi_k; NaN outside the open support, where psi_k vanishes.
    [[nodiscard]] static double theta_k(int k, double y) noexcept {
        const double u = y - (k + 0.5);
        const double au = std::fabs(u);
        if (au <= 0.25) return 0.0;
        if (au >= 0.5) return std::numeric_limits<double>::quiet_NaN();
        return (u > 0.0 ? 1.0 : -1.0) * a_prime(au);
    }

    [[nodiscard]] static double m_psi_with(const QuadratureOptions& opt) {
        const auto tail = integrate([](double y) { return psi(y); }, 0.25, 0.5, opt);
        if (!tail.converged) throw NumericalError("m(psi): quadrature did not converge");
        return 0.5 + 2.0 * tail.value;
    }

    [[nodiscard]] static double m_psi() {
        static const double value = m_psi_with(QuadratureOptions{1e-13, 1e-300, 4000});
        return value;
    }
};

// Inverse-CDF table of the density psi/m(psi) on [-1/2, 1/2].
class BumpQuantileTable {
public:
    static constexpr int size = 4096;

    BumpQuantileTable() {
        // Cumulative mass on a fine y-grid of the right half, then inverted by bisection.
        constexpr int fine = 1 << 14;
        std::vector<double> cum(fine + 1, 0.0);
        const double h = 0.5 / fine;
        for (int i = 0; i < fine; ++i) {
            const double y0 = i * h;
            const double y1 = y0 + h;
            double piece;
            if (y1 <= 0.25) {
                piece = h;
            } else {
                piece = integrate([](double y) { return BumpFunction::psi(y); }, y0, y1,
                                  QuadratureOptions{1e-13, 1e-300, 200})
                            .value;
            }
            cum[i + 1] = cum[i] + piece;
        }
        const double half_mass = cum[fine];
        // q_[j] = quantile at u = j/size.
        for (int j = 0; j <= size; ++j) {
            const double u = static_cast<double>(j) / size;
            const double target = std::fabs(u - 0.5) * 2.0 * half_mass;  // mass from 0 outward
            double y;
            if (target >= half_mass) {
                y = 0.5;
            } else {
                int lo = 0, hi = fine;
                while (hi - lo > 1) {
                    const int mid = (lo + hi) / 2;
                    (cum[mid] <= target ? lo : hi) = mid;
                }
                double ya = lo * h, yb = (lo + 1) * h;
                double base = cum[lo];
                for (int it = 0; it < 60; ++it) {
                    const double ym = 0.5 * (ya + yb);
                    const double m = base + (ym <= 0.25 ? ym - ya
                                                        : integrate([](double t) { return BumpFunction::psi(t); },
                                                                    ya, ym, QuadratureOptions{1e-13, 1e-300, 200})
                                                              .value);
                    if (m <= target) {
                        base = m;
                        ya = ym;
                    } else {
                        yb = ym;
                    }
                }
                y = 0.5 * (ya + yb);
            }
            q_[static_cast<std::size_t>(j)] = u < 0.5 ? -y : y;
        }
    }

    // Maps u in (0,1) to a draw of V - (k + 1/2).
    [[nodiscard]] double quantile(double u) const noexcept {
        const double pos = u * size;
        int j = static_cast<int>(pos);
        if (j >= size) j = size - 1;
        const double w = pos - j;
        return q_[static_cast<std::size_t>(j)] * (1.0 - w) + q_[static_cast<std::size_t>(j) + 1] * w;
    }

    [[nodiscard]] static const BumpQuantileTable& instance() {
        static const BumpQuantileTable table;
        return table;
    }

private:
    std::array<double, size + 1> q_{};
};

}  // namespace smalljump
