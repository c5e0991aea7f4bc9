#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "bump.hpp"
#include "errors.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace smalljump {

struct SplitRecord {
    int xi = 0;
    double v = 0.0;
    double u = 0.0;
    double z = 0.0;
};

// Splitting of the band-conditional law 1_{I_k} nu / m_k into eps_k*psi_k + residual.
class SplitSampler {
public:
    static constexpr int rejection_cap = 10000;

    SplitSampler(const TransformedMeasure& nu, int k, double eps_k) : nu_(&nu), k_(k), eps_k_(eps_k) {
        if (k < 1) throw ConfigError("splitting: band index must be >= 1");
        mass_ = nu.mass(k, k + 1.0);
        if (!(mass_ > 0.0)) throw ConfigError("splitting: band " + std::to_string(k) + " has zero mass");
        p_xi_ = eps_k * BumpFunction::m_psi();
        if (!(p_xi_ >= 0.0 && p_xi_ < 1.0))
            throw ConfigError("splitting: eps_k * m(psi) outside [0,1) on band " + std::to_string(k));
        constexpr int grid = 1000;
        for (int i = 0; i <= grid; ++i) {
            const double z = k + (i + 0.5) / (grid + 1.0);
            const double r = nu.density(z) / mass_ - eps_k * BumpFunction::psi_k(k, z);
            if (r < -1e-14)
                throw ConfigError("splitting: minorization violated on band " + std::to_string(k) + " at z=" +
                                  std::to_string(z) + " (residual density " + std::to_string(r) + ")");
        }
    }

    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] double eps_k() const noexcept { return eps_k_; }
    [[nodiscard]] double mass() const noexcept { return mass_; }
    [[nodiscard]] double p_xi() const noexcept { return p_xi_; }

    [[nodiscard]] double band_density(double z) const {
        if (!(z >= k_ && z < k_ + 1.0)) return 0.0;
        return nu_->density(z) / mass_;
    }

    [[nodiscard]] double residual_density(double u) const {
        if (!(u >= k_ && u < k_ + 1.0)) return 0.0;
        const double r = (band_density(u) - eps_k_ * BumpFunction::psi_k(k_, u)) / (1.0 - p_xi_);
        if (r < -1e-14)
            throw ConfigError("splitting: negative residual density at u=" + std::to_string(u) +
                              " (minorization violated)");
        return std::max(r, 0.0);
    }

    SplitRecord sample(Rng& rng) const {
        SplitRecord rec;
        rec.xi = rng.uniform() < p_xi_ ? 1 : 0;
        rec.v = k_ + 0.5 + BumpQuantileTable::instance().quantile(rng.uniform());
        rec.u = sample_residual(rng);
        rec.z = rec.xi ? rec.v : rec.u;
        return rec;
    }

    // Direct draw from the band-conditional law, without splitting.
    double sample_direct(Rng& rng) const { return nu_->conditional_quantile(k_, k_ + 1.0, rng.uniform()); }

private:
    double sample_residual(Rng& rng) const {
        if (p_xi_ == 0.0) return sample_direct(rng);
        for (int it = 0; it < rejection_cap; ++it) {
            const double z = sample_direct(rng);
            const double accept = 1.0 - eps_k_ * BumpFunction::psi_k(k_, z) * mass_ / nu_->density(z);
            if (rng.uniform() < accept) return z;
        }
        throw NumericalError("splitting: residual rejection exceeded " + std::to_string(rejection_cap) +
                             " iterations on band " + std::to_string(k_) + " (minorization violated)");
    }

    const TransformedMeasure* nu_;
    int k_;
    double eps_k_;
    double mass_ = 0.0;
    double p_xi_ = 0.0;
};

// One sampler per full band [k, k+1) touched by a decomposition.
class BandSamplers {
public:
    BandSamplers() = default;
    explicit BandSamplers(const BandDecomposition& bands) : nu_(std::make_unique<TransformedMeasure>(bands.nu())) {
        for (const auto& b : bands.bands()) samplers_.emplace_back(*nu_, b.k, b.eps_k);
    }
    BandSamplers(BandSamplers&&) noexcept = default;
    BandSamplers& operator=(BandSamplers&&) noexcept = default;

    [[nodiscard]] const SplitSampler& operator[](std::size_t i) const { return samplers_[i]; }
    [[nodiscard]] std::size_t size() const noexcept { return samplers_.size(); }

private:
    std::unique_ptr<TransformedMeasure> nu_;
    std::vector<SplitSampler> samplers_;
};

struct SplitCheckRow {
    int band = 1;
    std::size_t N = 0;
    double ks_stat = 0.0;
    double p_xi_emp = 0.0;
    double p_xi_exact = 0.0;
    double p_xi_se = 0.0;
    double mass = 0.0;
};

// Split draws against direct draws from 1_{I_k} nu / m_k, each draw keyed by (seed, i, band).
inline SplitCheckRow split_law_check(const TransformedMeasure& nu, const SectorSettings& sector, int k, std::size_t N,
                                     std::uint64_t seed, int workers = 1) {
    const SplitSampler sampler(nu, k, splitting_constant(sector, k));
    std::vector<double> split(N), direct(N);
    std::vector<unsigned char> xi(N);
    parallel_for(N, workers, [&](std::size_t i) {
        Rng a(seed, i, StreamTag::test, 2 * static_cast<std::uint64_t>(k));
        Rng b(seed, i, StreamTag::test, 2 * static_cast<std::uint64_t>(k) + 1);
        const auto rec = sampler.sample(a);
        split[i] = rec.z;
        xi[i] = static_cast<unsigned char>(rec.xi);
        direct[i] = sampler.sample_direct(b);
    });
    SplitCheckRow row;
    row.band = k;
    row.N = N;
    row.mass = sampler.mass();
    std::size_t hits = 0;
    for (auto v : xi) hits += v;
    row.p_xi_emp = static_cast<double>(hits) / static_cast<double>(N);
    row.p_xi_exact = sampler.p_xi();
    row.p_xi_se = std::sqrt(row.p_xi_exact * (1.0 - row.p_xi_exact) / static_cast<double>(N));
    row.ks_stat = ks_statistic(std::move(split), std::move(direct));
    return row;
}

}  // namespace smalljump
