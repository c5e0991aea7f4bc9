#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "smalljump/smalljump.hpp"

using namespace smalljump;

namespace {

LevyModel additive_model() {
    LevyModel m;
    m.mu = LevyMeasure::truncated_stable(0.5);
    m.c = additive_coefficient();
    m.env.bar = PowerEnvelope{1.0, 1.0};
    m.env.under = PowerEnvelope{1.0, 4.0};
    m.env.breve = PowerEnvelope{1.0, 1.0};
    return m;
}

PathConfig config(double eps, int n, std::uint64_t seed = 11) {
    PathConfig c;
    c.eps = eps;
    c.n_steps = n;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(PathConfig, Validation) {
    auto c = config(1.5, 8);
    EXPECT_THROW(c.validate(), ConfigError);
    c = config(0.1, 0);
    EXPECT_THROW(c.validate(), ConfigError);
    c = config(0.1, 8);
    c.scheme = Scheme::reference;
    c.eps_ref = 0.01;
    EXPECT_DOUBLE_EQ(c.level(), 0.01);
    EXPECT_EQ(c.steps(), 32);
}

TEST(Simulate, ZeroCoefficientKeepsInitialState) {
    LevyModel m;
    m.mu = LevyMeasure::truncated_stable(0.5);
    m.c = zero_coefficient();
    auto c = config(0.1, 16);
    c.x0 = 1.75;
    PathSimulator sim(m, SectorSettings{}, c);
    for (std::uint64_t p = 0; p < 50; ++p) {
        const auto tr = sim.simulate(p);
        for (double x : tr.states) ASSERT_EQ(x, 1.75);
    }
}

TEST(BigJumps, SingleBandMeanCount) {
    const auto m = worked_example_model();
    const BandDecomposition bd(m.nu(), 0.5);
    ASSERT_EQ(bd.bands().size(), 1u);
    const BandSamplers s(bd);
    const std::size_t N = 100000;
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) sum += static_cast<double>(sample_big_jumps(bd, s, 1.0, 3, i).events.size());
    const double m1 = 2.0 * (std::sqrt(2.0) - 1.0);
    EXPECT_NEAR(sum / N, m1, 3.0 * std::sqrt(m1 / N));
}

TEST(BigJumps, CountsArePoissonPerBand) {
    const auto m = worked_example_model();
    const BandDecomposition bd(m.nu(), 0.2);
    const BandSamplers s(bd);
    const std::size_t N = 100000;
    std::vector<std::vector<std::uint64_t>> counts(bd.bands().size(), std::vector<std::uint64_t>(N));
    for (std::size_t i = 0; i < N; ++i) {
        const auto st = sample_big_jumps(bd, s, 1.0, 8, i);
        for (std::size_t b = 0; b < bd.bands().size(); ++b) counts[b][i] = st.band_counts[b];
    }
    for (std::size_t b = 0; b < bd.bands().size(); ++b) {
        const auto chi = poisson_chi_square(counts[b], bd.bands()[b].full_mass);
        EXPECT_GT(chi.p_value, 1e-3) << "band " << b + 1;
    }
}

TEST(BigJumps, EventsSortedInBandsAndTotalMass) {
    const auto m = worked_example_model();
    const BandDecomposition bd(m.nu(), 1.0 / 6.5);
    const BandSamplers s(bd);
    EXPECT_LT(oracle::rel(bd.total_mass(), m.mu.mass(1.0 / 6.5, 1.0)), 1e-12);
    double total = 0.0;
    const std::size_t N = 40000;
    for (std::size_t i = 0; i < N; ++i) {
        const auto st = sample_big_jumps(bd, s, 1.0, 1, i);
        total += static_cast<double>(st.events.size());
        for (std::size_t j = 0; j < st.events.size(); ++j) {
            const auto& e = st.events[j];
            ASSERT_GE(e.z_tilde, e.band);
            ASSERT_LT(e.z_tilde, std::min(e.band + 1.0, 6.5));
            ASSERT_GE(e.time, 0.0);
            ASSERT_LE(e.time, 1.0);
            if (j) {
                ASSERT_LE(st.events[j - 1].time, e.time);
            }
        }
    }
    const double lam = bd.total_mass();
    EXPECT_NEAR(total / N, lam, 3.0 * std::sqrt(lam / N));
}

TEST(Simulate, JumpsApplyTheCoefficientExactly) {
    const auto m = worked_example_model();
    PathSimulator sim(m, SectorSettings{}, config(0.1, 32));
    for (std::uint64_t p = 0; p < 200; ++p) {
        const auto tr = sim.simulate(p);
        for (const auto& e : tr.events) ASSERT_EQ(e.x_after, e.x_before + m.c.c(e.time, e.z, e.x_before));
    }
}

TEST(Simulate, AdditiveMartingaleMean) {
    const auto m = additive_model();
    auto c = config(0.1, 16);
    c.x0 = 0.5;
    PathSimulator sim(m, SectorSettings{}, c);
    const auto x = sim.terminals(100000, 1);
    const auto est = mean_estimate(x);
    EXPECT_NEAR(est.mean, 0.5 + 2.0, 3.0 * est.se);
}

TEST(Simulate, GaussianIsometryWithFrozenState) {
    const auto m = additive_model();
    PathSimulator sim(m, SectorSettings{}, config(0.1, 16));
    const double a = oracle::stable_moment(2, 0.5, 0.1);
    const auto tr = sim.simulate(0);
    for (const auto& s : tr.steps) EXPECT_LT(oracle::rel(s.var_rate, a), 1e-6);
    // Sum of per-step Gaussian increments over [0,T] has variance T a.
    std::vector<double> g;
    for (std::uint64_t p = 0; p < 40000; ++p) {
        const auto t = sim.simulate(p);
        double sum = 0.0;
        for (const auto& s : t.steps) sum += std::sqrt(s.var_rate * s.h) * s.normal;
        g.push_back(sum);
    }
    double v = 0.0;
    for (double x : g) v += x * x;
    v /= static_cast<double>(g.size());
    EXPECT_NEAR(v, a, 4.0 * a * std::sqrt(2.0 / static_cast<double>(g.size())));
}

TEST(Simulate, SigmaSineStepVarianceMatchesQuadrature) {
    const auto m = worked_example_model();
    PathSimulator sim(m, SectorSettings{}, config(0.2, 8));
    const auto tr = sim.simulate(3);
    for (const auto& s : tr.steps) EXPECT_LT(oracle::rel(s.var_rate, a_eps(m, s.t0, s.x0, 0.2)), 1e-6);
}

TEST(Simulate, DeterministicAndWorkerInvariant) {
    const auto m = worked_example_model();
    PathSimulator sim(m, SectorSettings{}, config(0.1, 32));
    const auto a = sim.simulate(17), b = sim.simulate(17);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.times, b.times);
    const auto t1 = sim.terminals(3000, 1), t8 = sim.terminals(3000, 8);
    EXPECT_EQ(t1, t8);
}

TEST(Simulate, TruncationEqualsGaussianWithZeroCoefficients) {
    const auto m = worked_example_model();
    auto c = config(0.1, 32);
    c.scheme = Scheme::truncation_only;
    PathSimulator trunc(m, SectorSettings{}, c);
    const SmallJumpCoefficients zero(m, 0.0, 1.0);
    for (std::uint64_t p = 0; p < 100; ++p) {
        const auto st = trunc.jumps(p);
        const auto tape = build_brownian(1.0, 32, st.events, c.seed, p);
        NullObserver obs;
        const double x0 = evolve_on_tape(m, nullptr, Stepper::euler, tape, st.events, 1, trunc.bands().M(), 0.0, 0.0, obs);
        const double x1 = evolve_on_tape(m, &zero, Stepper::euler, tape, st.events, 1, trunc.bands().M(), 0.0, 0.0, obs);
        ASSERT_EQ(x0, x1);
        ASSERT_EQ(x0, trunc.terminal(p));
    }
}

TEST(CoupledPair, EqualLevelsGiveIdenticalPaths) {
    const auto m = worked_example_model();
    const BandDecomposition bd(m.nu(), 0.1);
    auto c = config(0.1, 32);
    c.path_index = 4;
    const auto [a, b] = coupled_pair(m, bd, c, 0.1, 0.1);
    EXPECT_EQ(a.states, b.states);
}

TEST(CoupledPair, SharesBigJumpsAboveCoarseLevel) {
    const auto m = worked_example_model();
    const BandDecomposition bd(m.nu(), 0.2);
    for (std::uint64_t p = 0; p < 50; ++p) {
        auto c = config(0.2, 32);
        c.path_index = p;
        const auto [a, b] = coupled_pair(m, bd, c, 0.2, 0.05);
        std::vector<double> ta, tb;
        for (const auto& e : a.events) ta.push_back(e.time);
        for (const auto& e : b.events)
            if (e.z_tilde < 5.0) tb.push_back(e.time);
        ASSERT_EQ(ta, tb);
    }
}

TEST(CoupledPair, CouplingReducesVariance) {
    const auto m = worked_example_model();
    const BandDecomposition bd(m.nu(), 0.2);
    const std::size_t N = 10000;
    std::vector<double> coupled(N), independent(N);
    for (std::size_t i = 0; i < N; ++i) {
        auto c = config(0.2, 32);
        c.path_index = i;
        const auto [a, b] = coupled_pair(m, bd, c, 0.2, 0.1);
        coupled[i] = std::sin(a.terminal()) - std::sin(b.terminal());
        auto c2 = c;
        c2.path_index = i + N;
        const auto [a2, b2] = coupled_pair(m, bd, c2, 0.2, 0.1);
        independent[i] = std::sin(a.terminal()) - std::sin(b2.terminal());
    }
    const auto vc = mean_estimate(coupled).se, vi = mean_estimate(independent).se;
    EXPECT_LT(vc, 0.5 * vi);
}

TEST(EulerTransformed, SingleStepWithoutJumps) {
    const auto m = worked_example_model();
    auto c = config(1.0, 1);
    c.x0 = 0.4;
    const auto tr = euler_transformed(m, SectorSettings{}, c, 1, 64);
    ASSERT_EQ(tr.steps.size(), 1u);
    EXPECT_TRUE(tr.events.empty());
    const FrozenMarkVariance fv(m, 1.0, 64);
    EXPECT_DOUBLE_EQ(tr.steps[0].var_rate, fv.rate(0.0, 0.4));
    EXPECT_DOUBLE_EQ(tr.states.back(), 0.4 + tr.steps[0].drift + std::sqrt(tr.steps[0].var_rate) * tr.steps[0].normal);
}

TEST(EulerTransformed, SpaceGridFreezingConverges) {
    const auto m = worked_example_model();
    for (double eps : {0.1, 0.05}) {
        const FrozenMarkVariance fv(m, 1.0 / eps, 64);
        for (double x : {-1.0, 0.0, 2.0})
            EXPECT_LT(oracle::rel(fv.rate(0.0, x), a_eps(m, 0.0, x, eps)), 1e-3) << eps << " " << x;
    }
    // Left-endpoint freezing is first order in the grid step.
    const double exact = a_eps(m, 0.0, 0.0, 0.4);
    const double g64 = oracle::rel(FrozenMarkVariance(m, 2.5, 64).rate(0.0, 0.0), exact);
    const double g128 = oracle::rel(FrozenMarkVariance(m, 2.5, 128).rate(0.0, 0.0), exact);
    const double g512 = oracle::rel(FrozenMarkVariance(m, 2.5, 512).rate(0.0, 0.0), exact);
    EXPECT_NEAR(g128 / g64, 0.5, 0.05);
    EXPECT_LT(g512, 1e-3);
}

TEST(EulerTransformed, PathwiseGapShrinksWithResolution) {
    const auto m = worked_example_model();
    const std::size_t N = 1000;
    auto terminals = [&](int n) {
        std::vector<double> v(N);
        for (std::size_t i = 0; i < N; ++i) {
            auto c = config(0.2, n, 21);
            c.path_index = i;
            v[i] = euler_transformed(m, SectorSettings{}, c, n, 32).terminal();
        }
        return v;
    };
    const auto ref = terminals(128);
    auto gap = [&](int n) {
        const auto v = terminals(n);
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) s += std::fabs(v[i] - ref[i]);
        return s / N;
    };
    const double g2 = gap(2), g8 = gap(8), g32 = gap(32);
    EXPECT_GT(g2, g8);
    EXPECT_GT(g8, g32);
    auto c = config(0.2, 4, 21);
    EXPECT_NE(euler_transformed(m, SectorSettings{}, c, 4, 32).states.back(),
              euler_transformed(m, SectorSettings{}, c, 8, 32).states.back());
}
