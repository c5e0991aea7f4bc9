#include <gtest/gtest.h>

#include <cmath>

#include "smalljump/smalljump.hpp"

using namespace smalljump;

namespace {

PathConfig config(double eps, int n, std::uint64_t seed = 5) {
    PathConfig c;
    c.eps = eps;
    c.n_steps = n;
    c.seed = seed;
    return c;
}

// Two-step toy path with one jump between the steps and no x-dependence in the steps.
Trajectory toy_path(int xi, double var0, double var1) {
    Trajectory tr;
    tr.M = 4.0;
    tr.times = {0.0, 0.5, 0.5, 1.0};
    tr.states = {0.3, 0.3, 1.0, 1.0};
    StepRecord s0;
    s0.t0 = 0.0;
    s0.h = 0.5;
    s0.x0 = 0.3;
    s0.var_rate = var0;
    StepRecord s1 = s0;
    s1.t0 = 0.5;
    s1.x0 = 1.0;
    s1.var_rate = var1;
    tr.steps = {s0, s1};
    JumpEvent e;
    e.time = 0.5;
    e.band = 1;
    e.z_tilde = 1.5;
    e.z = 1.0 / 1.5;
    e.split.xi = xi;
    e.x_before = 0.3;
    e.step_index = 1;
    tr.events = {e};
    return tr;
}

}  // namespace

TEST(TangentFlow, StateFreeCoefficientGivesUnitFlow) {
    LevyModel m;
    m.mu = LevyMeasure::truncated_stable(0.5);
    m.c = additive_coefficient();
    PathSimulator sim(m, SectorSettings{}, config(0.1, 64));
    for (std::uint64_t p = 0; p < 50; ++p) {
        const auto f = simulate_tangent_flow(m, sim.simulate(p));
        ASSERT_EQ(f.Y, 1.0);
        ASSERT_EQ(f.Ybar, 1.0);
    }
}

TEST(TangentFlow, SingleJumpWithoutDiffusion) {
    const auto m = worked_example_model();
    Trajectory tr;
    JumpEvent e;
    e.time = 0.2;
    e.z_tilde = 2.5;
    e.z = 0.4;
    e.x_before = 0.7;
    tr.events = {e};
    const auto f = simulate_tangent_flow(m, tr);
    const double r = 0.5 * std::cos(0.7) * 0.4;
    EXPECT_DOUBLE_EQ(f.Y, 1.0 + r);
    EXPECT_NEAR(f.Y * f.Ybar, 1.0, 1e-15);
}

TEST(TangentFlow, ReciprocalProductErrorShrinksWithSteps) {
    const auto m = worked_example_model();
    auto err_at = [&](int n) {
        PathSimulator sim(m, SectorSettings{}, config(0.1, n));
        double worst = 0.0;
        for (std::uint64_t p = 0; p < 40; ++p) worst = std::max(worst, simulate_tangent_flow(m, sim.simulate(p)).max_product_error);
        return worst;
    };
    const double e1024 = err_at(1024), e2048 = err_at(2048), e4096 = err_at(4096);
    EXPECT_LT(e4096, 1e-6);
    EXPECT_GE(std::log2(e1024 / e2048), 0.8);
    EXPECT_GE(std::log2(e2048 / e4096), 0.8);
}

TEST(Covariance, ToyAssemblyByHand) {
    const auto m = worked_example_model();
    const auto tr = toy_path(1, 0.04, 0.09);
    const auto f = simulate_tangent_flow(m, tr);
    const double r = m.c.tilde_x(0.5, 1.5, 0.3);
    const double cz = m.c.tilde_z(0.5, 1.5, 0.3);
    const double Yt = 1.0 + r;
    const double jump = (Yt * 1.0 * cz) * (Yt * 1.0 * cz);
    const double gauss = Yt * Yt * (0.04 * 0.5 + (1.0 / (1.0 + r)) * (1.0 / (1.0 + r)) * 0.09 * 0.5);
    const auto rec = malliavin_covariance(m, tr, f, 0.0);
    EXPECT_NEAR(rec.jump_part, jump, 1e-14);
    EXPECT_NEAR(rec.gaussian_part, gauss, 1e-14);
    EXPECT_EQ(rec.sigma, rec.jump_part + rec.gaussian_part);
    EXPECT_DOUBLE_EQ(rec.rho, m.env.under(1.5));
}

TEST(Covariance, NoSuccessesAndNoGaussianPartGivesZero) {
    const auto m = worked_example_model();
    const auto tr = toy_path(0, 0.0, 0.0);
    const auto rec = malliavin_covariance(m, tr, simulate_tangent_flow(m, tr), 0.0);
    EXPECT_EQ(rec.sigma, 0.0);
    ASSERT_EQ(rec.contributions.size(), 1u);
    EXPECT_EQ(rec.contributions[0].value, 0.0);
    EXPECT_EQ(rec.rho, 0.0);
}

TEST(Covariance, PathwiseIdentitiesOnSimulatedPaths) {
    const auto m = worked_example_model();
    PathSimulator sim(m, SectorSettings{}, config(0.25, 128));
    const double alpha = lower_envelope_tail(m, 4.0);
    EXPECT_NEAR(alpha, 2.25 / 3.5 * std::pow(4.0, -3.5), 1e-12);
    for (std::uint64_t p = 0; p < 500; ++p) {
        const auto tr = sim.simulate(p);
        const auto f = simulate_tangent_flow(m, tr);
        const auto rec = malliavin_covariance(m, tr, f, alpha);
        ASSERT_EQ(rec.sigma, rec.jump_part + rec.gaussian_part);
        double rho = 0.0;
        for (std::size_t i = 0; i < tr.events.size(); ++i) {
            if (tr.events[i].split.xi == 1) rho += m.env.under(tr.events[i].z_tilde);
            if (tr.events[i].split.xi == 0) {
                ASSERT_EQ(rec.contributions[i].value, 0.0);
            }
        }
        ASSERT_EQ(rec.rho, rho);
        ASSERT_GE(rec.sigma * (1.0 + 1e-12), rec.lower_bound);
        ASSERT_GT(rec.sigma, 0.0);
    }
}

TEST(Nondegeneracy, ZeroCoefficientCountsDegeneratePaths) {
    LevyModel m;
    m.mu = LevyMeasure::truncated_stable(0.5);
    m.c = zero_coefficient();
    m.env.under = PowerEnvelope{0.0, 4.0};
    NondegeneracyConfig c;
    c.M_grid = {2};
    c.N = 200;
    c.n_steps = 16;
    c.bootstrap_resamples = 50;
    const auto rep = nondegeneracy_diagnostics(m, SectorSettings{}, c);
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_EQ(rep.rows[0].degeneracy_count, 200u);
}

TEST(Nondegeneracy, WorkedModelRowsAndWeakWarning) {
    const auto m = worked_example_model();
    NondegeneracyConfig c;
    c.M_grid = {2, 4};
    c.p_list = {1, 2};
    c.N = 1000;
    c.n_steps = 64;
    c.bootstrap_resamples = 200;
    const auto rep = nondegeneracy_diagnostics(m, SectorSettings{}, c);
    ASSERT_EQ(rep.rows.size(), 4u);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.degeneracy_count, 0u);
        EXPECT_EQ(r.lower_bound_violations, 0u);
        EXPECT_LE(r.ci_lo, r.inv_moment);
        EXPECT_GE(r.ci_hi, r.inv_moment);
        EXPECT_TRUE(std::isfinite(r.inv_moment));
    }
    EXPECT_TRUE(rep.warnings.empty());
    SectorSettings weak;
    weak.variant = SectorVariant::weak;
    weak.alpha = 4.0;
    c.M_grid = {2};
    c.N = 100;
    const auto wrep = nondegeneracy_diagnostics(m, weak, c);
    ASSERT_FALSE(wrep.warnings.empty());
    EXPECT_NE(wrep.warnings[0].find("weak sector"), std::string::npos);
}

TEST(Laplace, BoundsAtSmallScale) {
    const auto m = worked_example_model();
    LaplaceConfig c;
    c.M = 4;
    c.N = 20000;
    c.s_grid = {0.0, 0.5, 5.0, 50.0, 500.0};
    const auto rep = laplace_bound_check(m, SectorSettings{}, c);
    ASSERT_EQ(rep.rows.size(), 5u);
    EXPECT_EQ(rep.rows[0].empirical, 1.0);
    EXPECT_EQ(rep.rows[0].bound, 1.0);
    for (const auto& r : rep.rows) {
        EXPECT_LE(r.empirical, r.bound + 3.0 * r.stderr_) << r.s;
        EXPECT_NEAR(r.empirical, r.exact, 4.0 * r.stderr_ + 1e-12) << r.s;
        EXPECT_LE(r.exact, r.bound + 1e-12);
    }
}

TEST(Laplace, LevelMassRatioGrowsInStrongSector) {
    const auto m = worked_example_model();
    LaplaceConfig c;
    c.N = 10;
    c.s_grid = {1.0};
    const auto rep = laplace_bound_check(m, SectorSettings{}, c);
    ASSERT_EQ(rep.lemma.size(), 3u);
    EXPECT_LT(rep.lemma[0].ratio, rep.lemma[1].ratio);
    EXPECT_LT(rep.lemma[1].ratio, rep.lemma[2].ratio);
    EXPECT_LT(rep.lemma[0].ratio_literal, rep.lemma[2].ratio_literal);
    EXPECT_LT(rep.lemma[0].sector_estimate, rep.lemma[2].sector_estimate);
}
