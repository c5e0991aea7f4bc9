#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "smalljump/smalljump.hpp"
#include "smalljump/io/model_file.hpp"

using namespace smalljump;

namespace {

LevyModel stable_model(double rho, JumpCoefficient c, double bar_scale = 1.0) {
    LevyModel m;
    m.mu = LevyMeasure::truncated_stable(rho);
    m.c = std::move(c);
    m.env.bar = PowerEnvelope{bar_scale, 1.0};
    return m;
}

}  // namespace

TEST(LevyMeasure, StableMassMatchesAntiderivative) {
    for (double rho : {0.0, 0.3, 0.5, 0.9}) {
        const auto mu = LevyMeasure::truncated_stable(rho);
        for (double eps : {0.4, 0.2, 0.1, 0.05, 0.01}) {
            const double closed = rho == 0.0 ? -std::log(eps) : (1.0 - std::pow(eps, -rho)) / -rho;
            const auto q = mu.integrate([](double) { return 1.0; }, eps, 1.0);
            EXPECT_LT(oracle::rel(q.value, closed), 1e-10) << rho << " " << eps;
            EXPECT_LT(oracle::rel(mu.mass(eps, 1.0), closed), 1e-12);
        }
    }
}

TEST(LevyMeasure, DensityNonnegativeAndSupportedOnUnitInterval) {
    const auto mu = LevyMeasure::truncated_stable(0.5);
    for (double z = 1e-6; z <= 1.0; z *= 1.7) EXPECT_GE(mu.density(z), 0.0);
    EXPECT_EQ(mu.density(0.0), 0.0);
    EXPECT_EQ(mu.density(1.5), 0.0);
    EXPECT_THROW(LevyMeasure::truncated_stable(1.0), ConfigError);
}

TEST(TransformMeasure, StableImageDensityIsPower) {
    const auto nu = transform_measure(LevyMeasure::truncated_stable(0.5));
    for (double z : {1.0, 1.5, 3.0, 10.0, 1e4}) EXPECT_NEAR(nu.density(z), std::pow(z, -0.5), 1e-14 * std::pow(z, -0.5));
    EXPECT_EQ(nu.density(0.5), 0.0);
}

TEST(TransformMeasure, FirstBandMass) {
    const auto nu = transform_measure(LevyMeasure::truncated_stable(0.5));
    const double oracle_m1 = 2.0 * (std::sqrt(2.0) - 1.0);
    EXPECT_NEAR(oracle_m1, 0.828427, 5e-7);
    EXPECT_LT(oracle::rel(nu.integrate([](double) { return 1.0; }, 1.0, 2.0).value, oracle_m1), 1e-12);
    EXPECT_LT(oracle::rel(nu.mass(1.0, 2.0), oracle_m1), 1e-12);
}

TEST(TransformMeasure, ImageIdentityOnRandomIntervals) {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double rho : {0.0, 0.5, 0.9}) {
        const auto mu = LevyMeasure::truncated_stable(rho);
        const auto nu = transform_measure(mu);
        for (int i = 0; i < 100; ++i) {
            const double a = 1.0 + 50.0 * u(gen);
            const double b = a + 0.01 + 50.0 * u(gen);
            const double lhs = nu.integrate([](double) { return 1.0; }, a, b).value;
            const double rhs = mu.integrate([](double) { return 1.0; }, 1.0 / b, 1.0 / a).value;
            EXPECT_LT(oracle::rel(lhs, rhs), 1e-8);
        }
    }
}

TEST(TransformMeasure, NonStableDensityAgreesWithSimpson) {
    const auto mu = LevyMeasure::from_density([](double z) { return std::pow(z, -1.3) * std::exp(-z); }, "tempered");
    const auto nu = transform_measure(mu);
    const double q = nu.mass(2.0, 5.0);
    const double s = oracle::simpson([](double z) { return std::pow(1.0 / z, -1.3) * std::exp(-1.0 / z) / (z * z); }, 2.0, 5.0);
    EXPECT_LT(oracle::rel(q, s), 1e-9);
}

TEST(EtaP, WorkedValues) {
    const auto m = stable_model(0.5, additive_coefficient());
    EXPECT_EQ(eta_p(m, 3, 0.0), 0.0);
    const double e3 = eta_p(m, 3, 0.1);
    EXPECT_NEAR(e3, 1.26491e-3, 5e-9);
    EXPECT_LT(oracle::rel(e3, std::pow(0.1, 2.5) / 2.5), 1e-10);
    EXPECT_NEAR(eta_p(m, 1, 0.1), 0.632456, 5e-7);
}

TEST(EtaP, ClosedFormAcrossGrid) {
    for (double rho : {0.0, 0.3, 0.5, 0.9})
        for (double sbar : {1.0, 2.5}) {
            const auto m = stable_model(rho, additive_coefficient(), sbar);
            for (double eps : {0.4, 0.2, 0.1, 0.05, 0.01})
                for (int p : {1, 2, 3}) {
                    const double closed = std::pow(sbar, p) * oracle::stable_moment(p, rho, eps);
                    EXPECT_LT(oracle::rel(eta_p(m, p, eps), closed), 1e-8) << rho << " " << eps << " " << p;
                }
        }
}

TEST(EtaP, MonotoneInEpsAndDecreasingInP) {
    const auto m = stable_model(0.5, additive_coefficient());
    double prev = 0.0;
    for (double eps : {0.01, 0.05, 0.1, 0.2, 0.4, 1.0}) {
        const double v = eta_p(m, 3, eps);
        EXPECT_GT(v, prev);
        prev = v;
        for (int p = 1; p < 6; ++p) EXPECT_LE(eta_p(m, p + 1, eps), eta_p(m, p, eps));
    }
}

TEST(EtaP, RejectsBadArguments) {
    const auto m = stable_model(0.5, additive_coefficient());
    EXPECT_THROW((void)eta_p(m, 0, 0.1), ConfigError);
    EXPECT_THROW((void)eta_p(m, 3, 1.5), ConfigError);
}

TEST(SmallJumpCoefficients, AdditiveClosedForms) {
    const auto m = stable_model(0.5, additive_coefficient());
    const double b = b_eps(m, 0.0, 0.3, 0.1);
    const double a = a_eps(m, 0.0, 0.3, 0.1);
    EXPECT_NEAR(b, 0.632456, 5e-7);
    EXPECT_NEAR(a, 2.10819e-2, 5e-8);
    EXPECT_NEAR(std::sqrt(a), std::sqrt(std::pow(0.1, 1.5) / 1.5), 1e-12);
    EXPECT_NEAR(std::sqrt(a), 0.145196, 5e-7);
    for (double rho : {0.0, 0.3, 0.5, 0.9}) {
        const auto mr = stable_model(rho, additive_coefficient());
        for (double eps : {0.4, 0.2, 0.1, 0.05, 0.01}) {
            EXPECT_LT(oracle::rel(b_eps(mr, 0.0, 0.0, eps), oracle::stable_moment(1, rho, eps)), 1e-8);
            EXPECT_LT(oracle::rel(a_eps(mr, 0.0, 0.0, eps), oracle::stable_moment(2, rho, eps)), 1e-8);
        }
    }
}

TEST(SmallJumpCoefficients, ZeroLinearityMonotone) {
    const auto zero = stable_model(0.5, zero_coefficient());
    EXPECT_EQ(b_eps(zero, 0.0, 1.0, 0.1), 0.0);
    EXPECT_EQ(a_eps(zero, 0.0, 1.0, 0.1), 0.0);
    const auto m1 = worked_example_model();
    auto m2 = worked_example_model();
    m2.c = sigma_sine_coefficient(4.0, 1.0);
    for (double x : {-2.0, 0.0, 1.3})
        EXPECT_LT(oracle::rel(b_eps(m2, 0.0, x, 0.2), 2.0 * b_eps(m1, 0.0, x, 0.2)), 1e-12);
    double prev = 0.0;
    for (double eps : {0.01, 0.05, 0.1, 0.2, 0.4}) {
        const double a = a_eps(m1, 0.0, 0.7, eps);
        EXPECT_GE(a, prev);
        prev = a;
    }
}

TEST(SmallJumpCoefficients, SigmaSineAgreesWithSimpsonInLogVariable) {
    const auto m = worked_example_model();
    const double x = 0.9, eps = 0.1;
    const double sig = 2.0 + 0.5 * std::sin(x);
    // z = eps e^-u: int_0^eps z^-0.5 dz = eps^0.5 int_0^inf e^(-u/2) du.
    const double simpson_b =
        oracle::simpson([&](double u) { return sig * std::pow(eps, 0.5) * std::exp(-0.5 * u); }, 0.0, 80.0, 200000);
    EXPECT_LT(oracle::rel(b_eps(m, 0.0, x, eps), simpson_b), 1e-8);
}

TEST(Bands, PartialBandAndConstants) {
    const auto nu = transform_measure(LevyMeasure::truncated_stable(0.5));
    const BandDecomposition bd(nu, 1.0 / 4.5);
    ASSERT_EQ(bd.bands().size(), 4u);
    EXPECT_TRUE(bd.bands().back().partial);
    EXPECT_DOUBLE_EQ(bd.bands().back().hi, 4.5);
    EXPECT_LT(oracle::rel(bd.total_mass(), nu.mass(1.0, 4.5)), 1e-12);
    for (const auto& b : bd.bands()) {
        EXPECT_GT(b.mass, 0.0);
        EXPECT_LT(b.eps_k * BumpFunction::m_psi(), 1.0);
        EXPECT_NEAR(b.eps_k, 0.5 / std::pow(b.k + 1.0, 0.25), 1e-15);
    }
    const BandDecomposition whole(nu, 0.1);
    EXPECT_EQ(whole.bands().size(), 9u);
    EXPECT_FALSE(whole.bands().back().partial);
}

TEST(Bands, MassesAreAdditive) {
    const auto nu = transform_measure(LevyMeasure::truncated_stable(0.3));
    const BandDecomposition bd(nu, 1.0 / 40.0);
    double sum = 0.0;
    for (const auto& b : bd.bands()) sum += b.mass;
    EXPECT_LT(oracle::rel(sum, nu.mass(1.0, 40.0)), 1e-12);
    EXPECT_LT(oracle::rel(sum, LevyMeasure::truncated_stable(0.3).mass(1.0 / 40.0, 1.0)), 1e-12);
}

TEST(Bands, WeakVariantConstants) {
    SectorSettings s;
    s.variant = SectorVariant::weak;
    s.eps_star = 0.5;
    for (int k = 1; k < 20; ++k) EXPECT_DOUBLE_EQ(splitting_constant(s, k), 0.5 / (k + 1.0));
}

TEST(Hypotheses, WorkedModelPasses) {
    const auto rep = check_hypotheses(worked_example_model(), SectorSettings{});
    for (const auto& c : rep.checks) EXPECT_TRUE(c.pass) << c.condition << " " << c.detail;
    ASSERT_NE(rep.find("sector_exponents"), nullptr);
    ASSERT_NE(rep.find("lower_envelope_decay"), nullptr);
    EXPECT_TRUE(rep.find("sector_exponents")->pass);
}

TEST(Hypotheses, ZeroLowerEnvelopeFailsEllipticity) {
    auto m = worked_example_model();
    m.env.under = PowerEnvelope{0.0, 4.0};
    const auto rep = check_hypotheses(m, SectorSettings{});
    ASSERT_NE(rep.find("ellipticity"), nullptr);
    EXPECT_FALSE(rep.find("ellipticity")->pass);
    EXPECT_FALSE(rep.all_pass());
}

TEST(Hypotheses, TooSmallUpperEnvelopeFailsRegularity) {
    auto m = worked_example_model();
    m.env.bar = PowerEnvelope{1.0, 1.0};
    const auto rep = check_hypotheses(m, SectorSettings{});
    EXPECT_FALSE(rep.find("regularity")->pass);
}

TEST(Hypotheses, LargeEpsStarBreaksMinorization) {
    SectorSettings s;
    s.eps_star = 1.2;
    const auto rep = check_hypotheses(worked_example_model(), s);
    EXPECT_FALSE(rep.find("band_minorization")->pass);
}

TEST(ModelFile, WorkedExampleRoundTrip) {
    const auto spec = io::model_from_json(io::worked_example_json());
    EXPECT_TRUE(spec.model.mu.is_stable());
    EXPECT_DOUBLE_EQ(spec.model.mu.rho(), 0.5);
    EXPECT_EQ(spec.model.c.name, "sigma_sine");
    EXPECT_DOUBLE_EQ(spec.model.env.under.scale, 2.25);
    EXPECT_DOUBLE_EQ(spec.model.env.under.power, 4.0);
    EXPECT_DOUBLE_EQ(spec.sector.alpha2, 0.5);
    EXPECT_NEAR(spec.model.c.c(0.0, 0.5, std::asin(1.0)), 1.25, 1e-15);
}

TEST(ModelFile, RepositoryModelsLoad) {
    for (const char* f : {"worked_example.json", "worked_example_weak.json", "additive.json", "tempered_shear.json"}) {
        const auto spec = io::load_model(std::string(SMALLJUMP_SOURCE_DIR) + "/models/" + f);
        EXPECT_TRUE(check_hypotheses(spec.model, spec.sector).all_pass()) << f;
    }
}

TEST(ModelFile, ErrorsCarryContext) {
    try {
        (void)io::parse_model("{\n  \"measure\": {\"family\": \"truncated_stable\", \"rho\": 0.5},\n  oops\n}", "m.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("m.json: line 3"), std::string::npos) << e.what();
    }
    try {
        (void)io::parse_model(R"({"measure": {"rho": 1.5}, "coefficient": {"family": "zero"}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("measure.rho"), std::string::npos) << e.what();
    }
    try {
        (void)io::parse_model(R"({"measure": {"rho": 0.5}, "coefficient": {"family": "nope"}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("coefficient.family"), std::string::npos) << e.what();
    }
}

TEST(ModelFile, RegistryAcceptsPlugins) {
    io::CoefficientRegistry::instance().add("scaled_additive", [](const nlohmann::json& p, const std::string& path) {
        auto c = additive_coefficient(io::detail::number(p, "k", path, 1.0));
        c.name = "scaled_additive";
        return c;
    });
    const auto spec = io::parse_model(
        R"({"measure": {"rho": 0.5}, "coefficient": {"family": "scaled_additive", "params": {"k": 3}}})");
    EXPECT_EQ(spec.model.c.name, "scaled_additive");
    EXPECT_NEAR(spec.model.c.c(0.0, 0.2, 5.0), 0.6, 1e-15);
}
