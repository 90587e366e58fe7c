#include <gtest/gtest.h>

#include "ets/params.hpp"
#include "test_support.hpp"

using namespace ets;
using ets::test::base_firm;
using ets::test::base_market;
using ets::test::rel;

TEST(FirmParams, RejectsInvalidValues) {
    auto f = base_firm();
    EXPECT_NO_THROW(f.validate());
    f.k = 1.01;
    EXPECT_THROW(f.validate(), ConfigError);
    f = base_firm();
    f.eta = 0.0;
    EXPECT_THROW(f.validate(), ConfigError);
    f = base_firm();
    f.h = -1.0;
    EXPECT_THROW(f.validate(), ConfigError);
    f = base_firm();
    f.sigma = -1.0;
    EXPECT_THROW(f.validate(), ConfigError);
}

TEST(MarketParams, RejectsInvalidValues) {
    std::vector<FirmParams> firms(2, base_firm());
    EXPECT_THROW(MarketParams({}, 1e-6, Depth::frictionless(), 10, 0.8), ConfigError);
    EXPECT_THROW(MarketParams(firms, 0.0, Depth::frictionless(), 10, 0.8), ConfigError);
    EXPECT_THROW(MarketParams(firms, 1e-6, Depth::frictionless(), 0.0, 0.8), ConfigError);
    EXPECT_THROW(MarketParams(firms, 1e-6, Depth::frictionless(), 10, 1.0), ConfigError);
    EXPECT_THROW(Depth::finite(0.0), ConfigError);
    EXPECT_THROW(Depth::finite(std::numeric_limits<double>::infinity()), ConfigError);
}

TEST(Depth, FrictionlessIsDistinctState) {
    const auto d = Depth::frictionless();
    EXPECT_TRUE(d.is_frictionless());
    EXPECT_EQ(d.in_g(), 0.0);
    EXPECT_THROW(d.value(), UnsupportedConfiguration);
    EXPECT_EQ(Depth::finite(3.0).value(), 3.0);
}

TEST(Aggregates, BaseCalibration) {
    const auto m = base_market();
    const auto& a = m.agg();
    EXPECT_DOUBLE_EQ(a.h_bar, 25.0);
    EXPECT_DOUBLE_EQ(a.eta_bar, 6e8);
    EXPECT_NEAR(a.H_bar, a.eta_bar * a.h_bar, 1e-6);
    EXPECT_LT(rel(a.sigma_sq, 5813333333333333.3), 1e-14);
}

TEST(Aggregates, SigmaSquaredMatchesPairwiseSum) {
    std::vector<FirmParams> firms;
    for (int i = 0; i < 4; ++i) {
        auto f = base_firm();
        f.sigma = 1.0 + i;
        f.k = -0.3 + 0.25 * i;
        firms.push_back(f);
    }
    const MarketParams m(firms, 1e-6, Depth::frictionless(), 5, 0.5);
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        total += firms[i].sigma * firms[i].sigma;
        for (std::size_t j = i + 1; j < 4; ++j) total += 2 * m.correlation(i, j) * firms[i].sigma * firms[j].sigma;
    }
    EXPECT_LT(rel(m.agg().sigma_sq, total / 16.0), 1e-14);
    EXPECT_DOUBLE_EQ(m.correlation(1, 2), firms[1].k * firms[2].k);
}

TEST(Aggregates, IndependentShocks) {
    std::vector<FirmParams> firms(3, base_firm());
    for (auto& f : firms) f.k = 0.0;
    const MarketParams m(firms, 1e-6, Depth::frictionless(), 5, 0.5);
    EXPECT_LT(rel(m.agg().sigma_sq, 3 * firms[0].sigma * firms[0].sigma / 9.0), 1e-14);
}

TEST(Coefficients, GAtHorizonAndStart) {
    const auto m = base_market();
    EXPECT_DOUBLE_EQ(g_coeff(m.firm(0), m, 10.0), 900.0);
    EXPECT_LT(rel(g_coeff(m.firm(0), m, 0.0), 0.099988890123319631), 1e-14);
    EXPECT_LT(g_coeff(m.firm(0), m, 3.0), g_coeff(m.firm(0), m, 4.0));
    EXPECT_THROW(g_coeff(m.firm(0), m, -0.1), DomainError);
    EXPECT_THROW(g_coeff(m.firm(0), m, 10.1), DomainError);
}

TEST(Coefficients, PiReducesToGOverEtaWithoutDepth) {
    const auto m = base_market();
    EXPECT_LT(rel(pi_coeff(m, 0, 0.0), 1.6664815020553272e-10), 1e-14);
    for (double t : {0.0, 2.5, 9.9})
        EXPECT_DOUBLE_EQ(pi_coeff(m, 2, t), g_coeff(m.firm(2), m, t) / m.firm(2).eta);
}

TEST(Coefficients, PiSymmetricForHomogeneousFirms) {
    const auto m = base_market(Depth::finite(1e6));
    for (double t : {0.0, 5.0, 10.0})
        for (std::size_t i = 1; i < m.n(); ++i) EXPECT_DOUBLE_EQ(pi_coeff(m, i, t), pi_coeff(m, 0, t));
    std::vector<double> all;
    pi_all(m, 3.0, all);
    EXPECT_DOUBLE_EQ(all[4], pi_coeff(m, 4, 3.0));
}

TEST(Coefficients, FValues) {
    const auto m = base_market();
    EXPECT_DOUBLE_EQ(f_coeff(m, 10.0), 1.5e-6);
    EXPECT_LT(rel(f_coeff(m, 0.0), 1.6664815020553272e-10), 1e-14);
    // tiny flexibility: f is flat at 2 lambda
    std::vector<FirmParams> firms(2, base_firm());
    for (auto& f : firms) f.eta = 1e-30;
    const MarketParams flat(firms, 7.5e-7, Depth::frictionless(), 10, 0.8);
    EXPECT_LT(rel(f_coeff(flat, 0.0), 1.5e-6), 1e-14);
}

TEST(Coefficients, EllBaseAndLimits) {
    const auto m = base_market();
    EXPECT_LT(rel(ell(m), -683407407.40740741), 1e-13);
    EXPECT_LT(rel(6 * ell(m), -4100444444.4444444), 1e-13);
    EXPECT_LT(rel(ell(base_market(Depth::frictionless(), 25.0 / 6.0)), -669518518.51851852), 1e-13);

    // rho -> 1: ell -> -h/(2 lambda)
    const MarketParams near_one(m.firms(), 7.5e-7, Depth::frictionless(), 10, 1.0 - 1e-12);
    EXPECT_LT(rel(ell(near_one), -25.0 / (2 * 7.5e-7)), 1e-6);
    // large lambda: ell -> -T (1 - rho) mu
    const auto stiff = m.with_lambda(1e6);
    EXPECT_LT(rel(ell(stiff), -10 * 0.2 * 2e9 / 6), 1e-6);
}

TEST(Coefficients, EllDecreasesWithReduction) {
    const auto m = base_market();
    double prev = 0.0;
    for (double rho : {0.95, 0.9, 0.8, 0.5}) {
        const MarketParams r(m.firms(), 7.5e-7, Depth::frictionless(), 10, rho);
        EXPECT_LT(ell(r), 0.0);
        if (prev != 0.0) {
            EXPECT_LT(ell(r), prev);
        }
        prev = ell(r);
    }
}

TEST(Coefficients, MsrZ) {
    EXPECT_EQ(msr_z(0.1, 10, 10), 0.0);
    EXPECT_LT(rel(msr_z(0.1, 0, 10), 6.3212055882855768), 1e-14);
    EXPECT_LT(rel(msr_z(1e-12, 0, 10), 10.0), 1e-10);
    EXPECT_GT(msr_z(0.1, 2, 10), msr_z(0.1, 3, 10));
    EXPECT_THROW(msr_z(0.0, 0, 10), DomainError);
    EXPECT_THROW(msr_z(-1.0, 0, 10), DomainError);
}

TEST(Coefficients, MsrF) {
    const auto m = base_market();
    EXPECT_DOUBLE_EQ(msr_F(m, 0.1, 10.0), 1.5e-6);
    const double f0 = msr_F(m, 0.1, 0.0);
    EXPECT_TRUE(std::isfinite(f0));
    EXPECT_GT(f0, 0.0);
    EXPECT_LT(rel(f0, 2.6361644724721077e-10), 1e-12);
    // fast reversion: z -> 0
    const double t = 4.0;
    const double f = f_coeff(m, t);
    EXPECT_LT(rel(msr_F(m, 1e14, t), f / (1 - 6e8 * f * (10 - t))), 1e-8);
    EXPECT_NO_THROW(check_msr_denominator(m, 0.1));
}

TEST(Coefficients, PositivityAndMonotonicity) {
    const auto m = base_market(Depth::finite(2e5));
    double pg = 0, pf = 0;
    for (int j = 0; j <= 100; ++j) {
        const double t = 10.0 * j / 100;
        const double g = g_coeff(m.firm(0), m, t);
        const double f = f_coeff(m, t);
        EXPECT_GT(g, 0);
        EXPECT_GT(pi_coeff(m, 0, t), 0);
        EXPECT_GT(f, 0);
        EXPECT_GT(msr_F(m, 0.1, t), 0);
        EXPECT_GE(g, pg);
        EXPECT_GE(f, pf);
        pg = g;
        pf = f;
    }
}

TEST(Coefficients, DepthIdentityOnGrid) {
    for (double nu : {1e3, 1e6, 1e9}) {
        const auto m = base_market(Depth::finite(nu));
        const double lam = m.lambda();
        for (int j = 0; j <= 200; ++j) {
            const double t = 10.0 * j / 200;
            const double g = g_coeff(m.firm(0), m, t);
            const double lhs = 1 - g / m.firm(0).eta * (1 / (2 * lam) + nu * (10 - t));
            const double rhs = g * (10 - t);
            EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(rhs))) << "nu=" << nu << " t=" << t;
        }
    }
}

TEST(MarketParams, HomogeneityCollapse) {
    auto f = base_firm();
    const auto m = base_market();
    const double n = 6;
    EXPECT_LT(rel(n * n * m.agg().sigma_sq, n * f.sigma * f.sigma + n * (n - 1) * f.k * f.k * f.sigma * f.sigma), 1e-14);
    EXPECT_TRUE(m.homogeneous_eta());
    auto firms = m.firms();
    firms[1].eta *= 2;
    EXPECT_FALSE(m.with_firms(firms).homogeneous_eta());
}
