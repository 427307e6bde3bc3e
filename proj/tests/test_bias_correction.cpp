#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace linkcorr;
using namespace linkcorr::testing;

namespace {

BootstrapLedger constant_ledger(std::vector<std::size_t> arity, const std::vector<double>& theta) {
    BootstrapLedger l;
    l.dimension = theta.size();
    l.arity = std::move(arity);
    l.theta_hat = theta;
    for (int j = 1; j <= l.depth(); ++j) {
        std::vector<double> lv;
        for (std::size_t n = 0; n < l.count(j); ++n) lv.insert(lv.end(), theta.begin(), theta.end());
        l.levels.push_back(std::move(lv));
    }
    l.compute_leaf_terms();
    return l;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// 2 theta_hat - mean_b theta*_b
std::vector<double> explicit_order1(const BootstrapLedger& l) {
    std::vector<double> out(l.dimension);
    for (std::size_t i = 0; i < l.dimension; ++i) {
        double s = 0;
        for (std::size_t b = 0; b < l.arity[0]; ++b) s += l.levels[0][b * l.dimension + i];
        out[i] = 2 * l.theta_hat[i] - s / l.arity[0];
    }
    return out;
}

// mean_b [ 3 theta_hat - 3 theta*_b + mean_c theta**_bc ]
std::vector<double> explicit_order2(const BootstrapLedger& l) {
    const std::size_t B = l.arity[0], C = l.arity[1], p = l.dimension;
    std::vector<double> out(p);
    for (std::size_t i = 0; i < p; ++i) {
        double outer = 0;
        for (std::size_t b = 0; b < B; ++b) {
            double inner = 0;
            for (std::size_t c = 0; c < C; ++c) inner += l.levels[1][(b * C + c) * p + i];
            outer += 3 * l.theta_hat[i] - 3 * l.levels[0][b * p + i] + inner / C;
        }
        out[i] = outer / B;
    }
    return out;
}

} // namespace

TEST(Coefficients, BinomialPatterns) {
    EXPECT_EQ(corrected_coefficients(0), (std::vector<double>{1}));
    EXPECT_EQ(corrected_coefficients(1), (std::vector<double>{2, -1}));
    EXPECT_EQ(corrected_coefficients(2), (std::vector<double>{3, -3, 1}));
    EXPECT_EQ(corrected_coefficients(3), (std::vector<double>{4, -6, 4, -1}));
    EXPECT_EQ(corrected_coefficients(4), (std::vector<double>{5, -10, 10, -5, 1}));
    EXPECT_EQ(delta_coefficients(1), (std::vector<double>{1, -1}));
    EXPECT_EQ(delta_coefficients(2), (std::vector<double>{1, -2, 1}));
    EXPECT_EQ(delta_coefficients(3), (std::vector<double>{1, -3, 3, -1}));
    for (int k = 0; k <= 6; ++k) {
        double s = 0;
        for (double c : corrected_coefficients(k)) s += c;
        EXPECT_EQ(s, 1.0);
    }
}

TEST(BiasEstimate, AllReplicatesEqualGivesZero) {
    const auto l = constant_ledger({7}, {1.5, -0.25});
    const auto tau = bias_estimate_level1(l);
    EXPECT_EQ(tau[0], 0.0);
    EXPECT_EQ(tau[1], 0.0);
}

TEST(BiasEstimate, HandArithmetic) {
    BootstrapLedger l;
    l.dimension = 1;
    l.arity = {3};
    l.theta_hat = {1.0};
    l.levels = {{1.2, 0.8, 1.3}};
    l.compute_leaf_terms();
    EXPECT_NEAR(bias_estimate_level1(l)[0], 0.1, 1e-15);
    EXPECT_NEAR(corrected_estimate(l, 1).tau_tilde[0], 0.1, 1e-15);
    EXPECT_NEAR(corrected_estimate(l, 1).theta_tilde[0], 0.9, 1e-15);
}

TEST(BiasEstimate, HormoneSlopeBiasIsPositive) {
    const auto ledger = generate_ambis(hormone_engine(), {100}, 12);
    // (true - biased) for the slope is negative, so the estimated bias is positive.
    EXPECT_GT(bias_estimate_level1(ledger)[1], 0.0);
}

TEST(CorrectedEstimate, ConstantLedgerReproducesThetaHatAtEveryOrder) {
    const std::vector<double> theta{34.17, -0.057, 1e-3};
    const auto l = constant_ledger({4, 3, 2}, theta);
    for (int k = 0; k <= 3; ++k) {
        const auto ce = corrected_estimate(l, k);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            EXPECT_EQ(ce.theta_tilde[i], theta[i]);
            EXPECT_EQ(ce.tau_tilde[i], 0.0);
            EXPECT_EQ(ce.delta[i], 0.0);
        }
        if (k >= 1) {
            for (double d : delta_k(l, k)) EXPECT_EQ(d, 0.0);
        }
    }
}

TEST(CorrectedEstimate, OrderZeroIsThetaHat) {
    Rng rng(3);
    const auto l = random_ledger({5, 2}, 3, rng);
    const auto ce = corrected_estimate(l, 0);
    EXPECT_EQ(ce.theta_tilde, l.theta_hat);
    for (double t : ce.tau_tilde) EXPECT_EQ(t, 0.0);
}

TEST(CorrectedEstimate, RecursionMatchesExplicitFormulas) {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t B = 1 + rng() % 9, C = 1 + rng() % 6, p = 1 + rng() % 3;
        const auto l = random_ledger({B, C}, p, rng);
        const auto e1 = explicit_order1(l), e2 = explicit_order2(l);
        const auto r1 = corrected_estimate(l, 1).theta_tilde, r2 = corrected_estimate(l, 2).theta_tilde;
        for (std::size_t i = 0; i < p; ++i) {
            EXPECT_LT(rel_err(r1[i], e1[i]), 1e-12);
            EXPECT_LT(rel_err(r2[i], e2[i]), 1e-12);
        }
    }
}

TEST(CorrectedEstimate, ThetaPlusTauIsThetaHat) {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const auto l = random_ledger({1 + rng() % 5, 1 + rng() % 4, 1 + rng() % 3}, 2, rng);
        for (int k = 0; k <= 3; ++k) {
            const auto ce = corrected_estimate(l, k);
            // tau is formed as theta_hat - theta~, so the sum is off by at most
            // the rounding of one addition.
            for (std::size_t i = 0; i < 2; ++i) {
                const double scale = std::max({std::abs(ce.theta_tilde[i]), std::abs(ce.tau_tilde[i]), std::abs(l.theta_hat[i])});
                EXPECT_LE(std::abs(ce.theta_tilde[i] + ce.tau_tilde[i] - l.theta_hat[i]), 2 * std::numeric_limits<double>::epsilon() * scale);
            }
        }
    }
}

TEST(CorrectedEstimate, TelescopingSumOfDeltas) {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        const auto l = random_ledger({1 + rng() % 5, 1 + rng() % 4, 1 + rng() % 3}, 2, rng);
        std::vector<double> acc = l.theta_hat;
        for (int k = 1; k <= 3; ++k) {
            const auto d = delta_k(l, k);
            const auto ce = corrected_estimate(l, k);
            for (std::size_t i = 0; i < 2; ++i) {
                acc[i] += d[i];
                EXPECT_LT(rel_err(acc[i], ce.theta_tilde[i]), 1e-12);
                EXPECT_LT(rel_err(d[i], ce.delta[i]), 1e-12);
            }
        }
    }
}

TEST(CorrectedEstimate, FourthOrderFromDepthFourLedger) {
    Rng rng(31);
    const auto l = random_ledger({3, 2, 2, 2}, 2, rng);
    const auto c = corrected_coefficients(4);
    const auto ce = corrected_estimate(l, 4);
    for (std::size_t i = 0; i < 2; ++i) {
        double want = 0;
        for (int j = 0; j <= 4; ++j) want += c[j] * level_mean(l, j)[i];
        EXPECT_LT(rel_err(ce.theta_tilde[i], want), 1e-12);
    }
}

TEST(CorrectedEstimate, RejectsOrderBeyondDepth) {
    Rng rng(1);
    const auto l = random_ledger({3, 2}, 1, rng);
    EXPECT_THROW(corrected_estimate(l, 3), ValidationError);
    EXPECT_THROW(corrected_estimate(l, -1), ValidationError);
    EXPECT_THROW(delta_k(l, 0), ValidationError);
    EXPECT_THROW(delta_k(l, 3), ValidationError);
}

TEST(DeltaK, OrderOneIsMinusTau) {
    Rng rng(37);
    const auto l = random_ledger({8}, 3, rng);
    const auto d = delta_k(l, 1);
    const auto ce = corrected_estimate(l, 1);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(d[i], -ce.tau_tilde[i], 1e-12 * std::max(1.0, std::abs(d[i])));
}

TEST(DeltaK, LeafTermMeanMatchesDirectSubtraction) {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const auto l = random_ledger({1 + rng() % 7, 1 + rng() % 5, 1 + rng() % 4}, 2, rng);
        for (int k = 1; k <= 3; ++k) {
            const auto leaf = delta_k(l, k);
            const auto a = corrected_estimate(l, k).theta_tilde, b = corrected_estimate(l, k - 1).theta_tilde;
            for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(rel_err(leaf[i], a[i] - b[i]), 1e-12);
        }
    }
}

TEST(CorrectedTerms, MeanIsCorrectedEstimate) {
    Rng rng(43);
    const auto l = random_ledger({6, 3, 2}, 2, rng);
    for (int k = 0; k <= 3; ++k) {
        const auto terms = corrected_terms(l, k);
        const auto ce = corrected_estimate(l, k);
        for (std::size_t i = 0; i < 2; ++i) {
            double s = 0;
            for (std::size_t b = 0; b < 6; ++b) s += terms[b * 2 + i];
            EXPECT_LT(rel_err(s / 6, ce.theta_tilde[i]), 1e-12);
        }
    }
}

TEST(CorrectedEstimate, HormoneDepthThreeNearReferenceValues) {
    const auto ledger = generate_ambis(hormone_engine(), {100, 20, 10}, 5);
    const auto c2 = corrected_estimate(ledger, 2).theta_tilde;
    const auto c3 = corrected_estimate(ledger, 3).theta_tilde;
    EXPECT_NEAR(c2[1], -0.058, 0.006);
    EXPECT_GT(c3[0], 30.84);
    EXPECT_LT(c3[0], 35.42);
}
