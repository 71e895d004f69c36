#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "lazytd/meanfield.hpp"
#include "support/oracles.hpp"

using namespace lazytd;

namespace {

MeanFieldSystem bump_system(Eigen::Index d = 5, std::uint64_t seed = 1, double width = 0.5) {
    std::mt19937_64 rng(seed);
    return MeanFieldSystem(std::make_shared<GaussianBumpFeature>(width), grid_states(d),
                           Mrp::with_value(cyclic_transition(d, CyclicOrientation::Backward),
                                           oracle::gaussian_vec(d, rng), 0.9));
}

ParticleEnsemble random_ensemble(Eigen::Index n, Eigen::Index q, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ParticleEnsemble{oracle::gaussian_vec(n, rng), Mat(oracle::gaussian_vec(n * q, rng).reshaped(n, q))};
}

double bump(double s, double c, double sigma) { return std::exp(-(s - c) * (s - c) / (2 * sigma * sigma)); }

}  // namespace

TEST(Features, GaussianGradientMatchesFiniteDifference) {
    const GaussianBumpFeature f(0.7);
    std::mt19937_64 rng(3);
    Mat states(6, 2);
    states << oracle::gaussian_vec(6, rng), oracle::gaussian_vec(6, rng);
    for (int k = 0; k < 20; ++k) {
        const Vec c = oracle::gaussian_vec(2, rng);
        Vec phi;
        Mat grad;
        f.evaluate(states, c, phi, grad);
        const Mat fd = oracle::fd_jacobian([&](const Vec& x) { return f.phi(states, x); }, c);
        EXPECT_LE(oracle::rel_frobenius(fd, grad), 1e-4);
    }
}

TEST(Features, ReluGradientMatchesFiniteDifferenceAwayFromKinks) {
    const ReluFeature f;
    const Mat states = grid_states(7);
    std::mt19937_64 rng(4);
    int checked = 0;
    for (int attempt = 0; checked < 20 && attempt < 1000; ++attempt) {
        const Vec w = oracle::gaussian_vec(2, rng);
        const Vec pre = states.col(0) * w(0) - Vec::Constant(7, w(1));
        if (pre.cwiseAbs().minCoeff() < 1e-3) continue;
        Vec phi;
        Mat grad;
        f.evaluate(states, w, phi, grad);
        const Mat fd = oracle::fd_jacobian([&](const Vec& x) { return f.phi(states, x); }, w);
        EXPECT_LE((fd - grad).norm(), 1e-4 * std::max(1.0, grad.norm()));
        ++checked;
    }
    EXPECT_EQ(checked, 20);
}

TEST(Features, FastPathsAgreeWithGenericLoops) {
    const GaussianBumpFeature f(0.4);
    const Mat states = grid_states(5);
    const auto e = random_ensemble(12, 1, 2);
    std::mt19937_64 rng(9);
    const Vec weight = oracle::gaussian_vec(5, rng);
    EXPECT_LT((f.phi_matrix(states, e.wbar) - f.FeatureMap::phi_matrix(states, e.wbar)).norm(), 1e-14);
    Vec a, b;
    Mat ga, gb;
    f.correlate(states, e.wbar, weight, a, ga);
    f.FeatureMap::correlate(states, e.wbar, weight, b, gb);
    EXPECT_LT((a - b).norm(), 1e-13);
    EXPECT_LT((ga - gb).norm(), 1e-13);
}

TEST(MeanField, EnsembleValueByHand) {
    const auto sys = bump_system();
    const auto e = random_ensemble(8, 1, 5);
    const Vec v = ensemble_value(e, *sys.features, sys.states);
    for (Eigen::Index s = 0; s < 5; ++s) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < 8; ++i) sum += e.omega0(i) * bump(sys.states(s, 0), e.wbar(i, 0), 0.5);
        EXPECT_NEAR(v(s), sum / 8.0, 1e-14);
    }
}

TEST(MeanField, ParticleVelocityByHand) {
    const auto sys = bump_system();
    const auto e = random_ensemble(6, 1, 7);
    const auto vel = particle_rhs(e, sys);
    const Vec v = ensemble_value(e, *sys.features, sys.states);
    const Vec delta = sys.mrp.rbar() + 0.9 * sys.mrp.P() * v - v;
    for (Eigen::Index i = 0; i < 6; ++i) {
        double g = 0.0, dg = 0.0;
        for (Eigen::Index s = 0; s < 5; ++s) {
            const double x = sys.states(s, 0), c = e.wbar(i, 0);
            g += sys.measure.mu(s) * delta(s) * bump(x, c, 0.5);
            dg += sys.measure.mu(s) * delta(s) * bump(x, c, 0.5) * (x - c) / 0.25;
        }
        EXPECT_NEAR(vel.d_omega0(i), g, 1e-13);
        EXPECT_NEAR(vel.d_wbar(i, 0), e.omega0(i) * dg, 1e-13);
    }
    // g_profile evaluated at the particle positions is the omega0-velocity
    EXPECT_LT((g_profile(e, sys, e.wbar) - vel.d_omega0).norm(), 1e-13);
}

TEST(MeanField, ExpectedTdErrorIsBellmanResidual) {
    const auto sys = bump_system();
    EXPECT_LT(expected_td_error(sys.mrp, sys.vstar).norm(), 1e-12);
}

// V is 1-homogeneous in omega0.
TEST(MeanFieldProperties, Homogeneity) {
    const auto sys = bump_system();
    const auto e = random_ensemble(10, 1, 3);
    for (double c : {-2.0, 0.5, 3.0}) {
        ParticleEnsemble scaled = e;
        scaled.omega0 *= c;
        EXPECT_LT((ensemble_value(scaled, *sys.features, sys.states) - c * ensemble_value(e, *sys.features, sys.states)).norm(),
                  1e-13);
    }
}

TEST(MeanFieldProperties, Exchangeability) {
    const auto sys = bump_system();
    const auto e = random_ensemble(10, 1, 4);
    std::vector<Eigen::Index> perm{3, 7, 0, 9, 1, 2, 8, 5, 6, 4};
    ParticleEnsemble p{Vec(10), Mat(10, 1)};
    for (Eigen::Index i = 0; i < 10; ++i) {
        p.omega0(i) = e.omega0(perm[static_cast<std::size_t>(i)]);
        p.wbar.row(i) = e.wbar.row(perm[static_cast<std::size_t>(i)]);
    }
    EXPECT_LT((ensemble_value(p, *sys.features, sys.states) - ensemble_value(e, *sys.features, sys.states)).norm(), 1e-14);
    const auto ve = particle_rhs(e, sys);
    const auto vp = particle_rhs(p, sys);
    for (Eigen::Index i = 0; i < 10; ++i) {
        EXPECT_NEAR(vp.d_omega0(i), ve.d_omega0(perm[static_cast<std::size_t>(i)]), 1e-14);
        EXPECT_NEAR(vp.d_wbar(i, 0), ve.d_wbar(perm[static_cast<std::size_t>(i)], 0), 1e-14);
    }
}

// Duplicating every particle leaves the empirical measure, hence V and the velocities, unchanged.
TEST(MeanFieldProperties, Duplication) {
    const auto sys = bump_system();
    const auto e = random_ensemble(7, 1, 8);
    ParticleEnsemble dup{Vec(14), Mat(14, 1)};
    dup.omega0 << e.omega0, e.omega0;
    dup.wbar << e.wbar, e.wbar;
    EXPECT_LT((ensemble_value(dup, *sys.features, sys.states) - ensemble_value(e, *sys.features, sys.states)).norm(), 1e-14);
    const auto ve = particle_rhs(e, sys);
    const auto vd = particle_rhs(dup, sys);
    EXPECT_LT((vd.d_omega0.head(7) - ve.d_omega0).norm(), 1e-14);
    EXPECT_LT((vd.d_omega0.tail(7) - ve.d_omega0).norm(), 1e-14);
}

TEST(MeanFieldProperties, ZeroRewardDoubledEnsembleIsStationary) {
    const MeanFieldSystem sys(std::make_shared<GaussianBumpFeature>(0.5), grid_states(5),
                              Mrp(cyclic_transition(5, CyclicOrientation::Backward), Vec::Zero(5), 0.9));
    const auto e = doubled_bump_ensemble(20, 1, -1.5, 1.5, 3);
    EXPECT_LE(ensemble_value(e, *sys.features, sys.states).lpNorm<Eigen::Infinity>(), 1e-12);
    // pairs cancel only up to summation order, so "zero" means roundoff
    EXPECT_LE(particle_rhs(e, sys).max_speed(), 1e-12);
    const auto run = integrate_ensemble(e, sys, 0.1, 50, 10);
    EXPECT_LE((run.snapshots.back().omega0 - e.omega0).norm(), 1e-12);
    EXPECT_LE((run.snapshots.back().wbar - e.wbar).norm(), 1e-12);
    const auto sep = separation_check(e, 10.0, grid_states(5), 0.5);
    const auto opt = fixed_point_optimality(e, sys, 1e-5, sep);
    EXPECT_LE(opt.velocity_norm, 1e-12);
    EXPECT_LE(opt.optimality_gap, 1e-12);
    EXPECT_LE(opt.bellman_residual, 1e-12);
}

TEST(MeanField, DoubledEnsemblesVanishAtInit) {
    const auto e = doubled_bump_ensemble(30, 1, -1, 1, 2);
    const auto sys = bump_system();
    EXPECT_LE(ensemble_value(e, *sys.features, sys.states).lpNorm<Eigen::Infinity>(), 1e-12);
    const auto r = doubled_relu_ensemble(30, 1, 2);
    EXPECT_LE(ensemble_value(r, ReluFeature(), grid_states(5)).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_THROW(doubled_bump_ensemble(5, 1, -1, 1, 0), OddWidth);
}

TEST(MeanField, H1ProfileSums) {
    ParticleEnsemble e{Vec(4), Mat(4, 1)};
    e.omega0 << 1.0, 2.0, -3.0, 4.0;
    e.wbar << -0.9, 0.1, 0.2, 5.0;
    const Binning b{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), {2}};
    const auto h = h1_profile(e, b);
    ASSERT_EQ(h.per_bin.size(), 2u);
    EXPECT_DOUBLE_EQ(h.per_bin[0], 0.25);
    EXPECT_DOUBLE_EQ(h.per_bin[1], (2.0 - 3.0) / 4.0);
    EXPECT_DOUBLE_EQ(h.outside, 1.0);
    EXPECT_DOUBLE_EQ(h.total, 1.0);
    EXPECT_EQ(b.locate(Vec::Constant(1, 1.0)), 1);  // upper edge belongs to the last bin
}

TEST(MeanField, SeparationCheck) {
    ParticleEnsemble e{Vec(3), Mat(3, 1)};
    e.omega0 << 1.0, -1.0, 2.0;
    e.wbar << 0.0, 0.05, 1.0;
    Mat grid(3, 1);
    grid << 0.0, 1.0, 2.0;
    auto r = separation_check(e, 5.0, grid, 0.1);
    EXPECT_TRUE(r.within_box);
    EXPECT_FALSE(r.covered);
    ASSERT_EQ(r.uncovered.size(), 1u);
    EXPECT_EQ(r.uncovered[0], 2);
    EXPECT_DOUBLE_EQ(r.witness(0), 2.0);
    EXPECT_FALSE(r.paired_covered);
    r = separation_check(e, 1.5, grid.topRows(2), 0.1);
    EXPECT_TRUE(r.covered);
    EXPECT_FALSE(r.within_box);
    EXPECT_FALSE(r.passed());
    EXPECT_DOUBLE_EQ(r.max_abs_omega0, 2.0);
}

// ||V - V*||_mu <= C_cal max_i |g(wbar_i)| whenever the features span R^d.
TEST(MeanField, CalibrationBoundsTheGap) {
    const auto sys = bump_system(5, 3);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto e = random_ensemble(12, 1, seed);
        if (!features_span_states(e, sys)) continue;
        const double cal = optimality_calibration(e, sys);
        ASSERT_TRUE(std::isfinite(cal));
        const double gmax = particle_rhs(e, sys).d_omega0.cwiseAbs().maxCoeff();
        const double gap = mu_norm(ensemble_value(e, *sys.features, sys.states) - sys.vstar, sys.measure);
        EXPECT_LE(gap, cal * gmax * (1 + 1e-10));
    }
}

TEST(MeanField, FrozenCentersAtTdFixedPointAreOptimal) {
    const auto sys = bump_system(5, 2);
    ParticleEnsemble e{Vec(5), sys.states};
    // omega0 solving Phi omega0 / N = V*
    const Mat phi = feature_matrix(e, *sys.features, sys.states);
    e.omega0 = 5.0 * phi.lu().solve(sys.vstar);
    const auto sep = separation_check(e, 1e6, sys.states, 0.1);
    const auto opt = fixed_point_optimality(e, sys, 1e-8, sep);
    EXPECT_LT(opt.optimality_gap, 1e-10);
    EXPECT_LT(particle_rhs(e, sys).d_omega0.norm(), 1e-10);
    EXPECT_TRUE(opt.universal);
}

TEST(MeanField, RankDeficientFeaturesHaveInfiniteCalibration) {
    const auto sys = bump_system();
    ParticleEnsemble e{Vec::Ones(4), Mat::Zero(4, 1)};  // all centers equal: rank 1
    EXPECT_TRUE(std::isinf(optimality_calibration(e, sys)));
    EXPECT_FALSE(features_span_states(e, sys));
}

TEST(MeanField, IntegratorKeepsSnapshotsAndRejectsBadSteps) {
    const auto sys = bump_system();
    const auto e = doubled_bump_ensemble(10, 1, -1.5, 1.5, 0);
    const auto run = integrate_ensemble(e, sys, 0.05, 25, 10);
    ASSERT_EQ(run.times.size(), 4u);
    EXPECT_NEAR(run.times.back(), 1.25, 1e-12);
    EXPECT_THROW(integrate_ensemble(e, sys, 0.0, 10), DomainError);
}

TEST(MeanField, BoxGrid) {
    const Mat g = box_grid(2, -1.0, 1.0, 3);
    EXPECT_EQ(g.rows(), 9);
    EXPECT_EQ(g.cols(), 2);
    EXPECT_DOUBLE_EQ(g.minCoeff(), -1.0);
    EXPECT_DOUBLE_EQ(g.maxCoeff(), 1.0);
}
