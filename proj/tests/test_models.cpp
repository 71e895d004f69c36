#include <gtest/gtest.h>

#include <memory>
#include <random>

#include "lazytd/models.hpp"
#include "support/oracles.hpp"

using namespace lazytd;

namespace {

// 20 points per model; relative Frobenius error of the analytic Jacobian vs central differences.
void check_jacobian(const Model& model, const std::function<Vec(std::mt19937_64&)>& draw,
                    const std::function<bool(const Vec&)>& near_kink = nullptr) {
    std::mt19937_64 rng(12345);
    int checked = 0;
    for (int attempt = 0; checked < 20 && attempt < 1000; ++attempt) {
        const Vec w = draw(rng);
        if (near_kink && near_kink(w)) continue;
        const Mat fd = oracle::fd_jacobian([&](const Vec& x) { return model.value(x); }, w);
        const Mat j = model.jacobian(w);
        EXPECT_LE(oracle::rel_frobenius(fd, j), 1e-4) << model.kind() << " at point " << checked;
        Vec v;
        Mat j2;
        model.evaluate(w, v, j2);
        EXPECT_LT((v - model.value(w)).norm(), 1e-13);
        EXPECT_LT((j2 - j).norm(), 1e-13);
        ++checked;
    }
    EXPECT_EQ(checked, 20);
}

}  // namespace

TEST(Models, LinearJacobian) {
    std::mt19937_64 rng(1);
    Mat phi(4, 3);
    for (Eigen::Index c = 0; c < 3; ++c) phi.col(c) = oracle::gaussian_vec(4, rng);
    const LinearModel m(phi);
    check_jacobian(m, [](std::mt19937_64& r) { return oracle::gaussian_vec(3, r); });
    EXPECT_THROW(m.value(Vec::Zero(2)), DimensionMismatch);
}

TEST(Models, SpiralJacobian) {
    const SpiralModel m;
    check_jacobian(m, [](std::mt19937_64& r) {
        std::uniform_real_distribution<double> u(-50.0, 50.0);
        return Vec::Constant(1, u(r));
    });
}

TEST(Models, SpiralPassesThroughOriginAtZero) {
    // shift = -a puts V_0 at the origin.
    const SpiralModel m;
    EXPECT_LT(m.value(Vec::Zero(1)).norm(), 1e-12);
}

TEST(Models, ReluJacobianAwayFromKinks) {
    const ReluNet net(8, grid_states(6));
    check_jacobian(
        net, [](std::mt19937_64& r) { return oracle::gaussian_vec(8 * 3, r); },
        [&net](const Vec& w) { return net.min_kink_distance(w) < 1e-3; });
}

TEST(Models, ReluJacobianMultiDimensionalInput) {
    std::mt19937_64 rng(4);
    Mat states(5, 2);
    for (Eigen::Index c = 0; c < 2; ++c) states.col(c) = oracle::gaussian_vec(5, rng);
    const ReluNet net(6, states);
    check_jacobian(
        net, [](std::mt19937_64& r) { return oracle::gaussian_vec(6 * 4, r); },
        [&net](const Vec& w) { return net.min_kink_distance(w) < 1e-3; });
}

TEST(Models, ReluValueByHand) {
    Mat states(2, 1);
    states << -1.0, 1.0;
    const ReluNet net(2, states);
    // layout [a1 a2 | b1 b2 | c1 c2]
    Vec w(6);
    w << 2.0, -0.5, 1.0, 3.0, 0.0, 1.0;
    // s=-1: relu(-1)=0, relu(-4)=0; s=1: relu(1)=1, relu(2)=2
    const Vec v = net.value(w);
    EXPECT_DOUBLE_EQ(v(0), 0.0);
    EXPECT_DOUBLE_EQ(v(1), (2.0 * 1.0 - 0.5 * 2.0) / 2.0);
    const Mat j = net.jacobian(w);
    EXPECT_DOUBLE_EQ(j(1, 0), 0.5);  // relu(1)/N
    EXPECT_DOUBLE_EQ(j(1, 3), -0.5 * 1.0 / 2.0);  // a2 s / N
    EXPECT_DOUBLE_EQ(j(1, 5), 0.5 / 2.0);  // -a2 / N
    EXPECT_DOUBLE_EQ(j(0, 2), 0.0);
}

TEST(Models, ReluKinkDerivativeIsZero) {
    Mat states(1, 1);
    states << 0.5;
    const ReluNet net(1, states);
    Vec w(3);
    w << 1.0, 2.0, 1.0;  // pre-activation exactly 0
    const Mat j = net.jacobian(w);
    EXPECT_EQ(j(0, 1), 0.0);
    EXPECT_EQ(j(0, 2), 0.0);
}

TEST(Models, DoubledInitVanishes) {
    const ReluNet net(100, grid_states(30));
    const Vec w0 = relu_init_doubled(100, 1, 6);
    EXPECT_LE(net.value(w0).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_THROW(relu_init_doubled(7, 1, 0), OddWidth);
}

TEST(Models, GridStatesIncludeEndpoints) {
    const Mat s = grid_states(5);
    EXPECT_DOUBLE_EQ(s(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(s(4, 0), 1.0);
    EXPECT_DOUBLE_EQ(s(2, 0), 0.0);
}

TEST(Models, TangentJacobianAndLinearization) {
    auto base = std::make_shared<ReluNet>(6, grid_states(4));
    std::mt19937_64 rng(9);
    const Vec w0 = oracle::gaussian_vec(18, rng);
    const TangentModel tm(base, w0);
    check_jacobian(tm, [&w0](std::mt19937_64& r) { return Vec(w0 + oracle::gaussian_vec(18, r, 0.1)); });
    EXPECT_LT((tm.value(w0) - base->value(w0)).norm(), 1e-14);
    // first-order agreement with the base near the anchor (off kinks)
    if (base->min_kink_distance(w0) > 1e-2) {
        const Vec dw = 1e-5 * oracle::gaussian_vec(18, rng);
        EXPECT_LT((tm.value(w0 + dw) - base->value(w0 + dw)).norm(), 1e-8);
    }
}

TEST(Models, RankProfileOfDoubledNet) {
    // seed 6 is the first seed giving full rank on the 30-point grid
    const ReluNet net(100, grid_states(30));
    const auto prof = model_rank_profile(net, relu_init_doubled(100, 1, 6));
    EXPECT_EQ(prof.states, 30);
    EXPECT_EQ(prof.rank, 30);
    EXPECT_TRUE(prof.over_parametrized());
    const ReluNet small(10, grid_states(50));
    EXPECT_TRUE(model_rank_profile(small, relu_init_doubled(10, 1, 0)).under_parametrized());
}

TEST(Models, RankProfileMatchesSvdOracle) {
    std::mt19937_64 rng(3);
    Mat a(5, 3);
    for (Eigen::Index c = 0; c < 3; ++c) a.col(c) = oracle::gaussian_vec(5, rng);
    Mat rank2(5, 3);
    rank2 << a.col(0), a.col(1), a.col(0) + 2.0 * a.col(1);
    EXPECT_EQ(rank_profile(a).rank, 3);
    EXPECT_EQ(rank_profile(rank2).rank, 2);
}
