#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "lazytd/dynamics.hpp"
#include "lazytd/analysis.hpp"
#include "support/oracles.hpp"

using namespace lazytd;

namespace {

Mat two_features() {
    Mat phi(3, 2);
    phi << 1.0, -1.0, 1.0, 0.0, 1.0, 1.0;
    return phi;
}

}  // namespace

TEST(Integrator, Rk4MatchesMatrixExponential) {
    Mat a(2, 2);
    a << -0.3, 1.0, -1.0, -0.3;
    const Vec w0 = (Vec(2) << 1.0, 0.5).finished();
    IntegrateOptions opt;
    opt.dt = 0.01;
    opt.steps = 500;
    opt.save_every = 500;
    const auto run = integrate([&a](const Vec& w) { return Vec(a * w); }, w0, opt);
    // closed form for a = -0.3 I + rotation
    const double t = 5.0;
    Mat rot(2, 2);
    rot << std::cos(t), std::sin(t), -std::sin(t), std::cos(t);
    const Vec exact = std::exp(-0.3 * t) * rot * w0;
    EXPECT_LT((run.final() - exact).norm(), 1e-9);
    EXPECT_EQ(run.times.size(), 2u);
    EXPECT_DOUBLE_EQ(run.times.back(), 5.0);
}

TEST(Integrator, EulerIsFirstOrder) {
    auto rhs = [](const Vec& w) { return Vec(-w); };
    const Vec w0 = Vec::Ones(1);
    auto err = [&](double dt) {
        IntegrateOptions opt;
        opt.integrator = Integrator::Euler;
        opt.dt = dt;
        opt.steps = static_cast<long>(std::lround(1.0 / dt));
        return std::abs(integrate(rhs, w0, opt).final()(0) - std::exp(-1.0));
    };
    const double ratio = err(1e-3) / err(5e-4);
    EXPECT_NEAR(ratio, 2.0, 0.05);
}

TEST(Integrator, SavesEverySaveEveryStepsAndAtTheEnd) {
    IntegrateOptions opt;
    opt.dt = 0.1;
    opt.steps = 10;
    opt.save_every = 4;
    const auto run = integrate([](const Vec& w) { return Vec(0.0 * w); }, Vec::Zero(1), opt);
    ASSERT_EQ(run.times.size(), 4u);
    EXPECT_NEAR(run.times[1], 0.4, 1e-15);
    EXPECT_NEAR(run.times[2], 0.8, 1e-15);
    EXPECT_NEAR(run.times[3], 1.0, 1e-15);
}

TEST(Integrator, FiniteTimeBlowUpIsDivergence) {
    // w' = w^2 from w = 1 blows up at t = 1.
    IntegrateOptions opt;
    opt.dt = 1e-3;
    opt.steps = 5000;
    opt.divergence_threshold = 1e6;
    const auto run = integrate([](const Vec& w) { return Vec(w.array().square().matrix()); }, Vec::Ones(1), opt);
    EXPECT_TRUE(run.diverged);
    EXPECT_GT(run.divergence_time, 0.99);
    EXPECT_LT(run.divergence_time, 1.01);
}

TEST(Integrator, NanFromFiniteStateIsAFault) {
    IntegrateOptions opt;
    opt.steps = 3;
    EXPECT_THROW(integrate([](const Vec& w) { return Vec::Constant(w.size(), std::nan("")); }, Vec::Ones(2), opt),
                 NonFiniteState);
    EXPECT_THROW(integrate([](const Vec& w) { return w; }, Vec::Constant(1, INFINITY), opt), NonFiniteState);
}

TEST(Integrator, ObserverStopsEarly) {
    IntegrateOptions opt;
    opt.dt = 0.1;
    opt.steps = 1000;
    opt.observer = [](double t, const Vec&) { return t >= 0.5 - 1e-12; };
    const auto run = integrate([](const Vec& w) { return Vec(-w); }, Vec::Ones(1), opt);
    EXPECT_TRUE(run.stopped_early);
    EXPECT_NEAR(run.times.back(), 0.5, 1e-12);
}

TEST(LazyRhs, MatchesHandFormula) {
    const auto m = oracle::random_mrp(3, 0.9, 1);
    const auto mu = stationary_measure(m);
    auto model = std::make_shared<SpiralModel>();
    const Vec w = Vec::Constant(1, 0.7);
    for (double lambda : {0.0, 0.5}) {
        const TdOperator td(m, lambda);
        for (double alpha : {1.0, 10.0}) {
            const Vec f = alpha * model->value(w);
            const Vec res = oracle::td_lambda_by_series(m, lambda, f) - f;
            const Vec expect = model->jacobian(w).transpose() * (mu.mu.array() * res.array()).matrix() / alpha;
            EXPECT_LT((lazy_rhs(*model, td, mu, alpha, w) - expect).norm(), 1e-9);
        }
        EXPECT_LT((lazy_rhs(*model, td, mu, 1.0, w) - averaged_rhs(*model, td, mu, w)).norm(), 1e-15);
    }
    EXPECT_THROW(lazy_rhs(*model, TdOperator(m, 0.0), mu, 0.5, w), DomainError);
}

// The expected one-step TD(0) update under (s ~ mu, s' ~ P(s, .)) is the averaged vector field.
TEST(StochasticTd, ExpectedUpdateIsAveragedField) {
    const auto m = oracle::random_mrp(4, 0.8, 6);
    const auto mu = stationary_measure(m);
    std::mt19937_64 rng(2);
    Mat phi(4, 3);
    for (Eigen::Index c = 0; c < 3; ++c) phi.col(c) = oracle::gaussian_vec(4, rng);
    const LinearModel model(phi);
    const Vec w = oracle::gaussian_vec(3, rng);
    for (double alpha : {1.0, 5.0}) {
        Vec mean = Vec::Zero(3);
        const double beta = 0.1;
        for (Eigen::Index s = 0; s < 4; ++s) {
            for (Eigen::Index sn = 0; sn < 4; ++sn) {
                const auto [wn, zn] = stochastic_td_step(model, m, w, Vec::Zero(3), s, sn, 0.0, alpha, beta);
                mean += mu.mu(s) * m.P()(s, sn) * (wn - w) / beta;
            }
        }
        EXPECT_LT((mean - lazy_rhs(model, TdOperator(m, 0.0), mu, alpha, w)).norm(), 1e-12);
    }
}

TEST(StochasticTd, WindowedTraceEqualsRecursiveForLinearModels) {
    const Mrp m(cyclic_transition(3, CyclicOrientation::Backward), (Vec(3) << 1.0, -2.0, 0.5).finished(), 0.9);
    const auto mu = stationary_measure(m);
    const LinearModel model(two_features());
    TrainConfig cfg;
    cfg.mode = Mode::Stochastic;
    cfg.lambda = 0.6;
    cfg.horizon = 200;
    cfg.step.beta0 = 1e-2;
    cfg.seed = 4;
    const auto rec = run_stochastic(model, m, mu, Vec::Zero(2), cfg);
    cfg.trace = TraceMode::Windowed;
    cfg.trace_window = 1000;
    const auto win = run_stochastic(model, m, mu, Vec::Zero(2), cfg);
    EXPECT_LT((rec.final() - win.final()).norm(), 1e-12);
}

TEST(StochasticTd, SameSeedSameTrajectory) {
    const auto m = oracle::random_mrp(3, 0.9, 3);
    const auto mu = stationary_measure(m);
    const LinearModel model(two_features());
    TrainConfig cfg;
    cfg.horizon = 500;
    cfg.seed = 17;
    const auto a = run_stochastic(model, m, mu, Vec::Zero(2), cfg);
    const auto b = run_stochastic(model, m, mu, Vec::Zero(2), cfg);
    EXPECT_EQ((a.final() - b.final()).norm(), 0.0);
    cfg.seed = 18;
    EXPECT_GT((run_stochastic(model, m, mu, Vec::Zero(2), cfg).final() - a.final()).norm(), 0.0);
}

TEST(StochasticTd, ChainVisitsFollowMu) {
    const auto m = oracle::random_mrp(4, 0.9, 12);
    const auto mu = stationary_measure(m);
    const auto chain = sample_chain(m, mu, 200000, 1);
    Vec freq = Vec::Zero(4);
    for (auto s : chain) freq(s) += 1.0;
    freq /= static_cast<double>(chain.size());
    EXPECT_LT((freq - mu.mu).lpNorm<Eigen::Infinity>(), 0.01);
}

TEST(StochasticTd, DivergenceIsReported) {
    // A huge constant step makes tabular TD blow up.
    const Mrp m(cyclic_transition(3, CyclicOrientation::Backward), Vec::Ones(3), 0.9);
    const auto mu = stationary_measure(m);
    const LinearModel model(Mat::Identity(3, 3));
    TrainConfig cfg;
    cfg.horizon = 10000;
    cfg.step.beta0 = 50.0;
    cfg.divergence_threshold = 1e6;
    const auto run = run_stochastic(model, m, mu, Vec::Zero(3), cfg);
    EXPECT_TRUE(run.diverged);
}

TEST(StepSchedule, RobbinsMonro) {
    StepSchedule s{StepSchedule::Kind::RobbinsMonro, 0.5, 10.0};
    EXPECT_DOUBLE_EQ(s.at(0), 0.5);
    EXPECT_DOUBLE_EQ(s.at(10), 0.25);
    StepSchedule c;
    EXPECT_DOUBLE_EQ(c.at(1000), c.beta0);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.alpha = 0.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.lambda = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.dt = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    EXPECT_NO_THROW(c.validate());
}

TEST(LinearTd, FixedPointZeroesTheAveragedField) {
    const auto m = oracle::random_mrp(5, 0.9, 2);
    const auto mu = stationary_measure(m);
    std::mt19937_64 rng(7);
    Mat phi(5, 2);
    for (Eigen::Index c = 0; c < 2; ++c) phi.col(c) = oracle::gaussian_vec(5, rng);
    for (double lambda : {0.0, 0.5}) {
        const TdOperator td(m, lambda);
        const Vec w = linear_td_fixed_point(phi, td, mu);
        EXPECT_LT(averaged_rhs(LinearModel(phi), td, mu, w).norm(), 1e-10);
    }
}

TEST(LinearTd, OdeConvergesToFixedPoint) {
    const Mrp m(cyclic_transition(3, CyclicOrientation::Backward), (Vec(3) << -6.85, 8.35, -1.5).finished(), 0.9);
    const auto mu = stationary_measure(m);
    auto model = std::make_shared<LinearModel>(two_features());
    TrainConfig cfg;
    cfg.dt = 0.1;
    cfg.horizon = 20000;
    cfg.save_every = 20000;
    const LazyFlow flow(model, m, mu, 0.0, 1.0);
    const auto run = run_lazy(flow, Vec::Zero(2), cfg);
    const Vec ref = linear_td_fixed_point(two_features(), flow.td(), mu);
    EXPECT_LT((run.final() - ref).norm(), 1e-8);
}

TEST(LazyFlow, StepDoublingOnSpiral) {
    const Mrp m(cyclic_transition(3, CyclicOrientation::Backward), (Vec(3) << -6.85, 8.35, -1.5).finished(), 0.9);
    const LazyFlow flow(std::make_shared<SpiralModel>(), m, stationary_measure(m), 0.0, 100.0);
    IntegrateOptions opt;
    opt.dt = 2e-3;
    opt.steps = 20000;
    EXPECT_LT(step_doubling_gap(flow, Vec::Zero(1), opt), 1e-4);
}
