#pragma once

// Training engines: stochastic TD(lambda) with eligibility traces, the averaged
// ODE and its lazy (alpha-scaled) counterpart, plus a fixed-step integrator.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lazytd/models.hpp"
#include "lazytd/mrp.hpp"

namespace lazytd {

enum class Mode { Stochastic, AveragedOde, LazyOde };
enum class Integrator { Euler, Rk4 };
enum class TraceMode { Recursive, Windowed };

/// beta_t: either constant or Robbins-Monro beta0 / (1 + t / t0).
struct StepSchedule {
    enum class Kind { Constant, RobbinsMonro };
    Kind kind = Kind::Constant;
    double beta0 = 1e-3;
    double t0 = 1.0;

    [[nodiscard]] double at(long t) const {
        return kind == Kind::Constant ? beta0 : beta0 / (1.0 + static_cast<double>(t) / t0);
    }
};

struct TrainConfig {
    double lambda = 0.0;
    double alpha = 1.0;
    Mode mode = Mode::LazyOde;
    StepSchedule step;
    long horizon = 1000;  // stochastic steps, or ODE steps of size dt
    Integrator integrator = Integrator::Rk4;
    double dt = 1e-2;
    long save_every = 1;
    double divergence_threshold = 1e8;
    std::uint64_t seed = 0;
    TraceMode trace = TraceMode::Recursive;
    long trace_window = 64;
    /// ODE runs stop once the projected TD error drops below this (0 disables).
    double stop_tol = 0.0;

    void validate() const {
        if (!(lambda >= 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in [0,1)");
        if (!(alpha >= 1.0)) throw ConfigError("alpha must be >= 1");
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        if (!(divergence_threshold > 0.0)) throw ConfigError("divergence threshold must be positive");
        if (horizon < 1) throw ConfigError("horizon must be at least one step");
        if (save_every < 1) throw ConfigError("save_every must be positive");
        if (!(step.beta0 > 0.0) || !(step.t0 > 0.0)) throw ConfigError("step schedule needs beta0 > 0 and t0 > 0");
        if (trace == TraceMode::Windowed && trace_window < 1) throw ConfigError("trace window must be positive");
    }
};

struct DiagnosticSeries {
    std::string name;
    std::vector<double> values;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> params;
    std::vector<DiagnosticSeries> diagnostics;
    bool diverged = false;
    double divergence_time = std::numeric_limits<double>::quiet_NaN();
    bool stopped_early = false;

    [[nodiscard]] std::size_t size() const { return times.size(); }
    [[nodiscard]] const Vec& initial() const { return params.front(); }
    [[nodiscard]] const Vec& final() const { return params.back(); }

    std::vector<double>& series(const std::string& name) {
        for (auto& d : diagnostics)
            if (d.name == name) return d.values;
        diagnostics.push_back({name, {}});
        return diagnostics.back().values;
    }
    [[nodiscard]] const std::vector<double>* find_series(const std::string& name) const {
        for (const auto& d : diagnostics)
            if (d.name == name) return &d.values;
        return nullptr;
    }

    /// sup_t ||w(t) - w(0)||_2 over saved samples.
    [[nodiscard]] double max_displacement() const {
        double best = 0.0;
        for (const auto& w : params) best = std::max(best, (w - params.front()).norm());
        return best;
    }
};

/// Trajectory s_0 ~ mu, s_{t+1} ~ P(s_t, .). Returns `steps` + 1 states.
inline std::vector<Eigen::Index> sample_chain(const Mrp& mrp, const StationaryMeasure& m, long steps, std::uint64_t seed) {
    if (steps < 1) throw DomainError("sample_chain needs steps >= 1");
    std::mt19937_64 rng(seed);
    const auto d = mrp.d();
    std::discrete_distribution<Eigen::Index> init(m.mu.data(), m.mu.data() + d);
    std::vector<std::discrete_distribution<Eigen::Index>> rows;
    rows.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) {
        const Eigen::RowVectorXd r = mrp.P().row(i);
        rows.emplace_back(r.data(), r.data() + d);
    }
    std::vector<Eigen::Index> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    out.push_back(init(rng));
    for (long t = 0; t < steps; ++t) out.push_back(rows[static_cast<std::size_t>(out.back())](rng));
    return out;
}

/// One TD(lambda) update with recursive eligibility trace:
///   delta = r(s,s') + gamma alpha V_w(s') - alpha V_w(s)
///   z'    = gamma lambda z + grad_w V_w(s)
///   w'    = w + (beta / alpha) delta z'
/// alpha = 1 is plain TD(lambda).
inline std::pair<Vec, Vec> stochastic_td_step(const Model& model, const Mrp& mrp, const Vec& w, const Vec& z,
                                              Eigen::Index s, Eigen::Index s_next, double lambda, double alpha,
                                              double beta, double divergence_threshold = 1e8) {
    Vec v;
    Mat j;
    model.evaluate(w, v, j);
    const double delta = mrp.reward(s, s_next) + mrp.gamma() * alpha * v(s_next) - alpha * v(s);
    Vec z_next = mrp.gamma() * lambda * z + j.row(s).transpose();
    Vec w_next = w + (beta / alpha) * delta * z_next;
    if (!w_next.allFinite()) throw NonFiniteState("stochastic TD produced a non-finite parameter");
    if (w_next.lpNorm<Eigen::Infinity>() > divergence_threshold) throw Diverged("||w|| exceeded threshold");
    return {std::move(w_next), std::move(z_next)};
}

/// Stochastic TD(lambda) run along a freshly sampled chain. Saved times are step indices.
/// In windowed mode the trace sums the last K gradients re-evaluated at the current w.
inline Trajectory run_stochastic(const Model& model, const Mrp& mrp, const StationaryMeasure& m, const Vec& w0,
                                 const TrainConfig& cfg) {
    cfg.validate();
    const auto states = sample_chain(mrp, m, cfg.horizon, cfg.seed);
    const double gl = mrp.gamma() * cfg.lambda;
    Trajectory traj;
    Vec w = w0;
    Vec z = Vec::Zero(w0.size());
    std::deque<Eigen::Index> window;
    traj.times.push_back(0.0);
    traj.params.push_back(w);
    Vec v;
    Mat j;
    for (long t = 0; t < cfg.horizon; ++t) {
        const auto s = states[static_cast<std::size_t>(t)];
        const auto s_next = states[static_cast<std::size_t>(t) + 1];
        const double beta = cfg.step.at(t);
        try {
            if (cfg.trace == TraceMode::Recursive) {
                auto [wn, zn] = stochastic_td_step(model, mrp, w, z, s, s_next, cfg.lambda, cfg.alpha, beta,
                                                   cfg.divergence_threshold);
                w = std::move(wn);
                z = std::move(zn);
            } else {
                window.push_back(s);
                if (static_cast<long>(window.size()) > cfg.trace_window) window.pop_front();
                model.evaluate(w, v, j);
                z.setZero();
                double weight = 1.0;
                for (auto it = window.rbegin(); it != window.rend(); ++it, weight *= gl) z += weight * j.row(*it).transpose();
                const double delta = mrp.reward(s, s_next) + mrp.gamma() * cfg.alpha * v(s_next) - cfg.alpha * v(s);
                w += (beta / cfg.alpha) * delta * z;
                if (!w.allFinite()) throw NonFiniteState("stochastic TD produced a non-finite parameter");
                if (w.lpNorm<Eigen::Infinity>() > cfg.divergence_threshold) throw Diverged("||w|| exceeded threshold");
            }
        } catch (const Diverged&) {
            traj.diverged = true;
            traj.divergence_time = static_cast<double>(t + 1);
            return traj;
        }
        if ((t + 1) % cfg.save_every == 0 || t + 1 == cfg.horizon) {
            traj.times.push_back(static_cast<double>(t + 1));
            traj.params.push_back(w);
        }
    }
    return traj;
}

/// DV_w^T Gamma (T^lambda V_w - V_w).
inline Vec averaged_rhs(const Model& model, const TdOperator& td, const StationaryMeasure& m, const Vec& w) {
    Vec v;
    Mat j;
    model.evaluate(w, v, j);
    return j.transpose() * m.mu.cwiseProduct(td.residual(v));
}

/// (1/alpha) DV_w^T Gamma (T^lambda(alpha V_w) - alpha V_w).
inline Vec lazy_rhs(const Model& model, const TdOperator& td, const StationaryMeasure& m, double alpha, const Vec& w) {
    if (!(alpha >= 1.0)) throw DomainError("alpha must be >= 1");
    Vec v;
    Mat j;
    model.evaluate(w, v, j);
    return j.transpose() * m.mu.cwiseProduct(td.residual(alpha * v)) / alpha;
}

/// Vector field of the lazy dynamics bound to one (model, MRP, lambda, alpha).
class LazyFlow {
public:
    LazyFlow(ModelPtr model, const Mrp& mrp, StationaryMeasure m, double lambda, double alpha)
        : model_(std::move(model)), td_(mrp, lambda), m_(std::move(m)), alpha_(alpha) {
        if (!(alpha_ >= 1.0)) throw DomainError("alpha must be >= 1");
        require_size(model_->num_states(), mrp.d(), "model state count");
    }

    Vec operator()(const Vec& w) const { return lazy_rhs(*model_, td_, m_, alpha_, w); }

    /// f = alpha V_w.
    [[nodiscard]] Vec function_value(const Vec& w) const { return alpha_ * model_->value(w); }

    [[nodiscard]] const Model& model() const { return *model_; }
    [[nodiscard]] const ModelPtr& model_ptr() const { return model_; }
    [[nodiscard]] const TdOperator& td() const { return td_; }
    [[nodiscard]] const StationaryMeasure& measure() const { return m_; }
    [[nodiscard]] double alpha() const { return alpha_; }

private:
    ModelPtr model_;
    TdOperator td_;
    StationaryMeasure m_;
    double alpha_;
};

struct IntegrateOptions {
    Integrator integrator = Integrator::Rk4;
    double dt = 1e-2;
    long steps = 1000;
    long save_every = 1;
    double divergence_threshold = 1e8;
    /// Extra divergence test on the state (e.g. ||alpha V_w||_inf > threshold).
    std::function<bool(const Vec&)> diverged;
    /// Called at every save point with (t, w); returning true stops the run.
    std::function<bool(double, const Vec&)> observer;

    static IntegrateOptions from(const TrainConfig& cfg) {
        IntegrateOptions o;
        o.integrator = cfg.integrator;
        o.dt = cfg.dt;
        o.steps = cfg.horizon;
        o.save_every = cfg.save_every;
        o.divergence_threshold = cfg.divergence_threshold;
        return o;
    }
};

/// Fixed-step Euler or classical RK4 for w' = rhs(w). Samples are saved every
/// `save_every` steps and at the final step. The run halts, without saving the
/// offending state, once ||w||_inf or the extra predicate exceeds the threshold.
template <class Rhs>
Trajectory integrate(Rhs&& rhs, const Vec& w0, const IntegrateOptions& opt) {
    if (!(opt.dt > 0.0)) throw DomainError("dt must be positive");
    if (opt.save_every < 1 || opt.steps < 0) throw DomainError("invalid step counts");
    if (!w0.allFinite()) throw NonFiniteState("initial state is not finite");
    Trajectory traj;
    Vec w = w0;
    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.params.push_back(w);
        if (opt.observer && opt.observer(t, w)) {
            traj.stopped_early = true;
            return true;
        }
        return false;
    };
    if (record(0.0)) return traj;
    const double h = opt.dt;
    // A stage that leaves the threshold box or overflows means the flow blew up
    // inside the step (finite-time blow-up); NaN from bounded inputs is a fault.
    bool blew_up = false;
    auto stage = [&](const Vec& x) -> Vec {
        if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > opt.divergence_threshold) blew_up = true;
        Vec k = rhs(x);
        if (!blew_up && k.hasNaN()) throw NonFiniteState("vector field returned NaN at a finite state");
        if (!k.allFinite()) blew_up = true;
        return k;
    };
    for (long k = 1; k <= opt.steps; ++k) {
        const double t = static_cast<double>(k) * h;
        if (opt.integrator == Integrator::Euler) {
            w += h * stage(w);
        } else {
            const Vec k1 = stage(w);
            const Vec k2 = stage(Vec(w + 0.5 * h * k1));
            const Vec k3 = stage(Vec(w + 0.5 * h * k2));
            const Vec k4 = stage(Vec(w + h * k3));
            w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (blew_up) {
            traj.diverged = true;
            traj.divergence_time = t;
            return traj;
        }
        if (!w.allFinite()) throw NonFiniteState("integration produced a non-finite state at t = " + std::to_string(t));
        if (w.lpNorm<Eigen::Infinity>() > opt.divergence_threshold || (opt.diverged && opt.diverged(w))) {
            traj.diverged = true;
            traj.divergence_time = t;
            return traj;
        }
        if (k % opt.save_every == 0 || k == opt.steps) {
            if (record(t)) return traj;
        }
    }
    return traj;
}

/// Relative change of the final state when dt is halved (and the step count doubled).
template <class Rhs>
double step_doubling_gap(Rhs&& rhs, const Vec& w0, IntegrateOptions opt) {
    opt.observer = nullptr;
    opt.save_every = opt.steps > 0 ? opt.steps : 1;
    const Trajectory coarse = integrate(rhs, w0, opt);
    opt.dt *= 0.5;
    opt.steps *= 2;
    opt.save_every = opt.steps > 0 ? opt.steps : 1;
    const Trajectory fine = integrate(rhs, w0, opt);
    if (coarse.diverged || fine.diverged) return std::numeric_limits<double>::infinity();
    const double scale = std::max(fine.final().norm(), 1e-300);
    return (coarse.final() - fine.final()).norm() / scale;
}

/// Lazy-ODE run: integrates the lazy flow with divergence detection on both
/// ||w||_inf and ||alpha V_w||_inf.
inline Trajectory run_lazy(const LazyFlow& flow, const Vec& w0, const TrainConfig& cfg,
                           std::function<bool(double, const Vec&)> observer = nullptr) {
    cfg.validate();
    auto opt = IntegrateOptions::from(cfg);
    const double thr = cfg.divergence_threshold;
    opt.diverged = [&flow, thr](const Vec& w) { return flow.function_value(w).lpNorm<Eigen::Infinity>() > thr; };
    opt.observer = std::move(observer);
    return integrate(flow, w0, opt);
}

/// Linear TD fixed point: Phi^T Gamma (T^lambda Phi w - Phi w) = 0, solved directly.
inline Vec linear_td_fixed_point(const Mat& phi, const TdOperator& td, const StationaryMeasure& m) {
    const auto d = phi.rows();
    Mat tphi(d, phi.cols());
    for (Eigen::Index k = 0; k < phi.cols(); ++k) tphi.col(k) = td.gamma() * td.p_lambda(phi.col(k));
    const Mat a = phi.transpose() * m.mu.asDiagonal() * (phi - tphi);
    const Vec b = phi.transpose() * m.mu.asDiagonal() * td.rbar_lambda();
    return a.completeOrthogonalDecomposition().solve(b);
}

}  // namespace lazytd
