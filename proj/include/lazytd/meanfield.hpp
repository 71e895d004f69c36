#pragma once

// Particle realization of the mean-field TD(0) dynamics for homogeneous models
//   V_nu(s) = (1/N) sum_i omega0_i phi(s; wbar_i).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lazytd/models.hpp"
#include "lazytd/mrp.hpp"

namespace lazytd {

/// Feature family phi(s; wbar) over states s in R^k with parameters wbar in R^q.
class FeatureMap {
public:
    virtual ~FeatureMap() = default;
    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual Eigen::Index param_dim(Eigen::Index state_dim) const = 0;
    [[nodiscard]] virtual bool bounded() const = 0;

    /// phi(s_j; wbar) for every state row s_j (d-vector) and its wbar-gradient (d x q).
    virtual void evaluate(const Mat& states, const Vec& wbar, Vec& phi, Mat& grad) const = 0;

    [[nodiscard]] Vec phi(const Mat& states, const Vec& wbar) const {
        Vec f;
        Mat g;
        evaluate(states, wbar, f, g);
        return f;
    }

    /// Column i = phi(.; wbar_i) for every row of `wbar` (d x N).
    [[nodiscard]] virtual Mat phi_matrix(const Mat& states, const Mat& wbar) const {
        Mat out(states.rows(), wbar.rows());
        for (Eigen::Index i = 0; i < wbar.rows(); ++i) out.col(i) = phi(states, wbar.row(i).transpose());
        return out;
    }

    /// For each particle i: phi_dot(i) = sum_s weight(s) phi(s; wbar_i) and
    /// grad_dot.row(i) = sum_s weight(s) grad phi(s; wbar_i).
    virtual void correlate(const Mat& states, const Mat& wbar, const Vec& weight, Vec& phi_dot, Mat& grad_dot) const {
        phi_dot.resize(wbar.rows());
        grad_dot.resize(wbar.rows(), wbar.cols());
        Vec f;
        Mat g;
        for (Eigen::Index i = 0; i < wbar.rows(); ++i) {
            evaluate(states, wbar.row(i).transpose(), f, g);
            phi_dot(i) = f.dot(weight);
            grad_dot.row(i) = (g.transpose() * weight).transpose();
        }
    }
};

using FeaturePtr = std::shared_ptr<const FeatureMap>;

/// phi(s; c) = exp(-||s - c||^2 / (2 sigma^2)), wbar = c.
class GaussianBumpFeature final : public FeatureMap {
public:
    explicit GaussianBumpFeature(double width) : sigma_(width) {
        if (!(sigma_ > 0.0)) throw DomainError("bump width must be positive");
    }
    [[nodiscard]] std::string kind() const override { return "gaussian"; }
    [[nodiscard]] Eigen::Index param_dim(Eigen::Index state_dim) const override { return state_dim; }
    [[nodiscard]] bool bounded() const override { return true; }
    [[nodiscard]] double width() const { return sigma_; }

    void evaluate(const Mat& states, const Vec& wbar, Vec& phi, Mat& grad) const override {
        require_size(wbar.size(), states.cols(), "bump center");
        const auto d = states.rows();
        const double inv_var = 1.0 / (sigma_ * sigma_);
        phi.resize(d);
        grad.resize(d, wbar.size());
        for (Eigen::Index j = 0; j < d; ++j) {
            const Vec diff = states.row(j).transpose() - wbar;
            phi(j) = std::exp(-0.5 * diff.squaredNorm() * inv_var);
            grad.row(j) = (phi(j) * inv_var) * diff.transpose();
        }
    }

    [[nodiscard]] Mat phi_matrix(const Mat& states, const Mat& wbar) const override {
        require_size(wbar.cols(), states.cols(), "bump center");
        const double inv_var = 1.0 / (sigma_ * sigma_);
        Mat out(states.rows(), wbar.rows());
        for (Eigen::Index i = 0; i < wbar.rows(); ++i) {
            for (Eigen::Index j = 0; j < states.rows(); ++j) {
                out(j, i) = std::exp(-0.5 * (states.row(j) - wbar.row(i)).squaredNorm() * inv_var);
            }
        }
        return out;
    }

    void correlate(const Mat& states, const Mat& wbar, const Vec& weight, Vec& phi_dot, Mat& grad_dot) const override {
        require_size(wbar.cols(), states.cols(), "bump center");
        const auto q = wbar.cols();
        const double inv_var = 1.0 / (sigma_ * sigma_);
        phi_dot.setZero(wbar.rows());
        grad_dot.setZero(wbar.rows(), q);
        for (Eigen::Index i = 0; i < wbar.rows(); ++i) {
            for (Eigen::Index j = 0; j < states.rows(); ++j) {
                double sq = 0.0;
                for (Eigen::Index k = 0; k < q; ++k) {
                    const double diff = states(j, k) - wbar(i, k);
                    sq += diff * diff;
                }
                const double wf = weight(j) * std::exp(-0.5 * sq * inv_var);
                phi_dot(i) += wf;
                for (Eigen::Index k = 0; k < q; ++k) grad_dot(i, k) += wf * inv_var * (states(j, k) - wbar(i, k));
            }
        }
    }

private:
    double sigma_;
};

/// phi(s; (b, c)) = max(0, b . s - c), with derivative 0 at the kink.
class ReluFeature final : public FeatureMap {
public:
    [[nodiscard]] std::string kind() const override { return "relu"; }
    [[nodiscard]] Eigen::Index param_dim(Eigen::Index state_dim) const override { return state_dim + 1; }
    [[nodiscard]] bool bounded() const override { return false; }

    void evaluate(const Mat& states, const Vec& wbar, Vec& phi, Mat& grad) const override {
        const auto k = states.cols();
        require_size(wbar.size(), k + 1, "ReLU feature parameters");
        const auto d = states.rows();
        phi.resize(d);
        grad.setZero(d, k + 1);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double pre = states.row(j).dot(wbar.head(k)) - wbar(k);
            phi(j) = std::max(0.0, pre);
            if (pre > 0.0) {
                grad.row(j).head(k) = states.row(j);
                grad(j, k) = -1.0;
            }
        }
    }
};

/// N particles omega^(i) = (omega0_i, wbar_i).
struct ParticleEnsemble {
    Vec omega0;  // N
    Mat wbar;  // N x q

    [[nodiscard]] Eigen::Index size() const { return omega0.size(); }
    [[nodiscard]] Eigen::Index param_dim() const { return wbar.cols(); }
};

/// Everything the particle flow needs besides the ensemble itself.
struct MeanFieldSystem {
    FeaturePtr features;
    Mat states;  // d x k
    Mrp mrp;
    StationaryMeasure measure;
    Vec vstar;

    MeanFieldSystem(FeaturePtr f, Mat s, Mrp m)
        : features(std::move(f)), states(std::move(s)), mrp(std::move(m)), measure(stationary_measure(mrp)),
          vstar(exact_value(mrp)) {
        require_size(states.rows(), mrp.d(), "state count");
    }
};

/// Feature matrix Phi with column i = phi(.; wbar_i).
inline Mat feature_matrix(const ParticleEnsemble& e, const FeatureMap& f, const Mat& states) {
    return f.phi_matrix(states, e.wbar);
}

inline Vec ensemble_value(const ParticleEnsemble& e, const FeatureMap& f, const Mat& states) {
    require_size(e.wbar.rows(), e.size(), "ensemble");
    return f.phi_matrix(states, e.wbar) * e.omega0 / static_cast<double>(e.size());
}

/// State-wise expected TD error E_{s'}[r(s,s') + gamma V(s') - V(s)] = (T^0 V - V)(s).
inline Vec expected_td_error(const Mrp& mrp, const Vec& v) { return mrp.rbar() + mrp.gamma() * (mrp.P() * v) - v; }

struct ParticleVelocity {
    Vec d_omega0;  // g_nu(wbar_i)
    Mat d_wbar;  // omega0_i E_mu[delta grad phi(s; wbar_i)]

    /// Largest Euclidean speed over particles.
    [[nodiscard]] double max_speed() const {
        double best = 0.0;
        for (Eigen::Index i = 0; i < d_omega0.size(); ++i) {
            best = std::max(best, std::sqrt(d_omega0(i) * d_omega0(i) + d_wbar.row(i).squaredNorm()));
        }
        return best;
    }
};

inline ParticleVelocity particle_rhs(const ParticleEnsemble& e, const MeanFieldSystem& sys) {
    const Vec v = ensemble_value(e, *sys.features, sys.states);
    const Vec weighted = sys.measure.mu.cwiseProduct(expected_td_error(sys.mrp, v));
    ParticleVelocity out;
    sys.features->correlate(sys.states, e.wbar, weighted, out.d_omega0, out.d_wbar);
    out.d_wbar = e.omega0.asDiagonal() * out.d_wbar;
    return out;
}

/// g_nu(wbar) = <phi(.; wbar), T^0 V_nu - V_nu>_mu on every row of `grid`.
inline Vec g_profile(const ParticleEnsemble& e, const MeanFieldSystem& sys, const Mat& grid) {
    const Vec v = ensemble_value(e, *sys.features, sys.states);
    const Vec weighted = sys.measure.mu.cwiseProduct(expected_td_error(sys.mrp, v));
    return sys.features->phi_matrix(sys.states, grid).transpose() * weighted;
}

/// Axis-aligned binning of wbar-space.
struct Binning {
    Vec lower;
    Vec upper;
    std::vector<Eigen::Index> bins;

    [[nodiscard]] Eigen::Index total_bins() const {
        Eigen::Index n = 1;
        for (auto b : bins) n *= b;
        return n;
    }
    /// Flattened bin index, or -1 when outside the box.
    [[nodiscard]] Eigen::Index locate(const Vec& x) const {
        Eigen::Index idx = 0;
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const auto kk = static_cast<std::size_t>(k);
            if (x(k) < lower(k) || x(k) > upper(k)) return -1;
            auto b = static_cast<Eigen::Index>(std::floor((x(k) - lower(k)) / (upper(k) - lower(k)) * static_cast<double>(bins[kk])));
            b = std::min(b, bins[kk] - 1);
            idx = idx * bins[kk] + b;
        }
        return idx;
    }
};

struct H1Profile {
    std::vector<double> per_bin;  // (1/N) sum_{i in bin} omega0_i
    double outside = 0.0;
    double total = 0.0;  // (1/N) sum_i omega0_i
};

inline H1Profile h1_profile(const ParticleEnsemble& e, const Binning& binning) {
    require_size(binning.lower.size(), e.param_dim(), "binning dimension");
    H1Profile h;
    h.per_bin.assign(static_cast<std::size_t>(binning.total_bins()), 0.0);
    const double inv_n = 1.0 / static_cast<double>(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        const auto b = binning.locate(e.wbar.row(i).transpose());
        if (b < 0) h.outside += e.omega0(i) * inv_n;
        else h.per_bin[static_cast<std::size_t>(b)] += e.omega0(i) * inv_n;
        h.total += e.omega0(i) * inv_n;
    }
    return h;
}

struct SeparationReport {
    bool within_box = false;  // all |omega0_i| <= r0
    bool covered = false;  // every grid point has a particle within h (sup-norm in wbar)
    bool paired_covered = false;  // ... and both signs of omega0 are present within h
    double max_abs_omega0 = 0.0;
    std::vector<Eigen::Index> uncovered;  // grid rows without a nearby particle
    Vec witness;  // first uncovered grid point, empty on success

    [[nodiscard]] bool passed() const { return within_box && covered; }
};

/// Grid surrogate for the support-separation condition.
inline SeparationReport separation_check(const ParticleEnsemble& e, double r0, const Mat& theta_grid, double resolution) {
    SeparationReport r;
    r.max_abs_omega0 = e.omega0.size() ? e.omega0.cwiseAbs().maxCoeff() : 0.0;
    r.within_box = r.max_abs_omega0 <= r0;
    r.covered = true;
    r.paired_covered = true;
    for (Eigen::Index g = 0; g < theta_grid.rows(); ++g) {
        bool any = false, pos = false, neg = false;
        for (Eigen::Index i = 0; i < e.size(); ++i) {
            if ((e.wbar.row(i) - theta_grid.row(g)).cwiseAbs().maxCoeff() <= resolution) {
                any = true;
                pos = pos || e.omega0(i) > 0.0;
                neg = neg || e.omega0(i) < 0.0;
            }
        }
        if (!any) {
            if (r.covered) r.witness = theta_grid.row(g).transpose();
            r.covered = false;
            r.uncovered.push_back(g);
        }
        if (!(pos && neg)) r.paired_covered = false;
    }
    return r;
}

struct OptimalityReport {
    double velocity_norm = 0.0;
    double bellman_residual = 0.0;  // ||T^0 V_nu - V_nu||_mu
    double optimality_gap = 0.0;  // ||V_nu - V*||_mu
    double calibration = 0.0;  // C_cal in tol = C_cal * eps
    double tolerance = 0.0;
    bool fixed_point = false;  // velocity_norm <= eps
    bool separated = false;
    bool universal = false;  // feature matrix spans R^d
    bool implication_applies = false;
    bool implication_holds = true;  // vacuous unless it applies
};

/// Calibration constant for the linear-feature case: with the wbar frozen the
/// omega0-flow is linear TD, and
///   ||V - V*||_mu <= sqrt(N) max_i |g(wbar_i)| / ((1 - gamma) sigma_min(Gamma^{1/2} Phi)).
inline double optimality_calibration(const ParticleEnsemble& e, const MeanFieldSystem& sys) {
    const Mat phi = feature_matrix(e, *sys.features, sys.states);
    const Mat weighted = sys.measure.mu.array().sqrt().matrix().asDiagonal() * phi;
    const auto prof = rank_profile(weighted);
    if (prof.rank < sys.states.rows()) return std::numeric_limits<double>::infinity();
    return std::sqrt(static_cast<double>(e.size())) / ((1.0 - sys.mrp.gamma()) * prof.sigma_min);
}

inline bool features_span_states(const ParticleEnsemble& e, const MeanFieldSystem& sys) {
    return rank_profile(feature_matrix(e, *sys.features, sys.states)).rank == sys.states.rows();
}

inline OptimalityReport fixed_point_optimality(const ParticleEnsemble& e, const MeanFieldSystem& sys, double eps,
                                               const SeparationReport& separation) {
    OptimalityReport r;
    const Vec v = ensemble_value(e, *sys.features, sys.states);
    r.velocity_norm = particle_rhs(e, sys).max_speed();
    r.bellman_residual = mu_norm(expected_td_error(sys.mrp, v), sys.measure);
    r.optimality_gap = mu_norm(v - sys.vstar, sys.measure);
    r.calibration = optimality_calibration(e, sys);
    r.tolerance = r.calibration * eps;
    r.fixed_point = r.velocity_norm <= eps;
    r.separated = separation.passed();
    r.universal = std::isfinite(r.calibration);
    r.implication_applies = r.fixed_point && r.separated && r.universal;
    r.implication_holds = !r.implication_applies || r.optimality_gap <= r.tolerance;
    return r;
}

struct EnsembleTrajectory {
    std::vector<double> times;
    std::vector<ParticleEnsemble> snapshots;
};

/// RK4 on the coupled particle ODE; a snapshot every `save_every` steps and at the end.
inline EnsembleTrajectory integrate_ensemble(const ParticleEnsemble& start, const MeanFieldSystem& sys, double dt,
                                             long steps, long save_every = 1) {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (steps < 0 || save_every < 1) throw DomainError("invalid step counts");
    auto axpy = [](const ParticleEnsemble& e, double h, const ParticleVelocity& v) {
        return ParticleEnsemble{e.omega0 + h * v.d_omega0, e.wbar + h * v.d_wbar};
    };
    EnsembleTrajectory out;
    ParticleEnsemble e = start;
    out.times.push_back(0.0);
    out.snapshots.push_back(e);
    for (long k = 1; k <= steps; ++k) {
        const auto k1 = particle_rhs(e, sys);
        const auto k2 = particle_rhs(axpy(e, 0.5 * dt, k1), sys);
        const auto k3 = particle_rhs(axpy(e, 0.5 * dt, k2), sys);
        const auto k4 = particle_rhs(axpy(e, dt, k3), sys);
        e.omega0 += (dt / 6.0) * (k1.d_omega0 + 2.0 * k2.d_omega0 + 2.0 * k3.d_omega0 + k4.d_omega0);
        e.wbar += (dt / 6.0) * (k1.d_wbar + 2.0 * k2.d_wbar + 2.0 * k3.d_wbar + k4.d_wbar);
        if (!e.omega0.allFinite() || !e.wbar.allFinite()) {
            throw NonFiniteState("particle state became non-finite at step " + std::to_string(k));
        }
        if (k % save_every == 0 || k == steps) {
            out.times.push_back(static_cast<double>(k) * dt);
            out.snapshots.push_back(e);
        }
    }
    return out;
}

/// Doubled ensemble: particles N/2+1..N copy wbar of the first half with omega0 negated,
/// so V_nu vanishes at t = 0. omega0 ~ N(0, 1); wbar rows come from `sample_wbar`.
template <class Sampler>
ParticleEnsemble doubled_ensemble(Eigen::Index n, Eigen::Index q, std::uint64_t seed, Sampler&& sample_wbar) {
    if (n < 2 || n % 2 != 0) throw OddWidth("doubled ensemble needs an even particle count");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto half = n / 2;
    ParticleEnsemble e{Vec(n), Mat(n, q)};
    for (Eigen::Index i = 0; i < half; ++i) {
        const double w0 = normal(rng);
        const Vec wb = sample_wbar(rng);
        require_size(wb.size(), q, "sampled wbar");
        e.omega0(i) = w0;
        e.omega0(i + half) = -w0;
        e.wbar.row(i) = wb.transpose();
        e.wbar.row(i + half) = wb.transpose();
    }
    return e;
}

/// Bump centers uniform on [lo, hi]^q.
inline ParticleEnsemble doubled_bump_ensemble(Eigen::Index n, Eigen::Index q, double lo, double hi, std::uint64_t seed) {
    return doubled_ensemble(n, q, seed, [q, lo, hi](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(lo, hi);
        Vec c(q);
        for (Eigen::Index k = 0; k < q; ++k) c(k) = u(rng);
        return c;
    });
}

/// ReLU features: b ~ N(0, 1/k) componentwise, c ~ N(0, 1).
inline ParticleEnsemble doubled_relu_ensemble(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
    return doubled_ensemble(n, k + 1, seed, [k](std::mt19937_64& rng) {
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec w(k + 1);
        for (Eigen::Index j = 0; j < k; ++j) w(j) = normal(rng) / std::sqrt(static_cast<double>(k));
        w(k) = normal(rng);
        return w;
    });
}

/// Regular grid of points on [lo, hi]^q with `per_dim` points per axis (rows).
inline Mat box_grid(Eigen::Index q, double lo, double hi, Eigen::Index per_dim) {
    Eigen::Index total = 1;
    for (Eigen::Index k = 0; k < q; ++k) total *= per_dim;
    Mat g(total, q);
    for (Eigen::Index r = 0; r < total; ++r) {
        Eigen::Index rem = r;
        for (Eigen::Index k = q - 1; k >= 0; --k) {
            const auto idx = rem % per_dim;
            rem /= per_dim;
            g(r, k) = per_dim == 1 ? lo : lo + (hi - lo) * static_cast<double>(idx) / static_cast<double>(per_dim - 1);
        }
    }
    return g;
}

}  // namespace lazytd
