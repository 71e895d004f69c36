#pragma once

// Diagnostics for the lazy regime: the pushforward metric at initialization,
// the Lyapunov function U(f) = ||f - V*||_0^2, projected TD errors, rate fits
// and the convergence certificates built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lazytd/dynamics.hpp"

namespace lazytd {

struct GeometryOptions {
    /// Overrides the sampled Jacobian Lipschitz estimate when set.
    std::optional<double> lipschitz_dv;
    int lipschitz_samples = 200;
    double lipschitz_radius = 1.0;
    std::uint64_t seed = 0;
};

/// Geometry of the model at w(0): metric g0 = (J0 J0^T)^+, norm-equivalence constant
/// kappa between ||.||_mu and ||.||_0 on span(J0), and the over-parametrized
/// radius M and threshold alpha0.
struct LazyGeometry {
    Vec w0;
    Mat j0;
    Mat g0;
    Mat span_basis;  // Euclidean orthonormal basis of span(J0)
    RankProfile profile;
    double kappa = 1.0;
    double ratio_min = 1.0;  // extreme values of ||f||_mu^2 / ||f||_0^2 on the span
    double ratio_max = 1.0;
    double lipschitz_dv = 0.0;
    double radius_m = std::numeric_limits<double>::infinity();
    double alpha0 = 0.0;
    double v0_norm0 = 0.0;
    double vstar_norm0 = 0.0;
};

/// Largest ||DV_u - DV_v|| / ||u - v|| over random pairs in a ball around w0.
inline double estimate_jacobian_lipschitz(const Model& model, const Vec& w0, int samples, double radius,
                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto p = w0.size();
    auto draw = [&]() {
        Vec dir(p);
        for (Eigen::Index i = 0; i < p; ++i) dir(i) = normal(rng);
        const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(p));
        return Vec(w0 + r * dir / dir.norm());
    };
    double best = 0.0;
    for (int k = 0; k < samples; ++k) {
        const Vec u = draw();
        const Vec v = draw();
        const double dist = (u - v).norm();
        if (dist <= 0.0) continue;
        const Mat diff = model.jacobian(u) - model.jacobian(v);
        const double op = diff.size() ? Eigen::JacobiSVD<Mat>(diff).singularValues()(0) : 0.0;
        best = std::max(best, op / dist);
    }
    return best;
}

inline LazyGeometry lazy_geometry(const Model& model, const Vec& w0, const Mrp& mrp, const StationaryMeasure& m,
                                  const Vec& vstar, const GeometryOptions& opt = {}) {
    LazyGeometry g;
    g.w0 = w0;
    Vec v0;
    model.evaluate(w0, v0, g.j0);
    Eigen::JacobiSVD<Mat> svd(g.j0, Eigen::ComputeThinU);
    g.profile.singular_values = svd.singularValues();
    g.profile.rank = numerical_rank(g.profile.singular_values);
    g.profile.states = g.j0.rows();
    g.profile.sigma_max = g.profile.singular_values.size() ? g.profile.singular_values(0) : 0.0;
    g.profile.sigma_min = g.profile.rank > 0 ? g.profile.singular_values(g.profile.rank - 1) : 0.0;
    g.span_basis = svd.matrixU().leftCols(g.profile.rank);
    const Vec inv_sq = g.profile.singular_values.head(g.profile.rank).array().square().inverse().matrix();
    g.g0 = g.span_basis * inv_sq.asDiagonal() * g.span_basis.transpose();

    if (g.span_basis.cols() > 0) {
        const Mat& q = g.span_basis;
        const Mat a = q.transpose() * m.mu.asDiagonal() * q;
        const Mat b = inv_sq.asDiagonal();
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(a, b);
        g.ratio_min = es.eigenvalues().minCoeff();
        g.ratio_max = es.eigenvalues().maxCoeff();
        g.kappa = std::max(std::sqrt(g.ratio_max), 1.0 / std::sqrt(g.ratio_min));
    }

    g.lipschitz_dv = opt.lipschitz_dv ? *opt.lipschitz_dv
                                      : estimate_jacobian_lipschitz(model, w0, opt.lipschitz_samples,
                                                                    opt.lipschitz_radius, opt.seed);
    const double one_minus_gamma = 1.0 - mrp.gamma();
    const double denom = 192.0 * g.kappa * g.kappa * g.lipschitz_dv * g.profile.sigma_max;
    g.radius_m = denom > 0.0 ? one_minus_gamma * one_minus_gamma * g.profile.sigma_min * g.profile.sigma_min / denom
                             : std::numeric_limits<double>::infinity();
    g.v0_norm0 = std::sqrt(std::max(0.0, v0.dot(g.g0 * v0)));
    g.vstar_norm0 = std::sqrt(std::max(0.0, vstar.dot(g.g0 * vstar)));
    g.alpha0 = std::isinf(g.radius_m) ? 0.0 : g.vstar_norm0 / g.radius_m;
    return g;
}

/// sqrt(f^T g0 f). Components outside span(J0) are annihilated by the pseudo-inverse.
inline double norm0(const LazyGeometry& g, const Vec& f) {
    require_size(f.size(), g.g0.rows(), "norm0 argument");
    return std::sqrt(std::max(0.0, f.dot(g.g0 * f)));
}

/// Whether f lies in span(J0) up to a relative tolerance.
inline bool in_span(const LazyGeometry& g, const Vec& f, double rel_tol = 1e-8) {
    const Vec proj = g.span_basis * (g.span_basis.transpose() * f);
    return (f - proj).norm() <= rel_tol * std::max(1.0, f.norm());
}

inline double lyapunov_u(const LazyGeometry& g, const Vec& f, const Vec& vstar) {
    const double n = norm0(g, f - vstar);
    return n * n;
}

/// ||Pi_w (T^lambda(alpha V_w) - alpha V_w)||_mu with Pi_w the Gamma-projection onto span(DV_w).
inline double projected_td_error(const Model& model, const TdOperator& td, const StationaryMeasure& m, double alpha,
                                 const Vec& w) {
    Vec v;
    Mat j;
    model.evaluate(w, v, j);
    const Vec res = td.residual(alpha * v);
    return mu_norm(MuProjector(j, m).apply(res), m);
}

inline double projected_td_error(const LazyFlow& flow, const Vec& w) {
    return projected_td_error(flow.model(), flow.td(), flow.measure(), flow.alpha(), w);
}

struct RateFit {
    double rate = 0.0;  // decay rate: y ~ exp(intercept - rate t)
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t points = 0;
    bool clean = false;  // r2 >= the requested threshold
};

/// Least squares of log(y) against t after discarding the leading `discard` fraction.
/// Non-positive samples are skipped.
inline RateFit fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& y, double discard = 0.1,
                                    double min_r2 = 0.95) {
    require_size(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(t.size()), "rate fit samples");
    const auto start = static_cast<std::size_t>(std::floor(discard * static_cast<double>(t.size())));
    std::vector<double> xs, ys;
    for (std::size_t i = start; i < t.size(); ++i) {
        if (y[i] > 0.0 && std::isfinite(y[i])) {
            xs.push_back(t[i]);
            ys.push_back(std::log(y[i]));
        }
    }
    RateFit fit;
    fit.points = xs.size();
    if (xs.size() < 3) return fit;
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx <= 0.0) return fit;
    const double slope = sxy / sxx;
    fit.rate = -slope;
    fit.intercept = my - slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    fit.clean = fit.r2 >= min_r2;
    return fit;
}

struct Theorem1Report {
    bool sigma_min_positive = false;
    bool init_within_radius = false;  // ||V_{w(0)}||_0 < M
    bool alpha_above_threshold = false;  // alpha > alpha0
    double sigma_min = 0.0;
    double kappa = 0.0;
    double lipschitz_dv = 0.0;
    double radius_m = 0.0;
    double alpha0 = 0.0;
    double alpha = 0.0;
    double envelope_rate = 0.0;  // (1 - gamma) / (2 kappa^2)
    double envelope_slack = 1.05;
    std::vector<double> times;
    std::vector<double> lyapunov;
    std::vector<double> mu_mse;  // ||alpha V - V*||_mu^2
    bool envelope_holds = false;
    double worst_envelope_ratio = 0.0;  // max_t U(t) / (U(0) exp(-rate t))
    RateFit fit;  // on mu_mse
    RateFit lyapunov_fit;  // informational; U is dominated by the weakest tangent direction
    double displacement = 0.0;
    bool diverged = false;

    [[nodiscard]] bool theoretical_preconditions() const {
        return sigma_min_positive && init_within_radius && alpha_above_threshold;
    }
    /// Empirical decay: envelope respected and a clean exponential fit.
    [[nodiscard]] bool passed() const { return !diverged && envelope_holds && fit.clean; }
};

inline Theorem1Report theorem1_certificate(const LazyGeometry& g, const Mrp& mrp, const LazyFlow& flow,
                                           const Trajectory& run, const Vec& vstar, double slack = 1.05,
                                           double min_r2 = 0.95) {
    if (!g.profile.over_parametrized()) {
        throw NotOverParametrized("rank " + std::to_string(g.profile.rank) + " < d = " + std::to_string(g.profile.states));
    }
    Theorem1Report r;
    r.sigma_min = g.profile.sigma_min;
    r.sigma_min_positive = g.profile.sigma_min > 0.0;
    r.kappa = g.kappa;
    r.lipschitz_dv = g.lipschitz_dv;
    r.radius_m = g.radius_m;
    r.alpha0 = g.alpha0;
    r.alpha = flow.alpha();
    r.init_within_radius = g.v0_norm0 < g.radius_m;
    r.alpha_above_threshold = flow.alpha() > g.alpha0;
    r.envelope_rate = (1.0 - mrp.gamma()) / (2.0 * g.kappa * g.kappa);
    r.envelope_slack = slack;
    r.diverged = run.diverged;
    r.times = run.times;
    r.lyapunov.reserve(run.size());
    r.mu_mse.reserve(run.size());
    for (const auto& w : run.params) {
        const Vec f = flow.function_value(w);
        r.lyapunov.push_back(lyapunov_u(g, f, vstar));
        const double e = mu_norm(f - vstar, flow.measure());
        r.mu_mse.push_back(e * e);
    }
    const double u0 = r.lyapunov.front();
    r.envelope_holds = true;
    for (std::size_t i = 0; i < r.times.size(); ++i) {
        const double bound = u0 * std::exp(-r.envelope_rate * r.times[i]);
        const double ratio = bound > 0.0 ? r.lyapunov[i] / bound : (r.lyapunov[i] > 0.0 ? INFINITY : 0.0);
        r.worst_envelope_ratio = std::max(r.worst_envelope_ratio, ratio);
        if (r.lyapunov[i] > bound * slack) r.envelope_holds = false;
    }
    r.fit = fit_exponential_rate(r.times, r.mu_mse, 0.1, min_r2);
    r.lyapunov_fit = fit_exponential_rate(r.times, r.lyapunov, 0.1, min_r2);
    r.displacement = run.max_displacement();
    return r;
}

struct Theorem2Entry {
    double alpha = 0.0;
    bool diverged = false;
    double final_projected_error = INFINITY;
    bool converged = false;  // final projected TD error <= tolerance
    double error_to_vstar = INFINITY;  // ||alpha V_{w(T)} - V*||_mu
    double excess = INFINITY;
};

struct Theorem2Report {
    double lambda = 0.0;
    double bound_factor = 0.0;  // (1 - lambda gamma) / (1 - gamma)
    double best_tangent_error = 0.0;  // ||Pi0 V* - V*||_mu
    double tolerance = 1e-6;
    double envelope_c = 0.0;
    std::vector<Theorem2Entry> entries;
    bool envelope_holds = false;

    [[nodiscard]] bool all_converged() const {
        return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.converged; });
    }
    [[nodiscard]] bool passed() const { return all_converged() && envelope_holds; }
};

/// One lazy run per alpha; checks stationarity of the final iterate and that the excess
///   excess(alpha) = ||V~*(alpha) - V*||_mu - (1 - lambda gamma)/(1 - gamma) ||Pi0 V* - V*||_mu
/// sits under C / alpha, with C anchored at the smallest alpha of the grid.
struct AlphaRun {
    double alpha = 0.0;
    Trajectory run;
};

inline Theorem2Report theorem2_certificate(const Model& model, const Mrp& mrp, const StationaryMeasure& m, double lambda,
                                           const Vec& w0, const std::vector<AlphaRun>& runs, double tol = 1e-6) {
    Vec v0;
    Mat j0;
    model.evaluate(w0, v0, j0);
    const auto profile = rank_profile(j0);
    if (!profile.under_parametrized()) throw NotUnderParametrized("DV_{w(0)} has full rank " + std::to_string(profile.rank));
    if (v0.lpNorm<Eigen::Infinity>() > 1e-10) throw InitNotZero("||V_{w(0)}||_inf = " + std::to_string(v0.lpNorm<Eigen::Infinity>()));

    const TdOperator td(mrp, lambda);
    const Vec vstar = exact_value(mrp);
    Theorem2Report r;
    r.lambda = lambda;
    r.tolerance = tol;
    r.bound_factor = (1.0 - lambda * mrp.gamma()) / (1.0 - mrp.gamma());
    r.best_tangent_error = mu_norm(projection_pi0(j0, m, vstar) - vstar, m);

    for (const auto& ar : runs) {
        Theorem2Entry e;
        e.alpha = ar.alpha;
        e.diverged = ar.run.diverged;
        if (!e.diverged) {
            const Vec& w = ar.run.final();
            e.final_projected_error = projected_td_error(model, td, m, ar.alpha, w);
            e.converged = e.final_projected_error <= tol;
            e.error_to_vstar = mu_norm(ar.alpha * model.value(w) - vstar, m);
            e.excess = e.error_to_vstar - r.bound_factor * r.best_tangent_error;
        }
        r.entries.push_back(e);
    }
    std::vector<const Theorem2Entry*> ordered;
    for (const auto& e : r.entries) ordered.push_back(&e);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->alpha < b->alpha; });
    r.envelope_holds = !ordered.empty();
    if (r.envelope_holds) {
        r.envelope_c = std::max(0.0, ordered.front()->alpha * ordered.front()->excess);
        for (const auto* e : ordered) {
            if (!std::isfinite(e->excess) || e->excess > r.envelope_c / e->alpha + 1e-9) r.envelope_holds = false;
        }
    }
    return r;
}

struct DisplacementReport {
    std::vector<double> alphas;
    std::vector<double> displacement;
    std::vector<bool> diverged;
    double slope = 0.0;  // d log D / d log alpha
    /// D(alpha_{k+1}) / (D(alpha_k) alpha_k / alpha_{k+1}) for consecutive grid points.
    std::vector<double> ratio_to_prediction;
    double max_slope = -0.8;

    [[nodiscard]] bool passed() const {
        return std::none_of(diverged.begin(), diverged.end(), [](bool b) { return b; }) && slope <= max_slope;
    }
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

/// Runs the lazy dynamics at every alpha of the grid from the same w0 and measures
/// D(alpha) = sup_t ||w(t) - w(0)||_2 and its log-log slope in alpha.
inline DisplacementReport displacement_scaling(const ModelPtr& model, const Mrp& mrp, const StationaryMeasure& m,
                                               const Vec& w0, const std::vector<double>& alpha_grid,
                                               const TrainConfig& base, double max_slope = -0.8) {
    if (alpha_grid.empty()) throw DomainError("empty alpha grid");
    DisplacementReport r;
    r.max_slope = max_slope;
    for (double alpha : alpha_grid) {
        TrainConfig cfg = base;
        cfg.alpha = alpha;
        const LazyFlow flow(model, mrp, m, cfg.lambda, alpha);
        const Trajectory run = run_lazy(flow, w0, cfg);
        r.alphas.push_back(alpha);
        r.displacement.push_back(run.max_displacement());
        r.diverged.push_back(run.diverged);
    }
    for (std::size_t k = 1; k < r.alphas.size(); ++k) {
        const double predicted = r.displacement[k - 1] * r.alphas[k - 1] / r.alphas[k];
        r.ratio_to_prediction.push_back(predicted > 0 ? r.displacement[k] / predicted : INFINITY);
    }
    r.slope = r.alphas.size() > 1 ? loglog_slope(r.alphas, r.displacement) : 0.0;
    return r;
}

/// Per saved time, the operator norm of g0 g_w^{-1} - I = g0 J_w J_w^T - I restricted to span(J0).
inline std::vector<double> metric_drift(const LazyGeometry& g, const Model& model, const Trajectory& run) {
    if (!g.profile.over_parametrized()) throw NotOverParametrized("metric drift needs a surjective DV_{w(0)}");
    const Mat& q = g.span_basis;
    std::vector<double> out;
    out.reserve(run.size());
    for (const auto& w : run.params) {
        const Mat j = model.jacobian(w);
        const auto prof = rank_profile(j);
        if (prof.rank < g.profile.rank) throw RankCollapse("rank of DV_w dropped to " + std::to_string(prof.rank));
        const Mat drift = q.transpose() * (g.g0 * (j * j.transpose()) - Mat::Identity(j.rows(), j.rows())) * q;
        out.push_back(Eigen::JacobiSVD<Mat>(drift).singularValues()(0));
    }
    return out;
}

}  // namespace lazytd
