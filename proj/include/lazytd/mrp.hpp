#pragma once

// Finite Markov reward processes, their stationary measures and the
// lambda-averaged TD operator in closed (resolvent) form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lazytd/linalg.hpp"

namespace lazytd {

/// Finite-state Markov reward process (P, rbar, gamma).
///
/// Rewards are stored as the state-conditional expectation rbar(s) = E_s[r(s,s')].
/// An optional pairwise table r(s,s') is kept for trajectory sampling; when it is
/// present, rbar is derived from it.
class Mrp {
public:
    Mrp(Mat transition, Vec rbar, double gamma) : p_(std::move(transition)), rbar_(std::move(rbar)), gamma_(gamma) {
        validate();
    }

    static Mrp from_reward_table(Mat transition, Mat reward_table, double gamma) {
        require_size(reward_table.rows(), transition.rows(), "reward table rows");
        require_size(reward_table.cols(), transition.cols(), "reward table cols");
        Vec rbar = transition.cwiseProduct(reward_table).rowwise().sum();
        Mrp m(std::move(transition), std::move(rbar), gamma);
        m.reward_table_ = std::move(reward_table);
        return m;
    }

    /// MRP whose exact value function is `target`: rbar = (I - gamma P) target.
    static Mrp with_value(Mat transition, const Vec& target, double gamma) {
        require_size(target.size(), transition.rows(), "target value");
        const auto d = transition.rows();
        Vec rbar = (Mat::Identity(d, d) - gamma * transition) * target;
        return Mrp(std::move(transition), std::move(rbar), gamma);
    }

    [[nodiscard]] Eigen::Index d() const { return p_.rows(); }
    [[nodiscard]] const Mat& P() const { return p_; }
    [[nodiscard]] const Vec& rbar() const { return rbar_; }
    [[nodiscard]] double gamma() const { return gamma_; }
    [[nodiscard]] const std::optional<Mat>& reward_table() const { return reward_table_; }

    /// Reward collected on the transition s -> s_next.
    [[nodiscard]] double reward(Eigen::Index s, Eigen::Index s_next) const {
        return reward_table_ ? (*reward_table_)(s, s_next) : rbar_(s);
    }

private:
    void validate() const {
        if (p_.rows() == 0 || p_.rows() != p_.cols()) throw InvalidMrp("P must be a nonempty square matrix");
        require_size(rbar_.size(), p_.rows(), "rbar");
        if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw InvalidMrp("gamma must lie in (0,1), got " + std::to_string(gamma_));
        if (!p_.allFinite() || !rbar_.allFinite()) throw InvalidMrp("non-finite entries");
        for (Eigen::Index i = 0; i < p_.rows(); ++i) {
            if (p_.row(i).minCoeff() < 0.0) throw InvalidMrp("negative transition probability in row " + std::to_string(i));
            if (std::abs(p_.row(i).sum() - 1.0) > 1e-12) throw InvalidMrp("row " + std::to_string(i) + " does not sum to 1");
        }
    }

    Mat p_;
    Vec rbar_;
    double gamma_;
    std::optional<Mat> reward_table_;
};

enum class CyclicOrientation { Forward, Backward };

/// Lazy cyclic chain: each state stays put or moves one step around the cycle
/// with probability 1/2. Forward moves i -> i+1, Backward moves i -> i-1.
inline Mat cyclic_transition(Eigen::Index d, CyclicOrientation orientation) {
    if (d < 1) throw DomainError("cyclic chain needs d >= 1");
    Mat p = Mat::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const Eigen::Index j = orientation == CyclicOrientation::Forward ? (i + 1) % d : (i + d - 1) % d;
        p(i, i) += 0.5;
        p(i, j) += 0.5;
    }
    return p;
}

/// Dense row-stochastic matrix with strictly positive entries.
inline Mat random_transition(Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Mat p(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) p(i, j) = u(rng);
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

/// Stationary distribution mu of the chain; Gamma = diag(mu).
struct StationaryMeasure {
    Vec mu;

    [[nodiscard]] auto gamma_diag() const { return mu.asDiagonal(); }
    [[nodiscard]] Eigen::Index size() const { return mu.size(); }
};

/// Power iteration mu <- mu P from the uniform distribution.
/// True when every state reaches every other through positive entries of P.
inline bool is_irreducible(const Mat& p) {
    const auto d = p.rows();
    auto reach_all = [&](bool transpose) {
        std::vector<char> seen(static_cast<std::size_t>(d), 0);
        std::vector<Eigen::Index> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            for (Eigen::Index j = 0; j < d; ++j) {
                const double e = transpose ? p(j, i) : p(i, j);
                if (e > 0.0 && !seen[static_cast<std::size_t>(j)]) {
                    seen[static_cast<std::size_t>(j)] = 1;
                    stack.push_back(j);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    return reach_all(false) && reach_all(true);
}

inline StationaryMeasure stationary_measure(const Mrp& mrp, double tol = 1e-12, long max_iters = 1'000'000) {
    const auto d = mrp.d();
    // a reducible chain puts zero mass on its transient states; power iteration
    // only gets that mass down to ~tol, so check the graph directly
    if (!is_irreducible(mrp.P())) throw FullSupportViolation("transition matrix is reducible");
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Constant(d, 1.0 / static_cast<double>(d));
    bool converged = false;
    for (long it = 0; it < max_iters; ++it) {
        Eigen::RowVectorXd next = mu * mrp.P();
        next /= next.sum();
        const double step = (next - mu).lpNorm<1>();
        mu = next;
        if (step <= tol) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NonErgodic("power iteration did not converge in " + std::to_string(max_iters) + " iterations");
    if (mu.minCoeff() <= 1e-14) throw FullSupportViolation("stationary measure has entry " + std::to_string(mu.minCoeff()));
    return StationaryMeasure{mu.transpose()};
}

/// Exact value function V* = (I - gamma P)^{-1} rbar.
inline Vec exact_value(const Mrp& mrp) {
    const auto d = mrp.d();
    const Mat a = Mat::Identity(d, d) - mrp.gamma() * mrp.P();
    Eigen::PartialPivLU<Mat> lu(a);
    Vec v = lu.solve(mrp.rbar());
    const double scale = std::max(1.0, mrp.rbar().lpNorm<Eigen::Infinity>());
    if (!v.allFinite() || (a * v - mrp.rbar()).lpNorm<Eigen::Infinity>() > 1e-10 * scale) {
        throw SolveFailure("(I - gamma P) V = rbar is numerically singular");
    }
    return v;
}

inline double mu_inner(const Vec& a, const Vec& b, const StationaryMeasure& m) {
    require_size(a.size(), m.size(), "mu_inner lhs");
    require_size(b.size(), m.size(), "mu_inner rhs");
    return (a.array() * b.array() * m.mu.array()).sum();
}

inline double mu_norm(const Vec& a, const StationaryMeasure& m) { return std::sqrt(mu_inner(a, a, m)); }

/// Modulus gamma (1 - lambda) / (1 - gamma lambda) of T^lambda in the mu-norm.
inline double contraction_modulus(double gamma, double lambda) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0,1)");
    if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("lambda must lie in [0,1)");
    return gamma * (1.0 - lambda) / (1.0 - gamma * lambda);
}

/// T^lambda V = rbar^lambda + gamma P^lambda V with
///   rbar^lambda = (I - lambda gamma P)^{-1} rbar,
///   P^lambda V  = (1 - lambda) P (I - lambda gamma P)^{-1} V.
/// The resolvent is factorized once per (mrp, lambda).
class TdOperator {
public:
    TdOperator(const Mrp& mrp, double lambda) : p_(mrp.P()), gamma_(mrp.gamma()), lambda_(lambda) {
        if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("lambda must lie in [0,1)");
        const auto d = mrp.d();
        if (lambda_ > 0.0) {
            lu_.compute(Mat::Identity(d, d) - lambda_ * gamma_ * p_);
            rbar_lambda_ = lu_.solve(mrp.rbar());
            if (!rbar_lambda_.allFinite()) throw SolveFailure("resolvent (I - lambda gamma P) is singular");
        } else {
            rbar_lambda_ = mrp.rbar();
        }
    }

    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] double gamma() const { return gamma_; }
    [[nodiscard]] const Vec& rbar_lambda() const { return rbar_lambda_; }

    [[nodiscard]] Vec p_lambda(const Vec& v) const {
        require_size(v.size(), p_.rows(), "TD operator argument");
        if (lambda_ == 0.0) return p_ * v;
        return (1.0 - lambda_) * (p_ * lu_.solve(v));
    }

    [[nodiscard]] Vec apply(const Vec& v) const { return rbar_lambda_ + gamma_ * p_lambda(v); }

    /// T^lambda V - V.
    [[nodiscard]] Vec residual(const Vec& v) const { return apply(v) - v; }

private:
    Mat p_;
    double gamma_;
    double lambda_;
    Eigen::PartialPivLU<Mat> lu_;
    Vec rbar_lambda_;
};

inline Vec td_operator(const Mrp& mrp, double lambda, const Vec& v) { return TdOperator(mrp, lambda).apply(v); }

/// Gamma-orthogonal projector onto the column space of a Jacobian J:
/// Pi W = J (J^T Gamma J)^+ J^T Gamma W, evaluated through the SVD of Gamma^{1/2} J.
class MuProjector {
public:
    MuProjector(const Mat& jacobian, const StationaryMeasure& m) {
        require_size(jacobian.rows(), m.size(), "Jacobian rows");
        sqrt_mu_ = m.mu.array().sqrt().matrix();
        basis_ = column_basis(sqrt_mu_.asDiagonal() * jacobian);
    }

    [[nodiscard]] Eigen::Index rank() const { return basis_.cols(); }

    [[nodiscard]] Vec apply(const Vec& w) const {
        require_size(w.size(), sqrt_mu_.size(), "projection argument");
        const Vec y = sqrt_mu_.cwiseProduct(w);
        return (basis_ * (basis_.transpose() * y)).cwiseQuotient(sqrt_mu_);
    }

private:
    Vec sqrt_mu_;
    Mat basis_;
};

inline Vec projection_pi0(const Mat& jacobian, const StationaryMeasure& m, const Vec& w) {
    return MuProjector(jacobian, m).apply(w);
}

}  // namespace lazytd
