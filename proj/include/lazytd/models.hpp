#pragma once

// Differentiable value-function models V_w with analytic Jacobians.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>

#include "lazytd/linalg.hpp"

namespace lazytd {

/// A parametric value function w -> V_w in R^d together with its Jacobian DV_w (d x p).
class Model {
public:
    virtual ~Model() = default;

    [[nodiscard]] virtual Eigen::Index num_params() const = 0;
    [[nodiscard]] virtual Eigen::Index num_states() const = 0;
    [[nodiscard]] virtual std::string kind() const = 0;

    [[nodiscard]] virtual Vec value(const Vec& w) const = 0;
    [[nodiscard]] virtual Mat jacobian(const Vec& w) const = 0;

    /// Value and Jacobian at the same point. Models override this when the two share work.
    virtual void evaluate(const Vec& w, Vec& value_out, Mat& jacobian_out) const {
        value_out = value(w);
        jacobian_out = jacobian(w);
    }

protected:
    void check_params(const Vec& w) const { require_size(w.size(), num_params(), "parameter vector"); }
};

using ModelPtr = std::shared_ptr<const Model>;

/// V_w = Phi w.
class LinearModel final : public Model {
public:
    explicit LinearModel(Mat features) : phi_(std::move(features)) {}

    [[nodiscard]] Eigen::Index num_params() const override { return phi_.cols(); }
    [[nodiscard]] Eigen::Index num_states() const override { return phi_.rows(); }
    [[nodiscard]] std::string kind() const override { return "linear"; }
    [[nodiscard]] const Mat& features() const { return phi_; }

    [[nodiscard]] Vec value(const Vec& w) const override {
        check_params(w);
        return phi_ * w;
    }
    [[nodiscard]] Mat jacobian(const Vec& w) const override {
        check_params(w);
        return phi_;
    }

private:
    Mat phi_;
};

/// One-parameter spiral manifold in R^3:
///   V_theta = exp(eps theta) (a cos(lam theta) - b sin(lam theta)) + shift.
class SpiralModel final : public Model {
public:
    struct Params {
        Vec a = (Vec(3) << 10.0, -7.0, -3.0).finished();
        Vec b = (Vec(3) << 2.3094, -9.815, 7.5056).finished();
        double eps_hat = 0.01;
        double lambda_hat = 0.866;
        Vec shift = (Vec(3) << -10.0, 7.0, 3.0).finished();
    };

    SpiralModel() : SpiralModel(Params{}) {}
    explicit SpiralModel(Params p) : p_(std::move(p)) {
        require_size(p_.a.size(), 3, "spiral a");
        require_size(p_.b.size(), 3, "spiral b");
        require_size(p_.shift.size(), 3, "spiral shift");
    }

    [[nodiscard]] Eigen::Index num_params() const override { return 1; }
    [[nodiscard]] Eigen::Index num_states() const override { return 3; }
    [[nodiscard]] std::string kind() const override { return "spiral"; }
    [[nodiscard]] const Params& params() const { return p_; }

    [[nodiscard]] Vec spiral_value(double theta) const {
        const double e = std::exp(p_.eps_hat * theta);
        const double c = std::cos(p_.lambda_hat * theta);
        const double s = std::sin(p_.lambda_hat * theta);
        return e * (p_.a * c - p_.b * s) + p_.shift;
    }

    [[nodiscard]] Vec spiral_jacobian(double theta) const {
        const double e = std::exp(p_.eps_hat * theta);
        const double c = std::cos(p_.lambda_hat * theta);
        const double s = std::sin(p_.lambda_hat * theta);
        return e * ((p_.eps_hat * p_.a - p_.lambda_hat * p_.b) * c - (p_.eps_hat * p_.b + p_.lambda_hat * p_.a) * s);
    }

    [[nodiscard]] Vec value(const Vec& w) const override {
        check_params(w);
        return spiral_value(w(0));
    }
    [[nodiscard]] Mat jacobian(const Vec& w) const override {
        check_params(w);
        return spiral_jacobian(w(0));
    }

private:
    Params p_;
};

/// d equally spaced scalar states on [lo, hi], endpoints included (d x 1).
inline Mat grid_states(Eigen::Index d, double lo = -1.0, double hi = 1.0) {
    if (d < 1) throw DomainError("grid needs at least one point");
    Mat s(d, 1);
    for (Eigen::Index i = 0; i < d; ++i) {
        s(i, 0) = d == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(d - 1);
    }
    return s;
}

/// Single-hidden-layer ReLU network V_w(s) = (1/N) sum_i a_i max(0, b_i . s - c_i).
///
/// Parameter layout: [a_1..a_N, b_1 (m entries) .. b_N, c_1..c_N], p = N (m + 2).
/// The derivative at a kink (b_i . s = c_i) is taken to be 0.
class ReluNet final : public Model {
public:
    ReluNet(Eigen::Index width, Mat states) : n_(width), s_(std::move(states)) {
        if (n_ < 1) throw DomainError("ReLU width must be positive");
        if (s_.rows() < 1 || s_.cols() < 1) throw DomainError("ReLU states must be a nonempty d x m matrix");
    }

    [[nodiscard]] Eigen::Index width() const { return n_; }
    [[nodiscard]] Eigen::Index input_dim() const { return s_.cols(); }
    [[nodiscard]] const Mat& states() const { return s_; }
    [[nodiscard]] Eigen::Index num_params() const override { return n_ * (input_dim() + 2); }
    [[nodiscard]] Eigen::Index num_states() const override { return s_.rows(); }
    [[nodiscard]] std::string kind() const override { return "relu"; }

    [[nodiscard]] auto out_weights(const Vec& w) const { return w.segment(0, n_); }
    /// N x m, row i = b_i.
    [[nodiscard]] Mat in_weights(const Vec& w) const {
        const auto m = input_dim();
        Mat b(n_, m);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index k = 0; k < m; ++k) b(i, k) = w(n_ + i * m + k);
        return b;
    }
    [[nodiscard]] auto biases(const Vec& w) const { return w.segment(n_ * (input_dim() + 1), n_); }

    /// Pre-activations b_i . s - c_i, d x N.
    [[nodiscard]] Mat preactivations(const Vec& w) const {
        check_params(w);
        const Mat b = in_weights(w);
        return (s_ * b.transpose()).rowwise() - biases(w).transpose();
    }

    /// Smallest |b_i . s - c_i| over all units and states.
    [[nodiscard]] double min_kink_distance(const Vec& w) const { return preactivations(w).cwiseAbs().minCoeff(); }

    [[nodiscard]] Vec value(const Vec& w) const override {
        const Mat pre = preactivations(w);
        return pre.cwiseMax(0.0) * out_weights(w) / static_cast<double>(n_);
    }

    [[nodiscard]] Mat jacobian(const Vec& w) const override {
        Vec v;
        Mat j;
        evaluate(w, v, j);
        return j;
    }

    void evaluate(const Vec& w, Vec& value_out, Mat& jac) const override {
        const Mat pre = preactivations(w);
        const auto a = out_weights(w);
        const auto d = num_states();
        const auto m = input_dim();
        const double inv_n = 1.0 / static_cast<double>(n_);
        value_out = pre.cwiseMax(0.0) * a * inv_n;
        jac.resize(d, num_params());
        jac.leftCols(n_) = pre.cwiseMax(0.0) * inv_n;
        for (Eigen::Index i = 0; i < n_; ++i) {
            for (Eigen::Index s = 0; s < d; ++s) {
                const double gate = pre(s, i) > 0.0 ? a(i) * inv_n : 0.0;
                for (Eigen::Index k = 0; k < m; ++k) jac(s, n_ + i * m + k) = gate * s_(s, k);
                jac(s, n_ * (m + 1) + i) = -gate;
            }
        }
    }

private:
    Eigen::Index n_;
    Mat s_;
};

/// Doubled initialization: units N/2+1..N copy (b_i, c_i) of units 1..N/2 and negate a_i,
/// so that V_{w(0)} vanishes identically. a ~ N(0,1), (b_i)_j ~ N(0, sd = 1/sqrt(m)), c ~ N(0,1).
inline Vec relu_init_doubled(Eigen::Index width, Eigen::Index input_dim, std::uint64_t seed) {
    if (width < 2 || width % 2 != 0) throw OddWidth("doubled initialization needs an even width, got " + std::to_string(width));
    if (input_dim < 1) throw DomainError("input dimension must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double b_sd = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const auto half = width / 2;
    const auto m = input_dim;
    Vec w(width * (m + 2));
    for (Eigen::Index i = 0; i < half; ++i) {
        const double a = unit(rng);
        w(i) = a;
        w(i + half) = -a;
        for (Eigen::Index k = 0; k < m; ++k) {
            const double b = b_sd * unit(rng);
            w(width + i * m + k) = b;
            w(width + (i + half) * m + k) = b;
        }
        const double c = unit(rng);
        w(width * (m + 1) + i) = c;
        w(width * (m + 1) + i + half) = c;
    }
    return w;
}

/// Affine model V_{w0} + DV_{w0} (w - w0), the linearization of `base` at w0.
class TangentModel final : public Model {
public:
    TangentModel(ModelPtr base, Vec anchor) : base_(std::move(base)), w0_(std::move(anchor)) {
        require_size(w0_.size(), base_->num_params(), "tangent anchor");
        base_->evaluate(w0_, v0_, j0_);
    }

    /// Tangent model built directly from (V0, J0).
    TangentModel(Vec v0, Mat j0, Vec anchor) : w0_(std::move(anchor)), v0_(std::move(v0)), j0_(std::move(j0)) {
        require_size(v0_.size(), j0_.rows(), "tangent value");
        require_size(w0_.size(), j0_.cols(), "tangent anchor");
    }

    [[nodiscard]] Eigen::Index num_params() const override { return j0_.cols(); }
    [[nodiscard]] Eigen::Index num_states() const override { return j0_.rows(); }
    [[nodiscard]] std::string kind() const override { return "tangent-of"; }
    [[nodiscard]] const ModelPtr& base() const { return base_; }
    [[nodiscard]] const Vec& anchor() const { return w0_; }
    [[nodiscard]] const Vec& anchor_value() const { return v0_; }
    [[nodiscard]] const Mat& anchor_jacobian() const { return j0_; }

    [[nodiscard]] Vec value(const Vec& w) const override {
        check_params(w);
        return v0_ + j0_ * (w - w0_);
    }
    [[nodiscard]] Mat jacobian(const Vec& w) const override {
        check_params(w);
        return j0_;
    }

private:
    ModelPtr base_;
    Vec w0_;
    Vec v0_;
    Mat j0_;
};

struct RankProfile {
    Vec singular_values;  // descending
    Eigen::Index rank = 0;
    double sigma_min = 0.0;  // smallest singular value above the cutoff
    double sigma_max = 0.0;
    Eigen::Index states = 0;

    [[nodiscard]] bool over_parametrized() const { return rank == states; }
    [[nodiscard]] bool under_parametrized() const { return rank < states; }
};

inline RankProfile rank_profile(const Mat& jacobian) {
    Eigen::JacobiSVD<Mat> svd(jacobian);
    RankProfile r;
    r.singular_values = svd.singularValues();
    r.rank = numerical_rank(r.singular_values);
    r.sigma_max = r.singular_values.size() ? r.singular_values(0) : 0.0;
    r.sigma_min = r.rank > 0 ? r.singular_values(r.rank - 1) : 0.0;
    r.states = jacobian.rows();
    return r;
}

inline RankProfile model_rank_profile(const Model& model, const Vec& w) { return rank_profile(model.jacobian(w)); }

}  // namespace lazytd
