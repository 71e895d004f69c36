#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "lazytd/errors.hpp"

namespace lazytd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Relative singular-value cutoff: sigma <= kRankCutoff * sigma_max counts as zero.
inline constexpr double kRankCutoff = 1e-10;

inline void require_size(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want) {
        throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(want) +
                                ", got " + std::to_string(got));
    }
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
inline Mat pseudo_inverse(const Mat& a, double rel_cutoff = kRankCutoff) {
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    Vec inv = Vec::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel_cutoff * smax && s(i) > 0.0) inv(i) = 1.0 / s(i);
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Numerical rank at the library cutoff.
inline Eigen::Index numerical_rank(const Vec& singular_values, double rel_cutoff = kRankCutoff) {
    if (singular_values.size() == 0) return 0;
    const double smax = singular_values(0);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
        if (singular_values(i) > rel_cutoff * smax && singular_values(i) > 0.0) ++r;
    }
    return r;
}

/// Orthonormal basis (Euclidean) of the column space of `a`.
inline Mat column_basis(const Mat& a, double rel_cutoff = kRankCutoff) {
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU);
    const auto r = numerical_rank(svd.singularValues(), rel_cutoff);
    return svd.matrixU().leftCols(r);
}

}  // namespace lazytd
