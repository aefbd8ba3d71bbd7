#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <string>

#include "finsent/errors.hpp"

namespace finsent::linalg {

struct LeastSquares {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd xtx_inverse; // (X'X)^-1, reconstructed from the SVD
    Eigen::VectorXd singular_values;
    Eigen::Index rank = 0;
};

inline constexpr double kRankTolerance = 1e-10;

/// Least squares via singular value decomposition. Rank is the count of
/// singular values above `rank_rtol` times the largest; a short rank
/// raises RankDeficientError rather than returning a pseudo-inverse fit.
inline LeastSquares solve_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        double rank_rtol = kRankTolerance) {
    if (X.rows() != y.size()) {
        throw std::invalid_argument("solve_least_squares: X has " + std::to_string(X.rows()) +
                                    " rows but y has " + std::to_string(y.size()));
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? sv(0) * rank_rtol : 0.0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff && sv(i) > 0.0) ++rank;
    }
    if (rank < X.cols()) {
        throw RankDeficientError("design matrix rank " + std::to_string(rank) + " below column count " +
                                 std::to_string(X.cols()));
    }

    LeastSquares out;
    out.singular_values = sv;
    out.rank = rank;
    out.coefficients = svd.solve(y);
    out.residuals = y - X * out.coefficients;
    const Eigen::MatrixXd& V = svd.matrixV();
    out.xtx_inverse = V * sv.array().square().inverse().matrix().asDiagonal() * V.transpose();
    return out;
}

} // namespace finsent::linalg
