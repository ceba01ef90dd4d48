#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "menupred/errors.hpp"
#include "menupred/linalg.hpp"

namespace menupred {

/// Orthonormal top-k projection of D-dimensional points. `components` holds
/// k row vectors of length D, ordered by descending eigenvalue of the
/// centered covariance. Sign convention: the first entry of each component
/// with magnitude above 1e-12 is positive.
struct PcaProjection {
    Vec mean;        // length D
    Mat components;  // k x D
    int k = 0;

    int dim() const { return static_cast<int>(mean.size()); }
};

namespace detail {
inline void fix_component_sign(Eigen::Ref<Eigen::RowVectorXd> v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-12) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}
}  // namespace detail

/// Fits the projection on `samples` (one row per sample). Eigendecomposition
/// of the explicit covariance matrix; D stays small here so this is cheap.
inline PcaProjection pca_fit(const Mat& samples, int k) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < 2) throw InsufficientDataError("pca_fit: need at least 2 samples");
    if (k < 1 || k > d) {
        throw ShapeError("pca_fit: k=" + std::to_string(k) + " out of range for D=" +
                         std::to_string(d));
    }

    PcaProjection proj;
    proj.k = k;
    proj.mean = samples.colwise().mean().transpose();

    Mat centered = samples.rowwise() - proj.mean.transpose();
    Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("pca_fit: eigensolver failed");

    // Solver orders eigenvalues ascending; take the top k from the back.
    proj.components = Mat(k, d);
    for (int i = 0; i < k; ++i) {
        proj.components.row(i) = solver.eigenvectors().col(d - 1 - i).transpose();
        detail::fix_component_sign(proj.components.row(i));
    }
    return proj;
}

/// components * (x - mean).
inline Vec pca_transform(const PcaProjection& proj, const Vec& x) {
    if (x.size() != proj.mean.size()) {
        throw ShapeError("pca_transform: input length " + std::to_string(x.size()) +
                         " != D=" + std::to_string(proj.mean.size()));
    }
    return proj.components * (x - proj.mean);
}

}  // namespace menupred
