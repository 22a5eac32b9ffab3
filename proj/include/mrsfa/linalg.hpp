// This file is part of the mrsfa library.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <optional>

#include "mrsfa/common.hpp"

namespace mrsfa {

inline constexpr double kDefaultRidge = 1e-8;
inline constexpr double kDefaultEigenFloorRel = 1e-8;

/// Eigenpairs of a symmetric (or generalized symmetric) problem.
/// Eigenvalues ascending; eigenvector columns have unit Euclidean norm.
struct EigenSolution {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;  // one column per eigenvalue
};

/// Affine map x -> projection * (x - mean) that decorrelates its fitting data
/// to unit covariance. Rows of `projection` are ordered by decreasing
/// variance of the corresponding input direction.
struct WhiteningTransform {
    Eigen::VectorXd mean;        // in_dim
    Eigen::MatrixXd projection;  // out_dim x in_dim
    double eigen_floor = 0.0;    // absolute floor applied to the spectrum

    int in_dim() const { return static_cast<int>(projection.cols()); }
    int out_dim() const { return static_cast<int>(projection.rows()); }
};

namespace detail {

inline void check_symmetric(const Eigen::MatrixXd& a, const char* name) {
    if (a.rows() != a.cols()) fail("DimMismatch", std::string(name) + " is not square");
    if (!a.allFinite()) fail("NonFinite", std::string(name) + " has NaN/Inf entries");
    const double scale = a.cwiseAbs().maxCoeff();
    const double tol = 1e-12 * std::max(1.0, scale);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol)
                fail("NonFinite", std::string(name) + " is not symmetric at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
}

// Fix eigenvector signs so repeated solves canonicalize identically: the
// entry of largest magnitude (lowest index on ties) is made positive.
inline void canonicalize_columns(Eigen::MatrixXd& v) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        Eigen::Index imax = 0;
        double amax = -1.0;
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            const double a = std::abs(v(i, j));
            if (a > amax) {
                amax = a;
                imax = i;
            }
        }
        if (v(imax, j) < 0.0) v.col(j) = -v.col(j);
    }
}

}  // namespace detail

/// Dense symmetric eigendecomposition, eigenvalues ascending.
inline EigenSolution sym_eig(const Eigen::MatrixXd& a) {
    detail::check_symmetric(a, "a");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success)
        fail("NoConvergence", "symmetric eigensolver failed after its internal iteration limit");
    EigenSolution s;
    s.eigenvalues = solver.eigenvalues();
    s.eigenvectors = solver.eigenvectors();
    detail::canonicalize_columns(s.eigenvectors);
    return s;
}

/// Generalized symmetric problem a*u = lambda*b'*u with b' = b + ridge*tr(b)/n*I.
/// Solved by Cholesky reduction to a standard symmetric problem; the returned
/// columns are rescaled to unit Euclidean norm (they are B-orthogonal, not
/// orthogonal).
inline EigenSolution gen_sym_eig(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 double ridge = kDefaultRidge) {
    detail::check_symmetric(a, "a");
    detail::check_symmetric(b, "b");
    if (a.rows() != b.rows()) fail("DimMismatch", "a and b differ in dimension");
    const Eigen::Index n = a.rows();

    Eigen::MatrixXd bp = b;
    if (ridge > 0.0) bp.diagonal().array() += ridge * b.trace() / static_cast<double>(n);
    Eigen::LLT<Eigen::MatrixXd> llt(bp);
    if (llt.info() != Eigen::Success)
        fail("SingularB", "b is not positive definite after ridging (ridge=" + std::to_string(ridge) + ")");

    // C = L^-1 * a * L^-T, symmetric by construction up to roundoff.
    const Eigen::MatrixXd l = llt.matrixL();
    Eigen::MatrixXd c = l.triangularView<Eigen::Lower>().solve(a);
    c = l.triangularView<Eigen::Lower>().solve(c.transpose()).eval();
    c = 0.5 * (c + c.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(c);
    if (solver.info() != Eigen::Success)
        fail("NoConvergence", "generalized eigensolver failed in the reduced problem");

    EigenSolution s;
    s.eigenvalues = solver.eigenvalues();
    s.eigenvectors = l.transpose().triangularView<Eigen::Upper>().solve(solver.eigenvectors());
    for (Eigen::Index j = 0; j < n; ++j) s.eigenvectors.col(j).normalize();
    detail::canonicalize_columns(s.eigenvectors);
    return s;
}

/// Fit a PCA whitening transform on column samples (in_dim x n). Keeps the
/// out_dim largest-variance directions, each scaled by 1/sqrt(max(lambda,
/// eigen_floor)). Pass eigen_floor < 0 to use the default relative floor
/// 1e-8 * lambda_max.
inline WhiteningTransform pca_whiten_fit(const Eigen::MatrixXd& data, int out_dim,
                                         double eigen_floor = -1.0) {
    const Eigen::Index n = data.cols();
    const Eigen::Index d = data.rows();
    if (!data.allFinite()) fail("NonFinite", "whitening data has NaN/Inf entries");
    if (out_dim <= 0) fail("DimMismatch", "out_dim must be positive");
    if (n <= out_dim) fail("TooFewSamples", "need more samples than output dimensions");

    WhiteningTransform t;
    t.mean = data.rowwise().mean();
    Eigen::MatrixXd centered = data.colwise() - t.mean;
    Eigen::MatrixXd cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
    EigenSolution es = sym_eig(cov);

    const double lambda_max = std::max(0.0, es.eigenvalues(d - 1));
    if (eigen_floor < 0.0) eigen_floor = kDefaultEigenFloorRel * lambda_max;
    t.eigen_floor = eigen_floor;

    int usable = 0;
    for (Eigen::Index i = 0; i < d; ++i)
        if (es.eigenvalues(i) > eigen_floor) ++usable;
    if (usable < out_dim) {
        warn("RankDeficient: only " + std::to_string(usable) + " directions exceed the eigen floor; clamping out_dim from " +
             std::to_string(out_dim));
        out_dim = std::max(1, usable);
    }

    t.projection.resize(out_dim, d);
    for (int i = 0; i < out_dim; ++i) {
        const Eigen::Index src = d - 1 - i;  // descending variance
        const double lambda = std::max(es.eigenvalues(src), eigen_floor);
        t.projection.row(i) = es.eigenvectors.col(src).transpose() / std::sqrt(lambda);
    }
    return t;
}

inline Eigen::VectorXd pca_whiten_apply(const WhiteningTransform& t, const Eigen::VectorXd& x) {
    if (x.size() != t.mean.size()) fail("DimMismatch", "whitening input has wrong dimension");
    return t.projection * (x - t.mean);
}

/// Column-batch version of pca_whiten_apply.
inline Eigen::MatrixXd pca_whiten_apply_cols(const WhiteningTransform& t, const Eigen::MatrixXd& x) {
    if (x.rows() != t.mean.size()) fail("DimMismatch", "whitening input has wrong dimension");
    return t.projection * (x.colwise() - t.mean);
}

}  // namespace mrsfa
