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
#include <Eigen/Sparse>
#include <limits>

#include "mrsfa/cubes.hpp"
#include "mrsfa/linalg.hpp"

namespace mrsfa {

/// All temporal transitions of a collection of whitened sequences: column i
/// holds the initial state x_i of tuple i and the variation x_i - x_{i+1}.
/// No tuple crosses a sequence boundary.
struct TransitionSet {
    Eigen::MatrixXd initial_states;  // m x t'
    Eigen::MatrixXd variations;      // m x t'

    int dim() const { return static_cast<int>(initial_states.rows()); }
    int count() const { return static_cast<int>(initial_states.cols()); }
};

/// Symmetric kNN-union similarity graph over transition initial states.
/// S_ij = exp(-||x_i - x_j||^2 / r) when i and j are mutually or one-sidedly
/// k-nearest, 0 otherwise; the diagonal is zero.
struct SimilarityGraph {
    Eigen::SparseMatrix<double> similarity;  // t' x t', symmetric
    Eigen::VectorXd degree;                  // D_ii = sum_j S_ij
    int k = 0;
    double r = 0.0;

    int dim() const { return static_cast<int>(similarity.rows()); }
};

/// Slow projection learned by SFA or MR-SFA: eigenvalues ascending, columns
/// of U unit Euclidean norm (slowest/most regular direction first).
struct SlowProjection {
    Eigen::MatrixXd U;           // m x q_raw
    Eigen::VectorXd eigenvalues;  // ascending, length q_raw
    int n_dropped = 0;

    int dim() const { return static_cast<int>(U.rows()); }
    int count() const { return static_cast<int>(U.cols()); }
};

/// Whiten every sequence and collect all within-sequence transitions.
/// t' = sum over sequences of (l_n - 1).
inline TransitionSet build_transitions(const std::vector<CubeSequence>& sequences,
                                       const WhiteningTransform& whitener) {
    std::size_t total = 0;
    for (const auto& s : sequences) {
        if (s.states.cols() < 2) fail("DimMismatch", "sequence has fewer than 2 states");
        if (s.states.rows() != whitener.in_dim()) fail("DimMismatch", "state dimension does not match whitener");
        total += static_cast<std::size_t>(s.states.cols()) - 1;
    }
    TransitionSet ts;
    const int m = whitener.out_dim();
    ts.initial_states.resize(m, static_cast<Eigen::Index>(total));
    ts.variations.resize(m, static_cast<Eigen::Index>(total));
    Eigen::Index col = 0;
    for (const auto& s : sequences) {
        const Eigen::MatrixXd w = pca_whiten_apply_cols(whitener, s.states);
        for (Eigen::Index i = 0; i + 1 < w.cols(); ++i, ++col) {
            ts.initial_states.col(col) = w.col(i);
            ts.variations.col(col) = w.col(i) - w.col(i + 1);
        }
    }
    return ts;
}

/// Budgeted variant: materializes only a seeded uniform subsample of the
/// tuples (without replacement, original order preserved). Keeps the
/// all-pairs neighbor search tractable on large corpora.
inline TransitionSet build_transitions_budgeted(const std::vector<CubeSequence>& sequences,
                                                const WhiteningTransform& whitener,
                                                std::size_t budget, std::uint64_t seed) {
    std::size_t total = 0;
    for (const auto& s : sequences) {
        if (s.states.cols() < 2) fail("DimMismatch", "sequence has fewer than 2 states");
        total += static_cast<std::size_t>(s.states.cols()) - 1;
    }
    if (budget == 0 || budget >= total) return build_transitions(sequences, whitener);

    Rng rng(seed);
    const std::vector<std::size_t> keep = rng.sample_without_replacement(total, budget);

    TransitionSet ts;
    const int m = whitener.out_dim();
    ts.initial_states.resize(m, static_cast<Eigen::Index>(budget));
    ts.variations.resize(m, static_cast<Eigen::Index>(budget));
    std::size_t tuple_base = 0, next = 0;
    for (const auto& s : sequences) {
        const std::size_t n_tuples = static_cast<std::size_t>(s.states.cols()) - 1;
        // whiten only sequences that contribute at least one kept tuple
        if (next < keep.size() && keep[next] < tuple_base + n_tuples) {
            const Eigen::MatrixXd w = pca_whiten_apply_cols(whitener, s.states);
            while (next < keep.size() && keep[next] < tuple_base + n_tuples) {
                const Eigen::Index i = static_cast<Eigen::Index>(keep[next] - tuple_base);
                ts.initial_states.col(static_cast<Eigen::Index>(next)) = w.col(i);
                ts.variations.col(static_cast<Eigen::Index>(next)) = w.col(i) - w.col(i + 1);
                ++next;
            }
        }
        tuple_base += n_tuples;
    }
    return ts;
}

/// Exact (non-approximate) kNN-union similarity graph. Distances are computed
/// blockwise with matrix products; ties broken by lower index, self excluded.
inline SimilarityGraph knn_similarity(const Eigen::MatrixXd& states, int k, double r,
                                      unsigned threads = 1) {
    const Eigen::Index n = states.cols();
    if (k <= 0) fail("TooFewSamples", "k must be positive");
    if (n <= k) fail("TooFewSamples", "need more states than neighbors");
    if (!(r > 0.0)) fail("TooFewSamples", "kernel width r must be positive");

    const Eigen::VectorXd sq_norms = states.colwise().squaredNorm();
    std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(n));

    const std::size_t block = 512;
    parallel_chunks(static_cast<std::size_t>(n), block, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        const Eigen::Index b0 = static_cast<Eigen::Index>(begin);
        const Eigen::Index bn = static_cast<Eigen::Index>(end - begin);
        // dist^2(i, j) = |x_i|^2 + |x_j|^2 - 2 x_i.x_j
        Eigen::MatrixXd dots = states.middleCols(b0, bn).transpose() * states;  // bn x n
        std::vector<std::pair<double, int>> row(static_cast<std::size_t>(n));
        for (Eigen::Index bi = 0; bi < bn; ++bi) {
            const Eigen::Index i = b0 + bi;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double d2 = std::max(0.0, sq_norms(i) + sq_norms(j) - 2.0 * dots(bi, j));
                row[static_cast<std::size_t>(j)] = {d2, static_cast<int>(j)};
            }
            row[static_cast<std::size_t>(i)].first = std::numeric_limits<double>::infinity();  // self
            std::partial_sort(row.begin(), row.begin() + k, row.end());
            auto& out = neighbors[static_cast<std::size_t>(i)];
            out.resize(static_cast<std::size_t>(k));
            for (int s = 0; s < k; ++s) out[static_cast<std::size_t>(s)] = row[static_cast<std::size_t>(s)].second;
        }
    });

    // kNN union: edge (i, j) present if either lists the other.
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < static_cast<int>(n); ++i)
        for (int j : neighbors[static_cast<std::size_t>(i)])
            edges.emplace_back(std::min(i, j), std::max(i, j));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(edges.size() * 2);
    for (const auto& [i, j] : edges) {
        // recompute the distance directly: exact and free of cancellation
        const double d2 = (states.col(i) - states.col(j)).squaredNorm();
        const double s = std::exp(-d2 / r);
        trips.emplace_back(i, j, s);
        trips.emplace_back(j, i, s);
    }

    SimilarityGraph g;
    g.k = k;
    g.r = r;
    g.similarity.resize(n, n);
    g.similarity.setFromTriplets(trips.begin(), trips.end());
    g.degree = g.similarity * Eigen::VectorXd::Ones(n);
    return g;
}

namespace detail {

inline void check_nonzero_variations(const Eigen::MatrixXd& variations) {
    if (variations.cwiseAbs().maxCoeff() == 0.0)
        fail("AllZeroVariations", "every temporal variation is zero; nothing to learn");
}

}  // namespace detail

/// Manifold-regularized SFA: with L = I + lambda*(D - S) solve the
/// generalized problem (Xdot L Xdot^T) u = lambda_i (Xdot D Xdot^T) u,
/// eigenvalues ascending. q_raw > 0 keeps only the leading q_raw columns.
inline SlowProjection fit_mrsfa(const TransitionSet& transitions, const SimilarityGraph& graph,
                                double lambda, double ridge = kDefaultRidge, int q_raw = 0) {
    if (graph.dim() != transitions.count()) fail("DimMismatch", "graph size does not match transition count");
    if (lambda < 0.0) fail("DimMismatch", "lambda must be nonnegative");
    detail::check_nonzero_variations(transitions.variations);

    const Eigen::MatrixXd& xd = transitions.variations;
    const Eigen::MatrixXd xdt = xd.transpose();

    Eigen::MatrixXd b = xd * graph.degree.asDiagonal() * xdt;  // Xdot D Xdot^T
    Eigen::MatrixXd a = xd * xdt;                              // L = I contribution
    if (lambda > 0.0) {
        a += lambda * (b - xd * (graph.similarity * xdt));
    }
    a = 0.5 * (a + a.transpose()).eval();
    b = 0.5 * (b + b.transpose()).eval();

    EigenSolution es = gen_sym_eig(a, b, ridge);
    SlowProjection p;
    const int keep = (q_raw > 0) ? std::min<int>(q_raw, static_cast<int>(es.eigenvalues.size()))
                                 : static_cast<int>(es.eigenvalues.size());
    p.U = es.eigenvectors.leftCols(keep);
    p.eigenvalues = es.eigenvalues.head(keep);
    return p;
}

/// Standard SFA baseline: eigendecomposition of Xdot Xdot^T, ascending,
/// keeping the q slowest directions.
inline SlowProjection fit_sfa(const TransitionSet& transitions, int q) {
    detail::check_nonzero_variations(transitions.variations);
    const int m = transitions.dim();
    if (transitions.count() < m) warn("fewer transitions than state dimensions; SFA estimate will be noisy");
    Eigen::MatrixXd c = transitions.variations * transitions.variations.transpose();
    c = 0.5 * (c + c.transpose()).eval();
    EigenSolution es = sym_eig(c);
    SlowProjection p;
    const int keep = std::min(q, m);
    p.U = es.eigenvectors.leftCols(keep);
    p.eigenvalues = es.eigenvalues.head(keep);
    return p;
}

/// Abandon the n_drop leading (smallest-eigenvalue, noisiest) solutions.
inline SlowProjection drop_noisy(const SlowProjection& p, int n_drop) {
    if (n_drop < 0) fail("DimMismatch", "n_drop must be nonnegative");
    if (n_drop >= p.count()) fail("AllDropped", "would drop every column");
    if (n_drop == 0) return p;
    SlowProjection out;
    out.U = p.U.rightCols(p.count() - n_drop);
    out.eigenvalues = p.eigenvalues.tail(p.count() - n_drop);
    out.n_dropped = p.n_dropped + n_drop;
    return out;
}

}  // namespace mrsfa
