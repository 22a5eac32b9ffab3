#include <catch2/catch_amalgamated.hpp>

#include "mrsfa/sfa.hpp"
#include "oracles.hpp"

using namespace mrsfa;

namespace {

WhiteningTransform identity_whitener(int dim) {
    WhiteningTransform t;
    t.mean = Eigen::VectorXd::Zero(dim);
    t.projection = Eigen::MatrixXd::Identity(dim, dim);
    return t;
}

CubeSequence sequence_from(const Eigen::MatrixXd& states) {
    CubeSequence s;
    s.states = states;
    return s;
}

Eigen::MatrixXd random_states(Rng& rng, int m, int n) {
    Eigen::MatrixXd x(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) x(i, j) = rng.gaussian();
    return x;
}

// Brute-force kNN-union similarity: full distance table, stable sort,
// union symmetrization. Entirely independent of the library path.
Eigen::MatrixXd brute_force_similarity(const Eigen::MatrixXd& states, int k, double r) {
    const int n = static_cast<int>(states.cols());
    Eigen::MatrixXd d2(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d2(i, j) = (states.col(i) - states.col(j)).squaredNorm();
    std::vector<std::vector<int>> knn(n);
    for (int i = 0; i < n; ++i) {
        std::vector<int> order;
        for (int j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (d2(i, a) != d2(i, b)) return d2(i, a) < d2(i, b);
            return a < b;
        });
        order.resize(static_cast<std::size_t>(k));
        knn[static_cast<std::size_t>(i)] = order;
    }
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j : knn[static_cast<std::size_t>(i)]) {
            const double v = std::exp(-d2(i, j) / r);
            s(i, j) = v;
            s(j, i) = v;
        }
    return s;
}

}  // namespace

TEST_CASE("build_transitions counts and boundary rule", "[sfa]") {
    Rng rng(1);
    auto w = identity_whitener(4);
    std::vector<CubeSequence> seqs = {sequence_from(random_states(rng, 4, 10))};
    TransitionSet ts = build_transitions(seqs, w);
    REQUIRE(ts.count() == 9);

    seqs.push_back(sequence_from(random_states(rng, 4, 10)));
    ts = build_transitions(seqs, w);
    REQUIRE(ts.count() == 18);

    // no cross-boundary transition: tuple 8 must involve only sequence 0
    for (int i = 0; i < 9; ++i) {
        Eigen::VectorXd expect = seqs[0].states.col(i) - seqs[0].states.col(i + 1);
        REQUIRE((ts.variations.col(i) - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    REQUIRE((ts.variations.col(9) - (seqs[1].states.col(0) - seqs[1].states.col(1))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant sequence yields zero variations", "[sfa]") {
    auto w = identity_whitener(3);
    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 5, 2.5);
    TransitionSet ts = build_transitions({sequence_from(c)}, w);
    REQUIRE(ts.variations.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_THROWS_AS(fit_sfa(ts, 2), Error);
}

TEST_CASE("budgeted transitions subsample deterministically", "[sfa]") {
    Rng rng(2);
    auto w = identity_whitener(3);
    std::vector<CubeSequence> seqs;
    for (int i = 0; i < 6; ++i) seqs.push_back(sequence_from(random_states(rng, 3, 8)));
    TransitionSet a = build_transitions_budgeted(seqs, w, 20, 11);
    TransitionSet b = build_transitions_budgeted(seqs, w, 20, 11);
    REQUIRE(a.count() == 20);
    REQUIRE(a.initial_states == b.initial_states);
    REQUIRE(a.variations == b.variations);

    TransitionSet full = build_transitions_budgeted(seqs, w, 1000, 11);
    REQUIRE(full.count() == 42);
}

TEST_CASE("knn_similarity matches the brute-force oracle exactly", "[sfa]") {
    Rng rng(3);
    Eigen::MatrixXd states = random_states(rng, 5, 10);
    SimilarityGraph g = knn_similarity(states, 3, 2.0);
    Eigen::MatrixXd ref = brute_force_similarity(states, 3, 2.0);
    Eigen::MatrixXd got = Eigen::MatrixXd(g.similarity);
    REQUIRE((got - ref).cwiseAbs().maxCoeff() == 0.0);

    // structural checks
    REQUIRE((got - got.transpose()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(got.diagonal().cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(got.minCoeff() >= 0.0);
    REQUIRE(got.maxCoeff() <= 1.0);
    for (int i = 0; i < 10; ++i) {
        int nnz = 0;
        for (int j = 0; j < 10; ++j)
            if (got(i, j) != 0.0) ++nnz;
        REQUIRE(nnz >= 3);
        REQUIRE(g.degree(i) == Catch::Approx(got.row(i).sum()).margin(1e-15));
    }
}

TEST_CASE("coincident states and exact kernel values", "[sfa]") {
    Eigen::MatrixXd states(2, 5);
    states << 0, 0, 1, 3, 9,
              0, 0, 0, 0, 0;
    const double r = 1.0;
    SimilarityGraph g = knn_similarity(states, 2, r);
    Eigen::MatrixXd s = Eigen::MatrixXd(g.similarity);
    REQUIRE(s(0, 1) == Catch::Approx(1.0));                  // zero distance
    REQUIRE(s(1, 2) == Catch::Approx(std::exp(-1.0)));       // ||x1-x2||^2 = r -> e^-1
    REQUIRE(s(1, 2) == Catch::Approx(0.3679).margin(5e-5));
}

TEST_CASE("knn threading does not change the graph", "[sfa]") {
    Rng rng(17);
    Eigen::MatrixXd states = random_states(rng, 8, 600);
    SimilarityGraph g1 = knn_similarity(states, 5, 4.0, 1);
    SimilarityGraph g4 = knn_similarity(states, 5, 4.0, 4);
    REQUIRE((Eigen::MatrixXd(g1.similarity) - Eigen::MatrixXd(g4.similarity)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit_mrsfa matches an independent generalized solve", "[sfa]") {
    Rng rng(5);
    auto w = identity_whitener(4);
    std::vector<CubeSequence> seqs;
    for (int i = 0; i < 4; ++i) seqs.push_back(sequence_from(random_states(rng, 4, 6)));
    TransitionSet ts = build_transitions(seqs, w);
    REQUIRE(ts.count() == 20);
    SimilarityGraph g = knn_similarity(ts.initial_states, 3, 2.0);

    const double lambda = 0.1;
    SlowProjection p = fit_mrsfa(ts, g, lambda, 0.0);

    // reconstruct A and B naively
    const int n = ts.count();
    Eigen::MatrixXd s = Eigen::MatrixXd(g.similarity);
    Eigen::MatrixXd d = g.degree.asDiagonal();
    Eigen::MatrixXd l = Eigen::MatrixXd::Identity(n, n) + lambda * (d - s);
    Eigen::MatrixXd a = ts.variations * l * ts.variations.transpose();
    Eigen::MatrixXd b = ts.variations * d * ts.variations.transpose();

    Eigen::VectorXd ref = oracle::generalized_eigenvalues(0.5 * (a + a.transpose()), 0.5 * (b + b.transpose()));
    for (int i = 0; i < p.count(); ++i)
        REQUIRE(p.eigenvalues(i) == Catch::Approx(ref(i)).epsilon(1e-8).margin(1e-10));

    // residuals of the returned columns
    const double scale = a.norm() + b.norm();
    for (int i = 0; i < p.count(); ++i) {
        const double resid = (a * p.U.col(i) - p.eigenvalues(i) * (b * p.U.col(i))).norm();
        REQUIRE(resid <= 1e-8 * (1.0 + std::abs(p.eigenvalues(i))) * scale);
    }
}

TEST_CASE("lambda = 0 keeps the weight-only constraint", "[sfa]") {
    Rng rng(6);
    auto w = identity_whitener(3);
    TransitionSet ts = build_transitions({sequence_from(random_states(rng, 3, 12))}, w);
    SimilarityGraph g = knn_similarity(ts.initial_states, 2, 1.5);

    SlowProjection p0 = fit_mrsfa(ts, g, 0.0, 0.0);
    // with lambda = 0, L = I exactly: the A side must equal Xdot Xdot^T
    Eigen::MatrixXd a = ts.variations * ts.variations.transpose();
    Eigen::MatrixXd b = ts.variations * g.degree.asDiagonal() * ts.variations.transpose();
    Eigen::VectorXd ref = oracle::generalized_eigenvalues(0.5 * (a + a.transpose()), 0.5 * (b + b.transpose()));
    for (int i = 0; i < p0.count(); ++i)
        REQUIRE(p0.eigenvalues(i) == Catch::Approx(ref(i)).epsilon(1e-8).margin(1e-10));
}

TEST_CASE("generalized problem with identity constraint reduces to fit_sfa", "[sfa]") {
    // Replacing the B side by the identity reproduces the standard SFA
    // eigenvalues; this is the meaningful b = I reduction of the solver.
    Rng rng(7);
    auto w = identity_whitener(4);
    TransitionSet ts = build_transitions({sequence_from(random_states(rng, 4, 30))}, w);
    Eigen::MatrixXd a = ts.variations * ts.variations.transpose();
    a = 0.5 * (a + a.transpose()).eval();

    EigenSolution gen = gen_sym_eig(a, Eigen::MatrixXd::Identity(4, 4), 0.0);
    SlowProjection sfa = fit_sfa(ts, 4);
    for (int i = 0; i < 4; ++i)
        REQUIRE(gen.eigenvalues(i) == Catch::Approx(sfa.eigenvalues(i)).epsilon(1e-10).margin(1e-12));
}

TEST_CASE("fit_sfa recovers the slow source from a mixture", "[sfa]") {
    // 6-d whitened states mixing a slow and a fast sinusoid plus faint noise.
    const int n = 2000;
    Rng rng(8);
    Eigen::MatrixXd sources(6, n);
    for (int t = 0; t < n; ++t) {
        sources(0, t) = std::sin(2.0 * M_PI * t / 200.0);
        sources(1, t) = std::sin(2.0 * M_PI * t / 11.0);
        for (int j = 2; j < 6; ++j) sources(j, t) = 0.3 * rng.gaussian();
    }
    Eigen::MatrixXd mixing(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) mixing(i, j) = rng.gaussian();
    Eigen::MatrixXd x = mixing * sources;

    WhiteningTransform wt = pca_whiten_fit(x, 6);
    CubeSequence seq;
    seq.states = x;
    TransitionSet ts = build_transitions({seq}, wt);
    SlowProjection p = fit_sfa(ts, 6);

    // slowest output vs the slow source
    Eigen::VectorXd y = (p.U.col(0).transpose() * pca_whiten_apply_cols(wt, x)).transpose();
    Eigen::VectorXd s0 = sources.row(0).transpose();
    const auto corr = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const Eigen::VectorXd ac = a.array() - a.mean();
        const Eigen::VectorXd bc = b.array() - b.mean();
        return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
    };
    REQUIRE(std::abs(corr(y.head(n - 1), s0.head(n - 1))) >= 0.95);
}

TEST_CASE("fit_sfa zero direction sorts first and trace identity", "[sfa]") {
    Rng rng(9);
    auto w = identity_whitener(3);
    Eigen::MatrixXd states = random_states(rng, 3, 40);
    // make one direction constant in time: its variation row is zero
    states.row(2).setConstant(1.0);
    TransitionSet ts = build_transitions({sequence_from(states)}, w);
    SlowProjection p = fit_sfa(ts, 3);
    REQUIRE(std::abs(p.eigenvalues(0)) < 1e-10);
    REQUIRE(std::abs(std::abs(p.U(2, 0)) - 1.0) < 1e-8);

    // q = m: tr(Lambda) == ||Xdot||_F^2
    REQUIRE(p.eigenvalues.sum() == Catch::Approx(ts.variations.squaredNorm()).epsilon(1e-10));
}

TEST_CASE("drop_noisy removes leading columns", "[sfa]") {
    Rng rng(10);
    auto w = identity_whitener(4);
    TransitionSet ts = build_transitions({sequence_from(random_states(rng, 4, 20))}, w);
    SlowProjection p = fit_sfa(ts, 4);

    SlowProjection d0 = drop_noisy(p, 0);
    REQUIRE(d0.count() == 4);
    REQUIRE(d0.n_dropped == 0);

    SlowProjection d1 = drop_noisy(p, 1);
    REQUIRE(d1.count() == 3);
    REQUIRE(d1.n_dropped == 1);
    REQUIRE(d1.eigenvalues(0) == p.eigenvalues(1));
    for (int i = 0; i + 1 < d1.count(); ++i) REQUIRE(d1.eigenvalues(i) <= d1.eigenvalues(i + 1));

    REQUIRE_THROWS_AS(drop_noisy(p, 4), Error);
}

TEST_CASE("eigenvalues are invariant to sequence permutation", "[sfa]") {
    Rng rng(12);
    auto w = identity_whitener(3);
    std::vector<CubeSequence> seqs;
    for (int i = 0; i < 5; ++i) seqs.push_back(sequence_from(random_states(rng, 3, 7)));
    std::vector<CubeSequence> perm = {seqs[3], seqs[0], seqs[4], seqs[2], seqs[1]};

    const auto fit = [&](const std::vector<CubeSequence>& s) {
        TransitionSet ts = build_transitions(s, w);
        SimilarityGraph g = knn_similarity(ts.initial_states, 3, 2.0);
        return fit_mrsfa(ts, g, 0.1);
    };
    SlowProjection a = fit(seqs), b = fit(perm);
    for (int i = 0; i < a.count(); ++i)
        REQUIRE(a.eigenvalues(i) == Catch::Approx(b.eigenvalues(i)).epsilon(1e-10).margin(1e-12));
}

TEST_CASE("sum of leading eigenvalues is nondecreasing in lambda", "[sfa]") {
    // B is independent of lambda while A grows along the PSD order, so each
    // generalized eigenvalue (and the leading-q objective) is monotone.
    Rng rng(13);
    auto w = identity_whitener(4);
    std::vector<CubeSequence> seqs;
    for (int i = 0; i < 3; ++i) seqs.push_back(sequence_from(random_states(rng, 4, 10)));
    TransitionSet ts = build_transitions(seqs, w);
    SimilarityGraph g = knn_similarity(ts.initial_states, 3, 2.0);

    const int q = 2;
    double prev = -1.0;
    for (double lambda : {0.0, 0.05, 0.1, 0.5, 1.0, 10.0}) {
        SlowProjection p = fit_mrsfa(ts, g, lambda);
        const double obj = p.eigenvalues.head(q).sum();
        REQUIRE(obj >= prev - 1e-9 * std::max(1.0, std::abs(obj)));
        prev = obj;
    }
}

TEST_CASE("truncating columns from the right lowers the trace ratio", "[sfa]") {
    Rng rng(14);
    auto w = identity_whitener(5);
    TransitionSet ts = build_transitions({sequence_from(random_states(rng, 5, 40))}, w);
    SimilarityGraph g = knn_similarity(ts.initial_states, 4, 3.0);
    SlowProjection p = fit_mrsfa(ts, g, 0.1);

    Eigen::MatrixXd s = Eigen::MatrixXd(g.similarity);
    Eigen::MatrixXd d = g.degree.asDiagonal();
    const int n = ts.count();
    Eigen::MatrixXd l = Eigen::MatrixXd::Identity(n, n) + 0.1 * (d - s);
    Eigen::MatrixXd a = ts.variations * l * ts.variations.transpose();
    Eigen::MatrixXd b = ts.variations * d * ts.variations.transpose();

    double prev = std::numeric_limits<double>::infinity();
    for (int q = p.count(); q >= 1; --q) {
        const Eigen::MatrixXd u = p.U.leftCols(q);
        const double ratio = (u.transpose() * a * u).trace() / (u.transpose() * b * u).trace();
        REQUIRE(ratio <= prev + 1e-12);
        prev = ratio;
    }
}
