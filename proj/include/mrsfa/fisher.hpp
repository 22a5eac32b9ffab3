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

#include "mrsfa/local_features.hpp"

namespace mrsfa {

/// Diagonal-covariance Gaussian mixture.
struct GmmModel {
    Eigen::VectorXd weights;    // K, sums to 1, each > 0
    Eigen::MatrixXd means;      // d x K
    Eigen::MatrixXd variances;  // d x K, each entry >= var_floor
    double var_floor = 0.0;

    int clusters() const { return static_cast<int>(weights.size()); }
    int dim() const { return static_cast<int>(means.rows()); }
};

struct GmmFitStats {
    std::vector<double> log_likelihood;  // per EM iteration (average per sample)
    bool converged = false;
    int reseeded_clusters = 0;
};

namespace detail {

// log N(x | mu_k, sigma_k) for all (sample, cluster) pairs plus the cluster
// log-weights; written into `logp` (K x block).
inline void log_posterior_block(const Eigen::MatrixXd& x, const GmmModel& gmm, Eigen::Index b0,
                                Eigen::Index bn, Eigen::MatrixXd& logp) {
    static constexpr double kLog2Pi = 1.8378770664093453;
    const int K = gmm.clusters();
    const int d = gmm.dim();
    Eigen::VectorXd log_norm(K);  // log pi_k - 0.5 * sum_d log(2 pi sigma^2)
    for (int k = 0; k < K; ++k)
        log_norm(k) = std::log(gmm.weights(k)) -
                      0.5 * (d * kLog2Pi + gmm.variances.col(k).array().log().sum());
    for (Eigen::Index j = 0; j < bn; ++j) {
        const auto xv = x.col(b0 + j);
        for (int k = 0; k < K; ++k) {
            const double maha = ((xv - gmm.means.col(k)).array().square() / gmm.variances.col(k).array()).sum();
            logp(k, j) = log_norm(k) - 0.5 * maha;
        }
    }
}

// kmeans++ seeding: means only.
inline Eigen::MatrixXd kmeanspp_means(const Eigen::MatrixXd& x, int K, Rng& rng) {
    const Eigen::Index n = x.cols();
    Eigen::MatrixXd means(x.rows(), K);
    means.col(0) = x.col(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2 = (x.colwise() - means.col(0)).colwise().squaredNorm();
    for (int k = 1; k < K; ++k) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = rng.unit() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        means.col(k) = x.col(pick);
        d2 = d2.cwiseMin((x.colwise() - means.col(k)).colwise().squaredNorm().transpose());
    }
    return means;
}

}  // namespace detail

/// EM fit of a diagonal-covariance GMM. Deterministic given the seed:
/// k-means++ means, uniform weights and global variances to start; chunked
/// E-step accumulation with a fixed reduction order so results are identical
/// for any thread count. Empty clusters are reseeded from the farthest point.
inline GmmModel fit_gmm(const Eigen::MatrixXd& features, int K, std::uint64_t seed,
                        int max_iters = 100, double tol = 1e-6, unsigned threads = 1,
                        GmmFitStats* stats = nullptr) {
    const Eigen::Index n = features.cols();
    const int d = static_cast<int>(features.rows());
    if (K <= 0) fail("DimMismatch", "cluster count must be positive");
    if (n < 10 * K) fail("TooFewSamples", "need at least 10*K samples to fit the mixture");
    if (!features.allFinite()) fail("NonFinite", "features contain NaN/Inf");

    GmmModel gmm;
    Rng rng(seed);
    gmm.means = detail::kmeanspp_means(features, K, rng);
    gmm.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
    Eigen::VectorXd mean = features.rowwise().mean();
    Eigen::VectorXd global_var = (features.colwise() - mean).array().square().rowwise().mean();
    gmm.var_floor = std::max(1e-6 * global_var.mean(), 1e-12);
    global_var = global_var.cwiseMax(gmm.var_floor);
    gmm.variances = global_var.replicate(1, K);

    const std::size_t chunk = 1024;
    const std::size_t n_chunks = (static_cast<std::size_t>(n) + chunk - 1) / chunk;
    std::vector<Eigen::VectorXd> part_nk(n_chunks);
    std::vector<Eigen::MatrixXd> part_sx(n_chunks), part_sxx(n_chunks);
    std::vector<double> part_ll(n_chunks);

    GmmFitStats local_stats;
    GmmFitStats& st = stats ? *stats : local_stats;
    st.log_likelihood.clear();

    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iters; ++iter) {
        parallel_chunks(static_cast<std::size_t>(n), chunk, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
            const Eigen::Index b0 = static_cast<Eigen::Index>(begin);
            const Eigen::Index bn = static_cast<Eigen::Index>(end - begin);
            Eigen::MatrixXd logp(K, bn);
            detail::log_posterior_block(features, gmm, b0, bn, logp);
            Eigen::VectorXd nk = Eigen::VectorXd::Zero(K);
            Eigen::MatrixXd sx = Eigen::MatrixXd::Zero(d, K);
            Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(d, K);
            double ll = 0.0;
            for (Eigen::Index j = 0; j < bn; ++j) {
                const double mx = logp.col(j).maxCoeff();
                const double lse = mx + std::log((logp.col(j).array() - mx).exp().sum());
                ll += lse;
                const Eigen::VectorXd gamma = (logp.col(j).array() - lse).exp();
                nk += gamma;
                const auto xv = features.col(b0 + j);
                for (int k = 0; k < K; ++k) {
                    sx.col(k) += gamma(k) * xv;
                    sxx.col(k) += gamma(k) * xv.cwiseProduct(xv);
                }
            }
            part_nk[c] = std::move(nk);
            part_sx[c] = std::move(sx);
            part_sxx[c] = std::move(sxx);
            part_ll[c] = ll;
        });

        Eigen::VectorXd nk = Eigen::VectorXd::Zero(K);
        Eigen::MatrixXd sx = Eigen::MatrixXd::Zero(d, K);
        Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(d, K);
        double ll = 0.0;
        for (std::size_t c = 0; c < n_chunks; ++c) {  // fixed reduction order
            nk += part_nk[c];
            sx += part_sx[c];
            sxx += part_sxx[c];
            ll += part_ll[c];
        }
        ll /= static_cast<double>(n);
        st.log_likelihood.push_back(ll);

        // M-step
        for (int k = 0; k < K; ++k) {
            if (nk(k) < 1e-8) {
                // DegenerateCluster: reseed from the point farthest from its
                // nearest mean, keep global variances.
                warn("DegenerateCluster: reseeding empty GMM cluster " + std::to_string(k));
                ++st.reseeded_clusters;
                Eigen::Index far = 0;
                double best = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    double nearest = std::numeric_limits<double>::infinity();
                    for (int kk = 0; kk < K; ++kk)
                        nearest = std::min(nearest, (features.col(i) - gmm.means.col(kk)).squaredNorm());
                    if (nearest > best) {
                        best = nearest;
                        far = i;
                    }
                }
                gmm.means.col(k) = features.col(far);
                gmm.variances.col(k) = global_var;
                nk(k) = 1.0;
                continue;
            }
            gmm.means.col(k) = sx.col(k) / nk(k);
            gmm.variances.col(k) =
                (sxx.col(k) / nk(k) - gmm.means.col(k).cwiseProduct(gmm.means.col(k))).cwiseMax(gmm.var_floor);
        }
        gmm.weights = (nk / nk.sum()).cwiseMax(1e-10);
        gmm.weights /= gmm.weights.sum();

        if (iter > 0 && ll - prev_ll < tol * std::max(1.0, std::abs(ll))) {
            st.converged = true;
            break;
        }
        prev_ll = ll;
    }
    if (!st.converged) warn("NonConvergence: GMM EM stopped at max_iters; returning the last model");
    return gmm;
}

/// Fisher vector of a feature set w.r.t. a GMM: per cluster the weighted
/// first- and second-order statistics
///   G_mu,k    = 1/(N sqrt(pi_k))   * sum_n gamma_n(k) (x_n - mu_k)/sigma_k
///   G_sigma,k = 1/(N sqrt(2 pi_k)) * sum_n gamma_n(k) ((x_n - mu_k)^2/sigma_k^2 - 1)
/// concatenated as [G_mu; G_sigma], dimension 2*K*d.
inline Eigen::VectorXd fisher_vector(const Eigen::MatrixXd& features, const GmmModel& gmm) {
    const Eigen::Index n = features.cols();
    if (n == 0) fail("EmptyFeatureSet", "cannot encode an empty feature set");
    if (features.rows() != gmm.dim()) fail("DimMismatch", "feature dimension does not match the GMM");
    const int K = gmm.clusters();
    const int d = gmm.dim();

    Eigen::MatrixXd gmu = Eigen::MatrixXd::Zero(d, K);
    Eigen::MatrixXd gsig = Eigen::MatrixXd::Zero(d, K);
    Eigen::MatrixXd logp(K, 1);
    const Eigen::MatrixXd sigma = gmm.variances.cwiseSqrt();
    for (Eigen::Index j = 0; j < n; ++j) {
        detail::log_posterior_block(features, gmm, j, 1, logp);
        const double mx = logp.col(0).maxCoeff();
        const double lse = mx + std::log((logp.col(0).array() - mx).exp().sum());
        const Eigen::VectorXd gamma = (logp.col(0).array() - lse).exp();
        for (int k = 0; k < K; ++k) {
            const Eigen::VectorXd u = (features.col(j) - gmm.means.col(k)).cwiseQuotient(sigma.col(k));
            gmu.col(k) += gamma(k) * u;
            gsig.col(k) += gamma(k) * (u.array().square() - 1.0).matrix();
        }
    }
    Eigen::VectorXd fv(2 * K * d);
    for (int k = 0; k < K; ++k) {
        fv.segment(k * d, d) = gmu.col(k) / (static_cast<double>(n) * std::sqrt(gmm.weights(k)));
        fv.segment(K * d + k * d, d) = gsig.col(k) / (static_cast<double>(n) * std::sqrt(2.0 * gmm.weights(k)));
    }
    return fv;
}

/// Power normalization sign(x)|x|^alpha followed by L2 normalization
/// (all-zero vectors pass through unchanged).
inline Eigen::VectorXd normalize_fv(Eigen::VectorXd v, double power_alpha = 0.5) {
    if (!(power_alpha > 0.0 && power_alpha <= 1.0)) fail("DimMismatch", "power_alpha must be in (0, 1]");
    if (power_alpha != 1.0)
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v(i) = (v(i) < 0.0 ? -1.0 : 1.0) * std::pow(std::abs(v(i)), power_alpha);
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

/// Per-set encoder: PCA reducer plus GMM codebook.
struct FisherEncoder {
    WhiteningTransform reducer;
    GmmModel gmm;
    double power_alpha = 0.5;
};

/// Concatenated, normalized Fisher vectors of every feature set.
struct VideoRepresentation {
    Eigen::VectorXd vector;
    std::vector<std::pair<int, int>> set_offsets;  // [begin, end) per set
};

/// Encode one video: every set is reduced, Fisher-encoded and normalized,
/// the blocks concatenated in set order, and the result L2-normalized once
/// more. Sets with no features contribute a zero block.
template <class Scalar>
VideoRepresentation encode_video(const std::vector<LocalFeatureSetT<Scalar>>& sets,
                                 const std::vector<FisherEncoder>& encoders) {
    if (sets.size() != encoders.size()) fail("MissingSet", "set/encoder count mismatch");
    if (sets.empty()) fail("MissingSet", "no feature sets");
    VideoRepresentation rep;
    std::vector<Eigen::VectorXd> blocks(sets.size());
    int total = 0;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        const auto& enc = encoders[s];
        const int block_dim = 2 * enc.gmm.clusters() * enc.gmm.dim();
        if (sets[s].count() == 0) {
            blocks[s] = Eigen::VectorXd::Zero(block_dim);
        } else {
            Eigen::MatrixXd reduced = apply_feature_reducer(enc.reducer, sets[s]);
            blocks[s] = normalize_fv(fisher_vector(reduced, enc.gmm), enc.power_alpha);
        }
        total += block_dim;
    }
    rep.vector.resize(total);
    int at = 0;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        rep.set_offsets.emplace_back(at, at + static_cast<int>(blocks[s].size()));
        rep.vector.segment(at, blocks[s].size()) = blocks[s];
        at += static_cast<int>(blocks[s].size());
    }
    const double norm = rep.vector.norm();
    if (norm > 0.0) rep.vector /= norm;
    return rep;
}

// ---------------------------------------------------------------------------
// Encoder file `encoder.sfe`: magic "SFE1", u32 LE (n_sets, K, d), then per
// set: reducer mean (in_dim), reducer projection (d x in_dim, row-major),
// GMM pi (K), mu (d x K, column-major), sigma^2 (d x K, column-major) as f64
// LE. The reducer input dimension is recovered from the file size.

inline void save_encoders(const std::vector<FisherEncoder>& encoders, const fs::path& path) {
    if (encoders.empty()) fail("MissingSet", "no encoders to save");
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("IoError", "cannot write " + path.string());
    const int K = encoders[0].gmm.clusters();
    const int d = encoders[0].gmm.dim();
    write_magic(os, "SFE1");
    write_u32(os, static_cast<std::uint32_t>(encoders.size()));
    write_u32(os, static_cast<std::uint32_t>(K));
    write_u32(os, static_cast<std::uint32_t>(d));
    for (const auto& e : encoders) {
        if (e.gmm.clusters() != K || e.gmm.dim() != d || e.reducer.out_dim() != d)
            fail("DimMismatch", "all encoders must share (K, d)");
        for (Eigen::Index i = 0; i < e.reducer.mean.size(); ++i) write_f64(os, e.reducer.mean(i));
        for (Eigen::Index i = 0; i < e.reducer.projection.rows(); ++i)
            for (Eigen::Index j = 0; j < e.reducer.projection.cols(); ++j) write_f64(os, e.reducer.projection(i, j));
        for (int k = 0; k < K; ++k) write_f64(os, e.gmm.weights(k));
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < d; ++i) write_f64(os, e.gmm.means(i, k));
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < d; ++i) write_f64(os, e.gmm.variances(i, k));
    }
    if (!os) fail("IoError", "short write to " + path.string());
}

inline std::vector<FisherEncoder> load_encoders(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("CorruptHeader", "cannot open " + path.string());
    expect_magic(is, "SFE1", path.string());
    const int n_sets = static_cast<int>(read_u32(is));
    const int K = static_cast<int>(read_u32(is));
    const int d = static_cast<int>(read_u32(is));
    if (n_sets <= 0 || K <= 0 || d <= 0) fail("CorruptHeader", "bad encoder counts in " + path.string());

    const auto header_end = is.tellg();
    is.seekg(0, std::ios::end);
    const auto file_end = is.tellg();
    is.seekg(header_end);
    const std::int64_t per_set = (file_end - header_end) / 8 / n_sets;
    // per_set = in + d*in + K + 2*K*d  ->  in = (per_set - K - 2*K*d)/(1 + d)
    const std::int64_t in64 = (per_set - K - 2LL * K * d) / (1 + d);
    if (in64 <= 0 || (per_set - K - 2LL * K * d) % (1 + d) != 0)
        fail("CorruptHeader", "inconsistent payload size in " + path.string());
    const int in_dim = static_cast<int>(in64);

    std::vector<FisherEncoder> encoders(static_cast<std::size_t>(n_sets));
    for (auto& e : encoders) {
        e.reducer.mean.resize(in_dim);
        for (int i = 0; i < in_dim; ++i) e.reducer.mean(i) = read_f64(is);
        e.reducer.projection.resize(d, in_dim);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < in_dim; ++j) e.reducer.projection(i, j) = read_f64(is);
        e.gmm.weights.resize(K);
        for (int k = 0; k < K; ++k) e.gmm.weights(k) = read_f64(is);
        e.gmm.means.resize(d, K);
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < d; ++i) e.gmm.means(i, k) = read_f64(is);
        e.gmm.variances.resize(d, K);
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < d; ++i) e.gmm.variances(i, k) = read_f64(is);
    }
    if (!is) fail("CorruptHeader", "truncated payload in " + path.string());
    return encoders;
}

}  // namespace mrsfa
