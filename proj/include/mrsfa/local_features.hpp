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

#include "mrsfa/feature_maps.hpp"

namespace mrsfa {

/// Local pooling volume geometry on pooled-map coordinates. Each volume of
/// h_p x w_p x l_p is described per temporal slice by 4 quadrant averages per
/// channel (slice vector of 4g, L2-normalized), then averaged within three
/// temporal thirds and concatenated: 3*4*g dims.
struct PoolSpec {
    int h_p = 8;
    int w_p = 8;
    int l_p = 15;
    int s_s = 1;  // spatial stride
    int s_t = 3;  // temporal stride

    void validate() const {
        if (h_p <= 0 || w_p <= 0 || l_p <= 0 || s_s <= 0 || s_t <= 0)
            fail("DimMismatch", "pool spec entries must be positive");
        if (h_p % 2 != 0 || w_p % 2 != 0) fail("DimMismatch", "h_p and w_p must be even (quadrant split)");
        if (l_p < 3) fail("DimMismatch", "l_p must be at least 3 (temporal thirds)");
    }
};

template <class Scalar>
struct LocalFeatureSetT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    enum class Channel { Appearance, Variation };

    Matrix features;  // dim x count, one local feature per column
    struct Position {
        int scale = 0, x = 0, y = 0, t = 0;
    };
    std::vector<Position> positions;
    int group_id = 0;
    Channel channel = Channel::Appearance;

    int dim() const { return static_cast<int>(features.rows()); }
    int count() const { return static_cast<int>(features.cols()); }
};

using LocalFeatureSet = LocalFeatureSetT<double>;
using LocalFeatureSetF = LocalFeatureSetT<float>;

/// Number of valid grid positions along one axis.
inline int grid_count(int extent, int window, int stride) {
    if (extent < window) return 0;
    return (extent - window) / stride + 1;
}

namespace detail {

// integral image with a zero top row/left column: sums in O(1)
inline Eigen::MatrixXd integral_image(const Map2D& m) {
    Eigen::MatrixXd ii = Eigen::MatrixXd::Zero(m.rows() + 1, m.cols() + 1);
    for (Eigen::Index y = 0; y < m.rows(); ++y) {
        double row = 0.0;
        for (Eigen::Index x = 0; x < m.cols(); ++x) {
            row += m(y, x);
            ii(y + 1, x + 1) = ii(y, x + 1) + row;
        }
    }
    return ii;
}

inline double box_sum(const Eigen::MatrixXd& ii, int y0, int x0, int h, int w) {
    return ii(y0 + h, x0 + w) - ii(y0, x0 + w) - ii(y0 + h, x0) + ii(y0, x0);
}

}  // namespace detail

/// Spatial-temporal average pooling over a channel range [c_begin, c_end) of
/// a feature-map stack. Emits one 3*4*g feature per grid position (order:
/// y, then x, then t), with each slice vector L2-normalized before temporal
/// averaging (all-zero slices stay zero).
template <class Scalar = double>
LocalFeatureSetT<Scalar> pool_volume(const FeatureMapStack& stack, const PoolSpec& spec,
                                     int c_begin = 0, int c_end = -1, int scale_idx = 0) {
    spec.validate();
    if (c_end < 0) c_end = stack.channels();
    if (c_begin < 0 || c_end > stack.channels() || c_begin >= c_end)
        fail("DimMismatch", "bad channel range");
    const int g = c_end - c_begin;
    const int h = stack.map_rows(), w = stack.map_cols(), n_frames = stack.frames();
    if (h < spec.h_p || w < spec.w_p || n_frames < spec.l_p)
        fail("VolumeLargerThanMaps", "pooling volume exceeds the feature-map stack");

    const int ny = grid_count(h, spec.h_p, spec.s_s);
    const int nx = grid_count(w, spec.w_p, spec.s_s);
    const int nt = grid_count(n_frames, spec.l_p, spec.s_t);
    const int dim = 3 * 4 * g;

    // one integral image per (frame, channel)
    std::vector<std::vector<Eigen::MatrixXd>> ii(static_cast<std::size_t>(n_frames));
    for (int t = 0; t < n_frames; ++t) {
        ii[static_cast<std::size_t>(t)].reserve(static_cast<std::size_t>(g));
        for (int c = c_begin; c < c_end; ++c)
            ii[static_cast<std::size_t>(t)].push_back(detail::integral_image(stack.maps[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)]));
    }

    LocalFeatureSetT<Scalar> out;
    out.features.resize(dim, static_cast<Eigen::Index>(ny) * nx * nt);
    out.positions.reserve(static_cast<std::size_t>(ny) * nx * nt);

    const int h2 = spec.h_p / 2, w2 = spec.w_p / 2;
    const double quadrant_area = static_cast<double>(h2) * w2;
    const int b0 = spec.l_p / 3, b1 = 2 * spec.l_p / 3;
    const int third_sizes[3] = {b0, b1 - b0, spec.l_p - b1};

    Eigen::MatrixXd slices(dim / 3, n_frames);  // normalized slice vectors at one (y0, x0)
    Eigen::VectorXd slice(dim / 3);
    Eigen::VectorXd feature(dim);
    Eigen::Index col = 0;

    for (int y0 = 0; y0 + spec.h_p <= h; y0 += spec.s_s) {
        for (int x0 = 0; x0 + spec.w_p <= w; x0 += spec.s_s) {
            for (int t = 0; t < n_frames; ++t) {
                for (int c = 0; c < g; ++c) {
                    const Eigen::MatrixXd& img = ii[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
                    slice(0 * g + c) = detail::box_sum(img, y0, x0, h2, w2) / quadrant_area;            // top-left
                    slice(1 * g + c) = detail::box_sum(img, y0, x0 + w2, h2, w2) / quadrant_area;       // top-right
                    slice(2 * g + c) = detail::box_sum(img, y0 + h2, x0, h2, w2) / quadrant_area;       // bottom-left
                    slice(3 * g + c) = detail::box_sum(img, y0 + h2, x0 + w2, h2, w2) / quadrant_area;  // bottom-right
                }
                const double norm = slice.norm();
                if (norm > 0.0) slice /= norm;
                slices.col(t) = slice;
            }
            for (int t0 = 0; t0 + spec.l_p <= n_frames; t0 += spec.s_t) {
                for (int part = 0; part < 3; ++part) {
                    const int begin = t0 + (part == 0 ? 0 : (part == 1 ? b0 : b1));
                    const int len = third_sizes[part];
                    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim / 3);
                    for (int t = begin; t < begin + len; ++t) mean += slices.col(t);
                    feature.segment(part * (dim / 3), dim / 3) = mean / static_cast<double>(len);
                }
                out.features.col(col++) = feature.cast<Scalar>();
                out.positions.push_back({scale_idx, x0, y0, t0});
            }
        }
    }
    return out;
}

/// Check that the integral-image pooling path agrees with a naive direct
/// summation of the same quantities (1e-9 relative). Returns false on any
/// mismatch instead of throwing.
inline bool integral_pool_oracle_check(const FeatureMapStack& stack, const PoolSpec& spec) {
    LocalFeatureSet fast;
    try {
        fast = pool_volume<double>(stack, spec);
    } catch (const Error&) {
        return false;
    }

    // direct summation route, sharing no pooling code with the above
    const int g = stack.channels();
    const int h2 = spec.h_p / 2, w2 = spec.w_p / 2;
    const int b0 = spec.l_p / 3, b1 = 2 * spec.l_p / 3;
    const int dim = 12 * g;
    Eigen::Index col = 0;
    for (int y0 = 0; y0 + spec.h_p <= stack.map_rows(); y0 += spec.s_s)
        for (int x0 = 0; x0 + spec.w_p <= stack.map_cols(); x0 += spec.s_s)
            for (int t0 = 0; t0 + spec.l_p <= stack.frames(); t0 += spec.s_t) {
                Eigen::VectorXd feature = Eigen::VectorXd::Zero(dim);
                for (int part = 0; part < 3; ++part) {
                    const int begin = t0 + (part == 0 ? 0 : (part == 1 ? b0 : b1));
                    const int end = t0 + (part == 0 ? b0 : (part == 1 ? b1 : spec.l_p));
                    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4 * g);
                    for (int t = begin; t < end; ++t) {
                        Eigen::VectorXd slice(4 * g);
                        for (int c = 0; c < g; ++c) {
                            const Map2D& m = stack.maps[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
                            double q[4] = {0, 0, 0, 0};
                            for (int y = 0; y < h2; ++y)
                                for (int x = 0; x < w2; ++x) {
                                    q[0] += m(y0 + y, x0 + x);
                                    q[1] += m(y0 + y, x0 + w2 + x);
                                    q[2] += m(y0 + h2 + y, x0 + x);
                                    q[3] += m(y0 + h2 + y, x0 + w2 + x);
                                }
                            for (int k = 0; k < 4; ++k) slice(k * g + c) = q[k] / (static_cast<double>(h2) * w2);
                        }
                        const double norm = slice.norm();
                        if (norm > 0.0) slice /= norm;
                        mean += slice;
                    }
                    feature.segment(part * 4 * g, 4 * g) = mean / static_cast<double>(end - begin);
                }
                for (int i = 0; i < dim; ++i) {
                    const double a = fast.features(i, col), b = feature(i);
                    if (std::abs(a - b) > 1e-9 * std::max(1.0, std::max(std::abs(a), std::abs(b))))
                        return false;
                }
                ++col;
            }
    return col == fast.features.cols();
}

/// Fit the per-set PCA whitening reducer (96 -> 48 by default) on training
/// features only.
template <class Scalar>
WhiteningTransform fit_feature_reducer(const LocalFeatureSetT<Scalar>& features, int out_dim = 48) {
    return pca_whiten_fit(features.features.template cast<double>(), out_dim);
}

/// Apply a fitted reducer to a feature set; returns reduced columns.
template <class Scalar>
Eigen::MatrixXd apply_feature_reducer(const WhiteningTransform& reducer,
                                      const LocalFeatureSetT<Scalar>& features) {
    if (features.dim() != reducer.in_dim()) fail("DimMismatch", "reducer input dimension mismatch");
    return pca_whiten_apply_cols(reducer, features.features.template cast<double>());
}

// ---------------------------------------------------------------------------
// Optional feature dump `features.bin`: magic "SLFV", u32 LE dim and count,
// f32 LE payload (column-major: one feature after another).

template <class Scalar>
void write_feature_set(const fs::path& path, const LocalFeatureSetT<Scalar>& set) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("IoError", "cannot write " + path.string());
    write_magic(os, "SLFV");
    write_u32(os, static_cast<std::uint32_t>(set.dim()));
    write_u32(os, static_cast<std::uint32_t>(set.count()));
    for (int j = 0; j < set.count(); ++j)
        for (int i = 0; i < set.dim(); ++i) write_f32(os, static_cast<float>(set.features(i, j)));
    if (!os) fail("IoError", "short write to " + path.string());
}

inline LocalFeatureSetF read_feature_set(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("CorruptHeader", "cannot open " + path.string());
    expect_magic(is, "SLFV", path.string());
    const int dim = static_cast<int>(read_u32(is));
    const int count = static_cast<int>(read_u32(is));
    LocalFeatureSetF set;
    set.features.resize(dim, count);
    for (int j = 0; j < count; ++j)
        for (int i = 0; i < dim; ++i) set.features(i, j) = read_f32(is);
    return set;
}

}  // namespace mrsfa
