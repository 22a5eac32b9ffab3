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

#include "mrsfa/filter_bank.hpp"

namespace mrsfa {

using Map2D = Eigen::MatrixXd;  // (y, x) indexing

enum class Activation { Linear, Relu, Abs, Square };

inline Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::Linear;
    if (s == "relu") return Activation::Relu;
    if (s == "abs") return Activation::Abs;
    if (s == "square") return Activation::Square;
    fail("UnsupportedFormat", "unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Relu: return "relu";
        case Activation::Abs: return "abs";
        case Activation::Square: return "square";
    }
    return "abs";
}

/// Per-frame, per-filter response maps. `maps[frame][filter]`.
struct FeatureMapStack {
    enum class Kind { Raw, Pooled, Appearance, Variation };
    Kind kind = Kind::Raw;
    std::vector<std::vector<Map2D>> maps;

    int frames() const { return static_cast<int>(maps.size()); }
    int channels() const { return maps.empty() ? 0 : static_cast<int>(maps[0].size()); }
    int map_rows() const { return maps.empty() || maps[0].empty() ? 0 : static_cast<int>(maps[0][0].rows()); }
    int map_cols() const { return maps.empty() || maps[0].empty() ? 0 : static_cast<int>(maps[0][0].cols()); }
};

/// Valid-region cross-correlation (no padding, no kernel flip) plus bias.
/// Output dims: floor((H - h)/stride)+1 x floor((W - w)/stride)+1.
inline Map2D convolve_frame(const Map2D& frame, const Map2D& filter, double bias, int stride = 1) {
    if (stride <= 0) fail("DimMismatch", "stride must be positive");
    if (frame.rows() < filter.rows() || frame.cols() < filter.cols())
        fail("FilterLargerThanFrame", "frame is smaller than the filter");
    const Eigen::Index oh = (frame.rows() - filter.rows()) / stride + 1;
    const Eigen::Index ow = (frame.cols() - filter.cols()) / stride + 1;
    Map2D out(oh, ow);
    for (Eigen::Index oy = 0; oy < oh; ++oy)
        for (Eigen::Index ox = 0; ox < ow; ++ox)
            out(oy, ox) = (frame.block(oy * stride, ox * stride, filter.rows(), filter.cols()).array() * filter.array()).sum() + bias;
    return out;
}

inline Map2D activate(Map2D m, Activation fn) {
    switch (fn) {
        case Activation::Linear: break;
        case Activation::Relu: m = m.cwiseMax(0.0); break;
        case Activation::Abs: m = m.cwiseAbs(); break;
        case Activation::Square: m = m.array().square().matrix(); break;
    }
    return m;
}

/// Non-overlapped max pooling. Trailing partial windows at the right/bottom
/// edges are truncated (max over the available cells), not dropped.
inline Map2D max_pool(const Map2D& m, int size) {
    if (size <= 0) fail("DimMismatch", "pool size must be positive");
    if (size == 1) return m;
    const Eigen::Index oh = (m.rows() + size - 1) / size;
    const Eigen::Index ow = (m.cols() + size - 1) / size;
    Map2D out(oh, ow);
    for (Eigen::Index u = 0; u < oh; ++u) {
        const Eigen::Index y0 = u * size;
        const Eigen::Index yn = std::min<Eigen::Index>(size, m.rows() - y0);
        for (Eigen::Index v = 0; v < ow; ++v) {
            const Eigen::Index x0 = v * size;
            const Eigen::Index xn = std::min<Eigen::Index>(size, m.cols() - x0);
            out(u, v) = m.block(y0, x0, yn, xn).maxCoeff();
        }
    }
    return out;
}

/// Convolve one frame against every slim filter at once via an im2col matrix
/// product. Returns one map per filter; identical to convolve_frame per
/// filter up to the usual dot-product association.
inline std::vector<Map2D> convolve_frame_all(const Map2D& frame, const FilterBank& fb, int stride = 1) {
    if (fb.slim.empty()) fail("DimMismatch", "filter bank has no slim filters");
    const int fh = fb.spec.h_s, fw = fb.spec.w_s;
    if (frame.rows() < fh || frame.cols() < fw)
        fail("FilterLargerThanFrame", "frame is smaller than the filter");
    const Eigen::Index oh = (frame.rows() - fh) / stride + 1;
    const Eigen::Index ow = (frame.cols() - fw) / stride + 1;
    const int q = fb.filter_count();

    // patch matrix: one vectorized (y-fastest, then x) patch per column
    Eigen::MatrixXd patches(fh * fw, oh * ow);
    Eigen::Index col = 0;
    for (Eigen::Index ox = 0; ox < ow; ++ox)
        for (Eigen::Index oy = 0; oy < oh; ++oy, ++col) {
            Eigen::Index k = 0;
            for (int x = 0; x < fw; ++x)
                for (int y = 0; y < fh; ++y, ++k) patches(k, col) = frame(oy * stride + y, ox * stride + x);
        }

    Eigen::MatrixXd filters(q, fh * fw);
    for (int j = 0; j < q; ++j) {
        Eigen::Index k = 0;
        for (int x = 0; x < fw; ++x)
            for (int y = 0; y < fh; ++y, ++k) filters(j, k) = fb.slim[static_cast<std::size_t>(j)](y, x);
    }

    Eigen::MatrixXd responses = filters * patches;  // q x (oh*ow)
    responses.colwise() += fb.b;

    std::vector<Map2D> out(static_cast<std::size_t>(q));
    for (int j = 0; j < q; ++j) {
        Map2D m(oh, ow);
        Eigen::Index c = 0;
        for (Eigen::Index ox = 0; ox < ow; ++ox)
            for (Eigen::Index oy = 0; oy < oh; ++oy, ++c) m(oy, ox) = responses(j, c);
        out[static_cast<std::size_t>(j)] = std::move(m);
    }
    return out;
}

/// Convolution, activation and spatial max pooling for a whole sequence:
/// maps[i][j] = pool(g(conv(I_i, w_j) + b_j)). Frame-level parallel.
inline FeatureMapStack compute_pooled_stack(const GraySequence& video, const FilterBank& fb,
                                            Activation fn, int conv_stride, int pool_size,
                                            unsigned threads = 1) {
    FeatureMapStack stack;
    stack.kind = FeatureMapStack::Kind::Pooled;
    stack.maps.resize(static_cast<std::size_t>(video.length));
    parallel_chunks(static_cast<std::size_t>(video.length), 4, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        Map2D frame(video.height, video.width);
        for (std::size_t t = begin; t < end; ++t) {
            const float* src = video.frame(static_cast<int>(t));
            for (int y = 0; y < video.height; ++y)
                for (int x = 0; x < video.width; ++x) frame(y, x) = src[y * video.width + x];
            std::vector<Map2D> responses = convolve_frame_all(frame, fb, conv_stride);
            for (auto& m : responses) m = max_pool(activate(std::move(m), fn), pool_size);
            stack.maps[t] = std::move(responses);
        }
    });
    return stack;
}

/// Appearance maps A_i = |M^_i|; a no-op on abs-activated input but applied
/// literally either way. Frame count preserved.
inline FeatureMapStack appearance_maps(const FeatureMapStack& pooled) {
    if (pooled.kind != FeatureMapStack::Kind::Pooled)
        fail("DimMismatch", "appearance_maps expects a pooled-activated stack");
    FeatureMapStack out;
    out.kind = FeatureMapStack::Kind::Appearance;
    out.maps.resize(pooled.maps.size());
    for (std::size_t t = 0; t < pooled.maps.size(); ++t) {
        out.maps[t].reserve(pooled.maps[t].size());
        for (const auto& m : pooled.maps[t]) out.maps[t].push_back(m.cwiseAbs());
    }
    return out;
}

/// Variation maps V_i = |M^_i - M^_{i+1}|; one fewer frame than the source.
inline FeatureMapStack variation_maps(const FeatureMapStack& pooled) {
    if (pooled.kind != FeatureMapStack::Kind::Pooled)
        fail("DimMismatch", "variation_maps expects a pooled-activated stack");
    if (pooled.frames() < 2) fail("TooFewFrames", "need at least 2 frames for variation maps");
    FeatureMapStack out;
    out.kind = FeatureMapStack::Kind::Variation;
    out.maps.resize(pooled.maps.size() - 1);
    for (std::size_t t = 0; t + 1 < pooled.maps.size(); ++t) {
        out.maps[t].reserve(pooled.maps[t].size());
        for (std::size_t j = 0; j < pooled.maps[t].size(); ++j)
            out.maps[t].push_back((pooled.maps[t][j] - pooled.maps[t + 1][j]).cwiseAbs());
    }
    return out;
}

}  // namespace mrsfa
