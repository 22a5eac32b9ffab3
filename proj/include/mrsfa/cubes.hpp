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
#include <algorithm>
#include <array>

#include "mrsfa/common.hpp"
#include "mrsfa/rng.hpp"
#include "mrsfa/video.hpp"

namespace mrsfa {

/// Spatio-temporal cube geometry. A sampled cube of h_s x w_s x l_s pixels is
/// reformatted into l_n = l_s - d_s + 1 overlapping elemental cubes of length
/// d_s, which act as the states of a temporal sequence.
struct CubeSpec {
    int h_s = 7;
    int w_s = 7;
    int l_s = 15;
    int d_s = 6;

    int l_n() const { return l_s - d_s + 1; }
    int state_dim() const { return h_s * w_s * d_s; }
    std::size_t cube_size() const { return static_cast<std::size_t>(h_s) * w_s * l_s; }

    void validate() const {
        if (h_s <= 0 || w_s <= 0 || l_s <= 0 || d_s <= 0)
            fail("DimMismatch", "cube dimensions must be positive");
        if (d_s > l_s) fail("DimMismatch", "elemental cube length exceeds cube length");
    }
    void validate_for_learning() const {
        validate();
        if (l_n() < 2) fail("DimMismatch", "need l_n >= 2 (at least one temporal transition)");
    }
};

/// One raw sampled cube, vectorized y-fastest, then x, then t. Frames are
/// therefore contiguous h_s*w_s blocks, and an elemental cube starting at
/// frame i is the contiguous slice [i*h_s*w_s, (i+d_s)*h_s*w_s).
struct RawCube {
    std::vector<float> data;  // h_s * w_s * l_s
};

/// A cube reformatted into a sequence of vectorized elemental cubes
/// (one column per state, l_n columns).
struct CubeSequence {
    Eigen::MatrixXd states;  // state_dim x l_n
};

struct CubePosition {
    int video = 0;
    int x = 0;
    int y = 0;
    int t = 0;
};

namespace detail {

inline std::size_t valid_positions(int h, int w, int l, const CubeSpec& spec) {
    if (h < spec.h_s || w < spec.w_s || l < spec.l_s) return 0;
    return static_cast<std::size_t>(h - spec.h_s + 1) * (w - spec.w_s + 1) * (l - spec.l_s + 1);
}

}  // namespace detail

/// Draw `count` cube positions uniformly over all valid (video, x, y, t)
/// placements, pooled across videos in proportion to each video's number of
/// valid positions. Videos too small for the spec are skipped with a warning.
inline std::vector<CubePosition> sample_cube_positions(const std::vector<std::array<int, 3>>& dims_hwl,
                                                       std::size_t count, const CubeSpec& spec,
                                                       std::uint64_t seed) {
    spec.validate();
    std::vector<std::size_t> cumulative;
    cumulative.reserve(dims_hwl.size() + 1);
    cumulative.push_back(0);
    bool any_skipped = false;
    for (const auto& d : dims_hwl) {
        const std::size_t n = detail::valid_positions(d[0], d[1], d[2], spec);
        if (n == 0) any_skipped = true;
        cumulative.push_back(cumulative.back() + n);
    }
    if (any_skipped) warn("TooSmallVideo: some videos are too small for the cube spec and were skipped");
    const std::size_t total = cumulative.back();
    if (total == 0) fail("TooSmallVideo", "no video is large enough for the cube spec");

    Rng rng(seed);
    std::vector<CubePosition> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t g = rng.below(total);
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), g);
        const int v = static_cast<int>(it - cumulative.begin()) - 1;
        std::size_t local = g - cumulative[v];
        const auto& d = dims_hwl[v];
        const int nx = d[1] - spec.w_s + 1;
        const int ny = d[0] - spec.h_s + 1;
        CubePosition p;
        p.video = v;
        p.t = static_cast<int>(local / (static_cast<std::size_t>(nx) * ny));
        local %= static_cast<std::size_t>(nx) * ny;
        p.y = static_cast<int>(local / nx);
        p.x = static_cast<int>(local % nx);
        out[i] = p;
    }
    return out;
}

/// Copy one cube out of a video in the fixed (y, x, t) vectorization order.
inline RawCube extract_cube(const GraySequence& video, const CubePosition& p, const CubeSpec& spec) {
    RawCube c;
    c.data.resize(spec.cube_size());
    std::size_t k = 0;
    for (int t = 0; t < spec.l_s; ++t)
        for (int x = 0; x < spec.w_s; ++x)
            for (int y = 0; y < spec.h_s; ++y)
                c.data[k++] = video.at(p.y + y, p.x + x, p.t + t);
    return c;
}

/// Sample exactly `count` raw cubes from the given videos with a seeded,
/// deterministic generator.
inline std::vector<RawCube> sample_cubes(const std::vector<GraySequence>& videos, std::size_t count,
                                         const CubeSpec& spec, std::uint64_t seed) {
    std::vector<std::array<int, 3>> dims;
    dims.reserve(videos.size());
    for (const auto& v : videos) dims.push_back({v.height, v.width, v.length});
    const auto positions = sample_cube_positions(dims, count, spec, seed);
    std::vector<RawCube> cubes;
    cubes.reserve(count);
    for (const auto& p : positions) cubes.push_back(extract_cube(videos[p.video], p, spec));
    return cubes;
}

/// Reformat a frame-based cube into a cube-based sequence: column i holds the
/// vectorized elemental cube spanning frames [i, i + d_s).
inline CubeSequence reformat(const RawCube& cube, const CubeSpec& spec) {
    spec.validate();
    if (cube.data.size() != spec.cube_size()) fail("DimMismatch", "cube size does not match spec");
    const int frame = spec.h_s * spec.w_s;
    CubeSequence seq;
    seq.states.resize(spec.state_dim(), spec.l_n());
    for (int i = 0; i < spec.l_n(); ++i) {
        const float* src = cube.data.data() + static_cast<std::size_t>(i) * frame;
        for (int j = 0; j < spec.state_dim(); ++j) seq.states(j, i) = src[j];
    }
    return seq;
}

}  // namespace mrsfa
