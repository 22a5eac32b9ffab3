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

#include <iomanip>

#include "mrsfa/sfa.hpp"

namespace mrsfa {

/// Learned convolution filters: the composition of PCA whitening and a slow
/// projection. W holds full 3D weights (one vectorized cube per column),
/// `slim` the derived 2D filters (the t = 0 slice of each column). Filters
/// are ordered by ascending eigenvalue; groups are consecutive chunks.
struct FilterBank {
    CubeSpec spec;
    WhiteningTransform whitener;        // raw cube -> m
    Eigen::MatrixXd W;                  // state_dim x q
    Eigen::VectorXd b;                  // q, equals -W^T * whitener.mean
    Eigen::VectorXd eigenvalues;        // q, ascending
    std::vector<Eigen::MatrixXd> slim;  // q filters of h_s x w_s (empty until slim())
    std::vector<std::pair<int, int>> groups;  // [begin, end) filter index ranges
    int group_size = 0;
    int n_dropped = 0;
    std::uint64_t provenance = 0;  // learning config hash

    int filter_count() const { return static_cast<int>(W.cols()); }
};

/// Fold the whitening map into the projection so that W^T x + b equals
/// U^T P (x - mean) for every raw cube x.
inline FilterBank compose_filters(const WhiteningTransform& whitener, const SlowProjection& proj,
                                  const CubeSpec& spec) {
    if (whitener.out_dim() != proj.dim()) fail("DimMismatch", "whitener output does not match projection rows");
    if (whitener.in_dim() != spec.state_dim()) fail("DimMismatch", "whitener input does not match cube spec");
    FilterBank fb;
    fb.spec = spec;
    fb.whitener = whitener;
    fb.W = whitener.projection.transpose() * proj.U;
    fb.b = -fb.W.transpose() * whitener.mean;
    fb.eigenvalues = proj.eigenvalues;
    fb.n_dropped = proj.n_dropped;
    return fb;
}

/// Derive slim 2D filters from the first temporal slice of each 3D filter.
/// Idempotent; the full W is kept for audit.
inline FilterBank slim(FilterBank fb) {
    fb.slim.clear();
    fb.slim.reserve(static_cast<std::size_t>(fb.filter_count()));
    for (int j = 0; j < fb.filter_count(); ++j) {
        Eigen::MatrixXd f(fb.spec.h_s, fb.spec.w_s);
        for (int x = 0; x < fb.spec.w_s; ++x)
            for (int y = 0; y < fb.spec.h_s; ++y) f(y, x) = fb.W(y + fb.spec.h_s * x, j);
        fb.slim.push_back(std::move(f));
    }
    return fb;
}

/// Partition filters into consecutive groups of `group_size` in eigenvalue
/// order. A short last group is kept with a warning.
inline FilterBank group_filters(FilterBank fb, int group_size) {
    if (group_size <= 0) fail("DimMismatch", "group_size must be positive");
    fb.groups.clear();
    fb.group_size = group_size;
    const int q = fb.filter_count();
    if (q % group_size != 0) warn("filter count " + std::to_string(q) + " is not divisible by group size " + std::to_string(group_size));
    for (int begin = 0; begin < q; begin += group_size)
        fb.groups.emplace_back(begin, std::min(begin + group_size, q));
    return fb;
}

/// Write one min-max normalized PGM per slim filter (filter_000.pgm, ...).
/// Constant filters export as uniform 128 gray.
inline void export_filters(const FilterBank& fb, const fs::path& dir) {
    if (fb.slim.empty()) fail("IoError", "filter bank has no slim filters; call slim() first");
    std::error_code ec;
    fs::create_directories(dir, ec);
    for (std::size_t j = 0; j < fb.slim.size(); ++j) {
        const Eigen::MatrixXd& f = fb.slim[j];
        const double lo = f.minCoeff(), hi = f.maxCoeff();
        std::ostringstream name;
        name << "filter_" << std::setw(3) << std::setfill('0') << j << ".pgm";
        std::ofstream os(dir / name.str(), std::ios::binary);
        if (!os) fail("IoError", "cannot write " + (dir / name.str()).string());
        os << "P5\n" << f.cols() << " " << f.rows() << "\n255\n";
        for (Eigen::Index y = 0; y < f.rows(); ++y)
            for (Eigen::Index x = 0; x < f.cols(); ++x) {
                unsigned char px = 128;
                if (hi > lo) px = static_cast<unsigned char>(std::clamp<long>(std::lround((f(y, x) - lo) / (hi - lo) * 255.0), 0L, 255L));
                os.put(static_cast<char>(px));
            }
        if (!os) fail("IoError", "short write exporting filter " + std::to_string(j));
    }
}

// ---------------------------------------------------------------------------
// Model file `filters.slf`: magic "SLF1"; u32 LE h_s, w_s, d_s, q, group_size,
// n_dropped; f64 LE arrays: whitener mean (state_dim), whitener projection
// (m x state_dim, row-major), W (state_dim x q, column-major), b (q),
// eigenvalues (q). m is recovered from the file size.

inline void save_filter_bank(const FilterBank& fb, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("IoError", "cannot write " + path.string());
    write_magic(os, "SLF1");
    write_u32(os, static_cast<std::uint32_t>(fb.spec.h_s));
    write_u32(os, static_cast<std::uint32_t>(fb.spec.w_s));
    write_u32(os, static_cast<std::uint32_t>(fb.spec.d_s));
    write_u32(os, static_cast<std::uint32_t>(fb.filter_count()));
    write_u32(os, static_cast<std::uint32_t>(fb.group_size));
    write_u32(os, static_cast<std::uint32_t>(fb.n_dropped));
    for (Eigen::Index i = 0; i < fb.whitener.mean.size(); ++i) write_f64(os, fb.whitener.mean(i));
    for (Eigen::Index i = 0; i < fb.whitener.projection.rows(); ++i)
        for (Eigen::Index j = 0; j < fb.whitener.projection.cols(); ++j) write_f64(os, fb.whitener.projection(i, j));
    for (Eigen::Index j = 0; j < fb.W.cols(); ++j)
        for (Eigen::Index i = 0; i < fb.W.rows(); ++i) write_f64(os, fb.W(i, j));
    for (Eigen::Index i = 0; i < fb.b.size(); ++i) write_f64(os, fb.b(i));
    for (Eigen::Index i = 0; i < fb.eigenvalues.size(); ++i) write_f64(os, fb.eigenvalues(i));
    if (!os) fail("IoError", "short write to " + path.string());
}

inline FilterBank load_filter_bank(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("CorruptHeader", "cannot open " + path.string());
    expect_magic(is, "SLF1", path.string());
    FilterBank fb;
    fb.spec.h_s = static_cast<int>(read_u32(is));
    fb.spec.w_s = static_cast<int>(read_u32(is));
    fb.spec.d_s = static_cast<int>(read_u32(is));
    const int q = static_cast<int>(read_u32(is));
    fb.group_size = static_cast<int>(read_u32(is));
    fb.n_dropped = static_cast<int>(read_u32(is));
    fb.spec.l_s = fb.spec.d_s;  // placeholder until corrected below

    const int dim = fb.spec.h_s * fb.spec.w_s * fb.spec.d_s;
    // infer m from the remaining payload:
    //   doubles = dim + m*dim + dim*q + 2q
    const auto header_end = is.tellg();
    is.seekg(0, std::ios::end);
    const auto file_end = is.tellg();
    is.seekg(header_end);
    const std::int64_t doubles = (file_end - header_end) / 8;
    const std::int64_t m64 = (doubles - dim - static_cast<std::int64_t>(dim) * q - 2 * q) / dim;
    if (m64 <= 0 || (doubles - dim - static_cast<std::int64_t>(dim) * q - 2 * q) % dim != 0)
        fail("CorruptHeader", "inconsistent payload size in " + path.string());
    const int m = static_cast<int>(m64);

    fb.whitener.mean.resize(dim);
    for (int i = 0; i < dim; ++i) fb.whitener.mean(i) = read_f64(is);
    fb.whitener.projection.resize(m, dim);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < dim; ++j) fb.whitener.projection(i, j) = read_f64(is);
    fb.W.resize(dim, q);
    for (int j = 0; j < q; ++j)
        for (int i = 0; i < dim; ++i) fb.W(i, j) = read_f64(is);
    fb.b.resize(q);
    for (int i = 0; i < q; ++i) fb.b(i) = read_f64(is);
    fb.eigenvalues.resize(q);
    for (int i = 0; i < q; ++i) fb.eigenvalues(i) = read_f64(is);
    if (!is) fail("CorruptHeader", "truncated payload in " + path.string());

    // l_s is not stored (convolution only needs the elemental geometry); keep
    // a consistent spec for state_dim computations.
    fb.spec.l_s = fb.spec.d_s;
    fb = slim(std::move(fb));
    if (fb.group_size > 0) fb = group_filters(std::move(fb), fb.group_size);
    return fb;
}

}  // namespace mrsfa
