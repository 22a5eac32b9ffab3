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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrsfa/common.hpp"

namespace mrsfa {

namespace fs = std::filesystem;

/// A single-channel video. Samples are 8-bit-derived reals in [0,255],
/// stored frame-major, row-major within a frame. Immutable once built.
struct GraySequence {
    int height = 0;
    int width = 0;
    int length = 0;
    std::vector<float> samples;
    std::string source_id;

    float at(int y, int x, int t) const {
        return samples[static_cast<std::size_t>(t) * height * width + static_cast<std::size_t>(y) * width + x];
    }
    float& at(int y, int x, int t) {
        return samples[static_cast<std::size_t>(t) * height * width + static_cast<std::size_t>(y) * width + x];
    }
    const float* frame(int t) const { return samples.data() + static_cast<std::size_t>(t) * height * width; }
    std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
};

struct VideoManifest {
    struct Entry {
        std::string path;   // relative to the manifest root
        std::string label;
        std::string split;  // optional tag, empty if absent
    };
    std::vector<Entry> entries;
};

inline constexpr int kDefaultMaxFrames = 256;

// ---------------------------------------------------------------------------
// PGM / PPM (binary P5 / P6, maxval 255)

namespace detail {

inline int pnm_next_int(std::istream& is) {
    // skip whitespace and '#' comments
    for (;;) {
        int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int v;
    if (!(is >> v)) fail("CorruptHeader", "malformed PNM header");
    return v;
}

// Appends one decoded frame to `out`; returns (h, w).
inline std::pair<int, int> read_pnm_frame(const fs::path& file, std::vector<float>& out) {
    std::ifstream is(file, std::ios::binary);
    if (!is) fail("CorruptHeader", "cannot open " + file.string());
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    const bool color = (m0 == 'P' && m1 == '6');
    if (!(m0 == 'P' && (m1 == '5' || m1 == '6')))
        fail("UnsupportedFormat", file.string() + " is not binary PGM/PPM");
    const int w = pnm_next_int(is);
    const int h = pnm_next_int(is);
    const int maxval = pnm_next_int(is);
    if (maxval != 255) fail("UnsupportedFormat", "only maxval 255 supported: " + file.string());
    is.get();  // single whitespace after header
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> raw(n * (color ? 3 : 1));
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) fail("CorruptHeader", "truncated pixel data in " + file.string());
    out.reserve(out.size() + n);
    if (color) {
        // ITU-R BT.601 luma
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(static_cast<float>(0.299 * raw[3 * i] + 0.587 * raw[3 * i + 1] + 0.114 * raw[3 * i + 2]));
    } else {
        for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<float>(raw[i]));
    }
    return {h, w};
}

inline long long trailing_number(const std::string& stem) {
    int end = static_cast<int>(stem.size());
    while (end > 0 && !std::isdigit(static_cast<unsigned char>(stem[end - 1]))) --end;
    int begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    if (begin == end) return -1;
    try {
        return std::stoll(stem.substr(begin, end - begin));
    } catch (...) {
        return -1;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// .dtv raw container: magic "DTV1", u32 LE height, width, length, then
// height*width*length bytes, frame-major.

inline void write_dtv(const fs::path& path, const GraySequence& seq) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("IoError", "cannot write " + path.string());
    write_magic(os, "DTV1");
    write_u32(os, static_cast<std::uint32_t>(seq.height));
    write_u32(os, static_cast<std::uint32_t>(seq.width));
    write_u32(os, static_cast<std::uint32_t>(seq.length));
    std::vector<unsigned char> bytes(seq.samples.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const long v = std::lround(seq.samples[i]);
        bytes[i] = static_cast<unsigned char>(std::clamp(v, 0L, 255L));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail("IoError", "short write to " + path.string());
}

inline GraySequence read_dtv(const fs::path& path, int max_frames) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("CorruptHeader", "cannot open " + path.string());
    expect_magic(is, "DTV1", path.string());
    GraySequence seq;
    seq.height = static_cast<int>(read_u32(is));
    seq.width = static_cast<int>(read_u32(is));
    seq.length = static_cast<int>(read_u32(is));
    if (seq.height <= 0 || seq.width <= 0) fail("CorruptHeader", "bad dimensions in " + path.string());
    if (seq.length <= 0) fail("EmptyVideo", path.string());
    if (max_frames > 0) seq.length = std::min(seq.length, max_frames);
    const std::size_t n = static_cast<std::size_t>(seq.height) * seq.width * seq.length;
    std::vector<unsigned char> raw(n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (!is) fail("CorruptHeader", "truncated pixel data in " + path.string());
    seq.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) seq.samples[i] = static_cast<float>(raw[i]);
    seq.source_id = path.filename().string();
    return seq;
}

// ---------------------------------------------------------------------------

/// Load a grayscale video. `path` is either a `.dtv` file or a directory of
/// numerically-named PGM/PPM frames. Color input is converted to BT.601 luma;
/// the sequence is truncated to max_frames.
inline GraySequence load_video(const fs::path& path, const std::string& format_hint = "auto",
                               int max_frames = kDefaultMaxFrames) {
    std::string kind = format_hint;
    if (kind == "auto") {
        if (fs::is_directory(path)) kind = "frames";
        else if (path.extension() == ".dtv") kind = "dtv";
        else fail("UnsupportedFormat", "cannot infer format of " + path.string());
    }
    if (kind == "dtv") return read_dtv(path, max_frames);
    if (kind != "frames") fail("UnsupportedFormat", "unknown format hint '" + kind + "'");

    if (!fs::is_directory(path)) fail("UnsupportedFormat", path.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
    }
    if (files.empty()) fail("EmptyVideo", "no PGM/PPM frames in " + path.string());
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        const long long na = detail::trailing_number(a.stem().string());
        const long long nb = detail::trailing_number(b.stem().string());
        if (na != nb) return na < nb;
        return a.filename().string() < b.filename().string();
    });
    if (max_frames > 0 && static_cast<int>(files.size()) > max_frames) files.resize(max_frames);

    GraySequence seq;
    seq.source_id = path.filename().string();
    for (const auto& f : files) {
        auto [h, w] = detail::read_pnm_frame(f, seq.samples);
        if (seq.length == 0) {
            seq.height = h;
            seq.width = w;
        } else if (h != seq.height || w != seq.width) {
            fail("CorruptHeader", "frame size changes mid-sequence in " + path.string());
        }
        ++seq.length;
    }
    return seq;
}

/// Bilinear rescale of every frame (half-pixel centers, clamped borders).
/// New spatial dims are round(scale * dim) with a floor of 1; length is
/// unchanged.
inline GraySequence rescale(const GraySequence& seq, double scale) {
    if (!(scale > 0.0)) fail("DegenerateSize", "scale must be positive");
    const int oh = std::max(1, static_cast<int>(std::lround(scale * seq.height)));
    const int ow = std::max(1, static_cast<int>(std::lround(scale * seq.width)));
    if (oh == seq.height && ow == seq.width) return seq;

    GraySequence out;
    out.height = oh;
    out.width = ow;
    out.length = seq.length;
    out.source_id = seq.source_id;
    out.samples.resize(static_cast<std::size_t>(oh) * ow * seq.length);

    const double ry = static_cast<double>(seq.height) / oh;
    const double rx = static_cast<double>(seq.width) / ow;
    std::vector<int> x0(ow), x1(ow);
    std::vector<double> fx(ow);
    for (int x = 0; x < ow; ++x) {
        double sx = (x + 0.5) * rx - 0.5;
        sx = std::clamp(sx, 0.0, static_cast<double>(seq.width - 1));
        x0[x] = static_cast<int>(sx);
        x1[x] = std::min(x0[x] + 1, seq.width - 1);
        fx[x] = sx - x0[x];
    }
    for (int t = 0; t < seq.length; ++t) {
        const float* src = seq.frame(t);
        float* dst = out.samples.data() + static_cast<std::size_t>(t) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            double sy = (y + 0.5) * ry - 0.5;
            sy = std::clamp(sy, 0.0, static_cast<double>(seq.height - 1));
            const int y0 = static_cast<int>(sy);
            const int y1 = std::min(y0 + 1, seq.height - 1);
            const double gy = sy - y0;
            for (int x = 0; x < ow; ++x) {
                const double v00 = src[y0 * seq.width + x0[x]];
                const double v01 = src[y0 * seq.width + x1[x]];
                const double v10 = src[y1 * seq.width + x0[x]];
                const double v11 = src[y1 * seq.width + x1[x]];
                const double top = v00 + fx[x] * (v01 - v00);
                const double bot = v10 + fx[x] * (v11 - v10);
                dst[y * ow + x] = static_cast<float>(top + gy * (bot - top));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifests

/// Scan a dataset root. layout == "class-subdirs": every subdirectory is a
/// class label containing .dtv files or frame directories. layout ==
/// "csv-index": `root` is a CSV file with columns path,label[,split].
/// Entries come back sorted lexicographically by path.
inline VideoManifest scan_manifest(const fs::path& root, const std::string& layout) {
    VideoManifest m;
    if (layout == "class-subdirs") {
        if (!fs::is_directory(root)) fail("EmptyDataset", root.string() + " is not a directory");
        for (const auto& cls : fs::directory_iterator(root)) {
            if (!cls.is_directory()) continue;
            const std::string label = cls.path().filename().string();
            for (const auto& e : fs::directory_iterator(cls.path())) {
                const bool is_video = (e.is_regular_file() && e.path().extension() == ".dtv") || e.is_directory();
                if (!is_video) continue;
                m.entries.push_back({label + "/" + e.path().filename().string(), label, ""});
            }
        }
    } else if (layout == "csv-index") {
        std::ifstream is(root);
        if (!is) fail("EmptyDataset", "cannot open " + root.string());
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::stringstream ss(line);
            std::string path, label, split;
            std::getline(ss, path, ',');
            std::getline(ss, label, ',');
            std::getline(ss, split, ',');
            if (path == "path") continue;  // header row
            if (path.empty() || label.empty()) fail("CorruptHeader", "bad manifest row: " + line);
            m.entries.push_back({path, label, split});
        }
    } else {
        fail("UnsupportedFormat", "unknown manifest layout '" + layout + "'");
    }
    if (m.entries.empty()) fail("EmptyDataset", root.string());
    std::sort(m.entries.begin(), m.entries.end(),
              [](const auto& a, const auto& b) { return a.path < b.path; });
    for (std::size_t i = 1; i < m.entries.size(); ++i)
        if (m.entries[i].path == m.entries[i - 1].path)
            fail("DuplicatePath", m.entries[i].path);
    return m;
}

inline void write_manifest_csv(const fs::path& path, const VideoManifest& m) {
    std::ofstream os(path);
    if (!os) fail("IoError", "cannot write " + path.string());
    os << "path,label,split\n";
    for (const auto& e : m.entries) os << e.path << "," << e.label << "," << e.split << "\n";
}

}  // namespace mrsfa
