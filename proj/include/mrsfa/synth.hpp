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

#include "mrsfa/common.hpp"
#include "mrsfa/rng.hpp"
#include "mrsfa/video.hpp"

namespace mrsfa {

/// One synthetic dynamic-texture class.
struct GeneratorConfig {
    enum class Type { Grating, Flicker, Blobs };
    Type type = Type::Grating;
    std::string name;

    // grating: orientation, spatial frequency (cycles/px) and drift speed
    // (px/frame). 0.16 cycles/px puts an integer number of cycles across a
    // 50 px frame, which keeps the per-frame mean constant.
    double orientation_deg = 0.0;
    double spatial_freq = 0.16;
    double speed = 0.5;
    double amplitude = 55.0;

    // flicker: AR(1) temporal correlation of spatially-white noise
    double temporal_corr = 0.9;

    // blobs: spawn density (blobs per 400 px^2 of frame area)
    double blob_rate = 1.0;
};

struct SynthSpec {
    std::vector<GeneratorConfig> classes;
    int videos_per_class = 20;
    int height = 50, width = 50, length = 50;
    double noise_sigma = 5.0;
    std::uint64_t seed = 1337;

    void validate() const {
        if (classes.size() < 2) fail("DimMismatch", "need at least 2 classes");
        if (noise_sigma < 0.0) fail("DimMismatch", "noise_sigma must be nonnegative");
        if (videos_per_class <= 0 || height <= 0 || width <= 0 || length <= 0)
            fail("DimMismatch", "spec counts must be positive");
    }
};

/// The bundled 6-class benchmark: gratings at {0, 90} deg x speeds
/// {0.5, 2.0} px/frame, temporally correlated flicker noise, and boiling
/// blobs. Speed pairs share every other parameter, so they are separable
/// only through temporal structure.
inline SynthSpec default_benchmark_spec() {
    SynthSpec spec;
    const auto grating = [](const std::string& name, double deg, double speed) {
        GeneratorConfig g;
        g.type = GeneratorConfig::Type::Grating;
        g.name = name;
        g.orientation_deg = deg;
        g.speed = speed;
        return g;
    };
    spec.classes.push_back(grating("grating000_slow", 0.0, 0.5));
    spec.classes.push_back(grating("grating000_fast", 0.0, 2.0));
    spec.classes.push_back(grating("grating090_slow", 90.0, 0.5));
    spec.classes.push_back(grating("grating090_fast", 90.0, 2.0));
    GeneratorConfig flicker;
    flicker.type = GeneratorConfig::Type::Flicker;
    flicker.name = "flicker";
    spec.classes.push_back(flicker);
    GeneratorConfig blobs;
    blobs.type = GeneratorConfig::Type::Blobs;
    blobs.name = "blobs";
    spec.classes.push_back(blobs);
    return spec;
}

namespace detail {

inline GraySequence synth_video(const GeneratorConfig& cfg, const SynthSpec& spec, Rng rng) {
    GraySequence v;
    v.height = spec.height;
    v.width = spec.width;
    v.length = spec.length;
    v.samples.resize(static_cast<std::size_t>(spec.height) * spec.width * spec.length);

    const auto store = [&](int y, int x, int t, double value) {
        if (spec.noise_sigma > 0.0) value += spec.noise_sigma * rng.gaussian();
        v.at(y, x, t) = static_cast<float>(std::clamp(value, 0.0, 255.0));
    };

    switch (cfg.type) {
        case GeneratorConfig::Type::Grating: {
            const double theta = cfg.orientation_deg * 3.14159265358979323846 / 180.0;
            const double cx = std::cos(theta), sy = std::sin(theta);
            const double phase0 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            const double omega = 2.0 * 3.14159265358979323846 * cfg.spatial_freq;
            for (int t = 0; t < spec.length; ++t)
                for (int y = 0; y < spec.height; ++y)
                    for (int x = 0; x < spec.width; ++x) {
                        const double u = x * cx + y * sy - cfg.speed * t;
                        store(y, x, t, 127.5 + cfg.amplitude * std::cos(omega * u + phase0));
                    }
            break;
        }
        case GeneratorConfig::Type::Flicker: {
            const double rho = cfg.temporal_corr;
            const double drive = std::sqrt(std::max(0.0, 1.0 - rho * rho));
            std::vector<double> field(static_cast<std::size_t>(spec.height) * spec.width);
            for (auto& z : field) z = rng.gaussian();
            for (int t = 0; t < spec.length; ++t) {
                for (std::size_t i = 0; i < field.size(); ++i) {
                    if (t > 0) field[i] = rho * field[i] + drive * rng.gaussian();
                }
                for (int y = 0; y < spec.height; ++y)
                    for (int x = 0; x < spec.width; ++x)
                        store(y, x, t, 127.5 + 45.0 * field[static_cast<std::size_t>(y) * spec.width + x]);
            }
            break;
        }
        case GeneratorConfig::Type::Blobs: {
            // fixed blob count with evenly staggered life-cycle phases: the
            // sum of sin^2 envelopes is constant, keeping the frame mean flat
            const int n_blobs = std::max(3, static_cast<int>(std::lround(
                                                cfg.blob_rate * spec.height * spec.width / 400.0)));
            const int period = 12 + static_cast<int>(rng.below(9));
            struct Blob {
                double cx, cy, radius, amp;
            };
            std::vector<Blob> blobs(static_cast<std::size_t>(n_blobs));
            const auto respawn = [&](Blob& b) {
                b.cx = rng.uniform(0.0, spec.width);
                b.cy = rng.uniform(0.0, spec.height);
                b.radius = rng.uniform(3.0, 7.0);
                b.amp = rng.uniform(35.0, 60.0);
            };
            for (auto& b : blobs) respawn(b);
            std::vector<double> bump(static_cast<std::size_t>(spec.height) * spec.width);
            for (int t = 0; t < spec.length; ++t) {
                std::fill(bump.begin(), bump.end(), 0.0);
                for (int i = 0; i < n_blobs; ++i) {
                    Blob& b = blobs[static_cast<std::size_t>(i)];
                    const int local = (t + i * period / n_blobs) % period;
                    if (local == 0 && t > 0) respawn(b);
                    const double phase = static_cast<double>(local) / period;
                    const double env = std::sin(3.14159265358979323846 * phase);
                    const double e2 = env * env;
                    const double inv = 1.0 / (2.0 * b.radius * b.radius);
                    for (int y = 0; y < spec.height; ++y)
                        for (int x = 0; x < spec.width; ++x) {
                            const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
                            if (d2 < 9.0 * b.radius * b.radius)
                                bump[static_cast<std::size_t>(y) * spec.width + x] += b.amp * e2 * std::exp(-d2 * inv);
                        }
                }
                for (int y = 0; y < spec.height; ++y)
                    for (int x = 0; x < spec.width; ++x)
                        store(y, x, t, 127.5 - bump[static_cast<std::size_t>(y) * spec.width + x] + 20.0);
            }
            break;
        }
    }
    return v;
}

}  // namespace detail

/// Generate the dataset: deterministic per seed (each video derives its own
/// stream), values clipped to [0, 255], per-video phases/positions
/// randomized within the class.
inline std::pair<std::vector<GraySequence>, VideoManifest> generate(const SynthSpec& spec,
                                                                    unsigned threads = 1) {
    spec.validate();
    const Rng base(spec.seed);
    std::vector<GraySequence> videos(spec.classes.size() * static_cast<std::size_t>(spec.videos_per_class));
    VideoManifest manifest;

    std::vector<std::pair<int, int>> jobs;  // (class, index)
    for (int c = 0; c < static_cast<int>(spec.classes.size()); ++c)
        for (int i = 0; i < spec.videos_per_class; ++i) jobs.emplace_back(c, i);

    parallel_chunks(jobs.size(), 4, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const auto [c, i] = jobs[j];
            Rng rng = base.fork(static_cast<std::uint64_t>(c) * 1000003ULL + static_cast<std::uint64_t>(i));
            videos[j] = detail::synth_video(spec.classes[static_cast<std::size_t>(c)], spec, rng);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "video_%03d.dtv", i);
            videos[j].source_id = spec.classes[static_cast<std::size_t>(c)].name + "/" + buf;
        }
    });
    for (const auto& v : videos)
        manifest.entries.push_back({v.source_id, v.source_id.substr(0, v.source_id.find('/')), ""});
    return {std::move(videos), std::move(manifest)};
}

/// Generate and write the dataset as .dtv files plus manifest.csv under dir.
inline VideoManifest write_dataset(const SynthSpec& spec, const fs::path& dir, unsigned threads = 1) {
    auto [videos, manifest] = generate(spec, threads);
    for (const auto& v : videos) {
        const fs::path out = dir / v.source_id;
        fs::create_directories(out.parent_path());
        write_dtv(out, v);
    }
    write_manifest_csv(dir / "manifest.csv", manifest);
    return manifest;
}

}  // namespace mrsfa
