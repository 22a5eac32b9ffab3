#include <catch2/catch_amalgamated.hpp>

#include "mrsfa/cubes.hpp"
#include "mrsfa/rng.hpp"

using namespace mrsfa;

namespace {

GraySequence random_video(int h, int w, int l, std::uint64_t seed) {
    GraySequence s;
    s.height = h;
    s.width = w;
    s.length = l;
    s.samples.resize(static_cast<std::size_t>(h) * w * l);
    Rng rng(seed);
    for (auto& v : s.samples) v = static_cast<float>(rng.below(256));
    return s;
}

}  // namespace

TEST_CASE("default spec geometry", "[cubes]") {
    CubeSpec spec;  // 7x7x15, d_s = 6
    spec.validate_for_learning();
    REQUIRE(spec.state_dim() == 294);
    REQUIRE(spec.cube_size() == 735u);
    REQUIRE(spec.l_n() == 10);
}

TEST_CASE("sampling count, bounds and determinism", "[cubes]") {
    CubeSpec spec;
    std::vector<GraySequence> vids = {random_video(16, 16, 20, 1), random_video(10, 12, 30, 2)};
    auto cubes = sample_cubes(vids, 500, spec, 99);
    REQUIRE(cubes.size() == 500);
    for (const auto& c : cubes) REQUIRE(c.data.size() == spec.cube_size());

    std::vector<std::array<int, 3>> dims = {{16, 16, 20}, {10, 12, 30}};
    auto p1 = sample_cube_positions(dims, 200, spec, 7);
    auto p2 = sample_cube_positions(dims, 200, spec, 7);
    for (std::size_t i = 0; i < p1.size(); ++i) {
        REQUIRE(p1[i].video == p2[i].video);
        REQUIRE(p1[i].x == p2[i].x);
        REQUIRE(p1[i].y == p2[i].y);
        REQUIRE(p1[i].t == p2[i].t);
        const auto& d = dims[p1[i].video];
        REQUIRE(p1[i].x + spec.w_s <= d[1]);
        REQUIRE(p1[i].y + spec.h_s <= d[0]);
        REQUIRE(p1[i].t + spec.l_s <= d[2]);
    }
}

TEST_CASE("single-position video returns itself", "[cubes]") {
    CubeSpec spec;
    std::vector<GraySequence> vids = {random_video(7, 7, 15, 5)};
    auto cubes = sample_cubes(vids, 1, spec, 1);
    REQUIRE(cubes.size() == 1);
    std::size_t k = 0;
    for (int t = 0; t < 15; ++t)
        for (int x = 0; x < 7; ++x)
            for (int y = 0; y < 7; ++y) REQUIRE(cubes[0].data[k++] == vids[0].at(y, x, t));
}

TEST_CASE("too-small videos are skipped, all-skipped errors", "[cubes]") {
    CubeSpec spec;
    std::vector<GraySequence> vids = {random_video(4, 4, 4, 1)};
    REQUIRE_THROWS_AS(sample_cubes(vids, 10, spec, 1), Error);

    vids.push_back(random_video(9, 9, 20, 2));
    auto cubes = sample_cubes(vids, 50, spec, 1);  // small one skipped
    REQUIRE(cubes.size() == 50);
}

TEST_CASE("reformat column layout and overlap", "[cubes]") {
    CubeSpec spec;
    GraySequence v = random_video(7, 7, 15, 3);
    auto cube = sample_cubes({v}, 1, spec, 1)[0];
    CubeSequence seq = reformat(cube, spec);
    REQUIRE(seq.states.cols() == 10);
    REQUIRE(seq.states.rows() == 294);

    // adjacent columns share d_s - 1 frames exactly
    const int frame = spec.h_s * spec.w_s;
    for (int i = 0; i + 1 < spec.l_n(); ++i)
        for (int j = 0; j < (spec.d_s - 1) * frame; ++j)
            REQUIRE(seq.states(frame + j, i) == seq.states(j, i + 1));
}

TEST_CASE("vectorization order is the documented bijection", "[cubes]") {
    CubeSpec spec{2, 3, 4, 2};
    GraySequence v = random_video(2, 3, 4, 8);
    auto cube = extract_cube(v, CubePosition{}, spec);
    // index = y + h*x + h*w*t
    for (int t = 0; t < spec.l_s; ++t)
        for (int x = 0; x < spec.w_s; ++x)
            for (int y = 0; y < spec.h_s; ++y)
                REQUIRE(cube.data[y + spec.h_s * (x + spec.w_s * t)] == v.at(y, x, t));

    CubeSequence seq = reformat(cube, spec);
    REQUIRE(seq.states.cols() == 3);
    for (int i = 0; i < 3; ++i)
        for (int t = 0; t < spec.d_s; ++t)
            for (int x = 0; x < spec.w_s; ++x)
                for (int y = 0; y < spec.h_s; ++y)
                    REQUIRE(seq.states(y + spec.h_s * (x + spec.w_s * t), i) == v.at(y, x, i + t));
}

TEST_CASE("degenerate boundary d_s == l_s", "[cubes]") {
    CubeSpec spec{3, 3, 5, 5};
    spec.validate();
    REQUIRE(spec.l_n() == 1);
    REQUIRE_THROWS_AS(spec.validate_for_learning(), Error);

    GraySequence v = random_video(3, 3, 5, 1);
    auto cube = extract_cube(v, CubePosition{}, spec);
    CubeSequence seq = reformat(cube, spec);
    REQUIRE(seq.states.cols() == 1);
}
