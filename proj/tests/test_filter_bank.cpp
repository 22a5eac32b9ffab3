#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mrsfa/filter_bank.hpp"
#include "mrsfa/rng.hpp"

using namespace mrsfa;
namespace fs = std::filesystem;

namespace {

// a small random whitener+projection pair with consistent dimensions
std::pair<WhiteningTransform, SlowProjection> random_parts(Rng& rng, const CubeSpec& spec, int m, int q) {
    WhiteningTransform w;
    const int d = spec.state_dim();
    w.mean.resize(d);
    for (int i = 0; i < d; ++i) w.mean(i) = rng.gaussian();
    w.projection.resize(m, d);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) w.projection(i, j) = rng.gaussian();
    SlowProjection p;
    p.U.resize(m, q);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < q; ++j) p.U(i, j) = rng.gaussian();
    for (int j = 0; j < q; ++j) p.U.col(j).normalize();
    p.eigenvalues.resize(q);
    for (int j = 0; j < q; ++j) p.eigenvalues(j) = j * 0.1;
    p.n_dropped = 1;
    return {w, p};
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("mrsfa_fb_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("composed filters reproduce the two-stage map", "[filter_bank]") {
    Rng rng(21);
    CubeSpec spec{3, 3, 8, 2};
    auto [w, p] = random_parts(rng, spec, 5, 4);
    FilterBank fb = compose_filters(w, p, spec);

    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd x(spec.state_dim());
        for (int i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
        Eigen::VectorXd via_filters = fb.W.transpose() * x + fb.b;
        Eigen::VectorXd two_stage = p.U.transpose() * (w.projection * (x - w.mean));
        REQUIRE((via_filters - two_stage).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("zero mean gives zero bias; canonical basis passes through", "[filter_bank]") {
    CubeSpec spec{2, 2, 3, 1};
    WhiteningTransform w;
    w.mean = Eigen::VectorXd::Zero(spec.state_dim());
    w.projection = Eigen::MatrixXd::Identity(spec.state_dim(), spec.state_dim());
    SlowProjection p;
    p.U = Eigen::MatrixXd::Identity(spec.state_dim(), 1);
    p.eigenvalues = Eigen::VectorXd::Zero(1);
    FilterBank fb = compose_filters(w, p, spec);
    REQUIRE(fb.b.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(fb.W.col(0)(0) == 1.0);
    REQUIRE(fb.W.col(0).tail(spec.state_dim() - 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("slim keeps the t = 0 slice and is idempotent", "[filter_bank]") {
    Rng rng(22);
    CubeSpec spec{7, 7, 9, 6};
    auto [w, p] = random_parts(rng, spec, 8, 3);
    FilterBank fb = slim(compose_filters(w, p, spec));
    REQUIRE(fb.slim.size() == 3);
    for (int j = 0; j < 3; ++j) {
        REQUIRE(fb.slim[j].rows() == 7);
        REQUIRE(fb.slim[j].cols() == 7);
        for (int x = 0; x < 7; ++x)
            for (int y = 0; y < 7; ++y) REQUIRE(fb.slim[j](y, x) == fb.W(y + 7 * x, j));
    }
    FilterBank again = slim(fb);
    for (int j = 0; j < 3; ++j) REQUIRE(again.slim[j] == fb.slim[j]);

    // d_s = 1: slim filter covers the full filter
    CubeSpec flat{3, 3, 4, 1};
    auto [w1, p1] = random_parts(rng, flat, 4, 2);
    FilterBank fb1 = slim(compose_filters(w1, p1, flat));
    for (int j = 0; j < 2; ++j)
        for (int x = 0; x < 3; ++x)
            for (int y = 0; y < 3; ++y) REQUIRE(fb1.slim[j](y, x) == fb1.W(y + 3 * x, j));
}

TEST_CASE("grouping covers all filters", "[filter_bank]") {
    Rng rng(23);
    CubeSpec spec{3, 3, 4, 2};
    {
        auto [w, p] = random_parts(rng, spec, 6, 24);
        FilterBank fb = group_filters(compose_filters(w, p, spec), 8);
        REQUIRE(fb.groups.size() == 3);
        REQUIRE(fb.groups[0] == std::make_pair(0, 8));
        REQUIRE(fb.groups[2] == std::make_pair(16, 24));
    }
    {
        auto [w, p] = random_parts(rng, spec, 6, 8);
        FilterBank fb = group_filters(compose_filters(w, p, spec), 8);
        REQUIRE(fb.groups.size() == 1);
    }
    {
        auto [w, p] = random_parts(rng, spec, 6, 9);
        FilterBank fb = group_filters(compose_filters(w, p, spec), 8);
        REQUIRE(fb.groups.size() == 2);
        REQUIRE(fb.groups[1] == std::make_pair(8, 9));
        // partition is a bijection onto 0..q-1
        std::vector<bool> seen(9, false);
        for (auto [b, e] : fb.groups)
            for (int i = b; i < e; ++i) {
                REQUIRE(!seen[static_cast<std::size_t>(i)]);
                seen[static_cast<std::size_t>(i)] = true;
            }
        for (bool s : seen) REQUIRE(s);
    }
}

TEST_CASE("export writes deterministic pgm files", "[filter_bank]") {
    Rng rng(24);
    CubeSpec spec{5, 5, 6, 3};
    auto [w, p] = random_parts(rng, spec, 10, 4);
    FilterBank fb = slim(compose_filters(w, p, spec));
    // make filter 0 constant to hit the min==max rule
    fb.W.col(0).setConstant(0.7);
    fb = slim(std::move(fb));

    auto dir = temp_dir("export");
    export_filters(fb, dir);
    REQUIRE(fs::exists(dir / "filter_000.pgm"));
    REQUIRE(fs::exists(dir / "filter_003.pgm"));

    std::string first = file_bytes(dir / "filter_000.pgm");
    // constant filter: all payload bytes are 128
    const auto header_end = first.find("255\n") + 4;
    for (std::size_t i = header_end; i < first.size(); ++i)
        REQUIRE(static_cast<unsigned char>(first[i]) == 128);

    export_filters(fb, dir);  // re-export
    REQUIRE(file_bytes(dir / "filter_000.pgm") == first);
}

TEST_CASE("slf round trip is bit-exact", "[filter_bank]") {
    Rng rng(25);
    CubeSpec spec{7, 7, 15, 6};
    auto [w, p] = random_parts(rng, spec, 16, 8);
    FilterBank fb = group_filters(slim(compose_filters(w, p, spec)), 8);
    fb.n_dropped = 1;

    auto dir = temp_dir("slf");
    save_filter_bank(fb, dir / "filters.slf");
    FilterBank r = load_filter_bank(dir / "filters.slf");
    REQUIRE(r.spec.h_s == 7);
    REQUIRE(r.spec.w_s == 7);
    REQUIRE(r.spec.d_s == 6);
    REQUIRE(r.filter_count() == 8);
    REQUIRE(r.group_size == 8);
    REQUIRE(r.n_dropped == 1);
    REQUIRE(r.whitener.mean == fb.whitener.mean);
    REQUIRE(r.whitener.projection == fb.whitener.projection);
    REQUIRE(r.W == fb.W);
    REQUIRE(r.b == fb.b);
    REQUIRE(r.eigenvalues == fb.eigenvalues);
    REQUIRE(r.slim.size() == 8);

    save_filter_bank(r, dir / "filters2.slf");
    REQUIRE(file_bytes(dir / "filters.slf") == file_bytes(dir / "filters2.slf"));
}

TEST_CASE("reader rejects unknown magic", "[filter_bank]") {
    auto dir = temp_dir("badmagic");
    {
        std::ofstream os(dir / "bad.slf", std::ios::binary);
        os << "XXXX1234";
    }
    REQUIRE_THROWS_AS(load_filter_bank(dir / "bad.slf"), Error);
}
