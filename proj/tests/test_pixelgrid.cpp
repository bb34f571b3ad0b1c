// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "combforge/network.hpp"
#include "combforge/pixelgrid.hpp"
#include "combforge/rng.hpp"

using namespace combforge;
using namespace combforge::pixelgrid;
using netalg::cxd;

namespace {

// Independent connectivity check: union-find over metal cells with the same
// 8-neighbor adjacency.
bool union_find_connected(const PixelLayout& g) {
    const int n = g.rows * g.cols;
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    auto unite = [&](int a, int b) { parent[find(a)] = find(b); };

    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (!g.metal(r, c)) continue;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= g.rows || nc < 0 || nc >= g.cols) continue;
                    if (g.metal(nr, nc)) unite(g.index(r, c), g.index(nr, nc));
                }
            }
        }
    }
    const int root = find(g.index(g.ports[0].row, g.ports[0].col));
    for (const PortFeed& p : g.ports)
        if (find(g.index(p.row, p.col)) != root) return false;
    return true;
}

netalg::NetworkMatrix random_s4(Rng& rng) {
    std::vector<Eigen::MatrixXcd> mats;
    std::vector<double> freqs{1e9, 2e9};
    for (int fi = 0; fi < 2; ++fi) {
        Eigen::MatrixXcd m(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                m(i, j) = cxd(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        mats.push_back(m);
    }
    return netalg::NetworkMatrix(netalg::MatrixKind::Scattering, freqs, mats);
}

}  // namespace

TEST_CASE("fresh layout places the four feeds at the edge centers") {
    const PixelLayout g = make_layout(15, 15);
    CHECK(g.rows == 15);
    CHECK(g.cols == 15);
    CHECK(g.pixel_size_mm == doctest::Approx(1.8));
    CHECK(g.overlap_fraction == doctest::Approx(0.20));

    const PortFeed& main = g.port(PortRole::Main);
    CHECK(main.edge == Edge::West);
    CHECK(main.row == 7);
    CHECK(main.col == 0);
    const PortFeed& aux = g.port(PortRole::Aux);
    CHECK(aux.edge == Edge::East);
    CHECK(aux.row == 7);
    CHECK(aux.col == 14);
    const PortFeed& out = g.port(PortRole::Output);
    CHECK(out.edge == Edge::South);
    CHECK(out.row == 14);
    CHECK(out.col == 7);
    const PortFeed& spare = g.port(PortRole::Spare);
    CHECK(spare.edge == Edge::North);
    CHECK(spare.row == 0);
    CHECK(spare.col == 7);

    for (const PortFeed& p : g.ports) CHECK(g.metal(p.row, p.col));
    CHECK_THROWS_AS(make_layout(2, 5), std::invalid_argument);
}

TEST_CASE("design space counts every cell") {
    CHECK(design_space_bits(make_layout(15, 15)) == 225);
    CHECK(design_space_bits(make_layout(8, 10)) == 80);
}

TEST_CASE("random layouts are seed-deterministic") {
    const PixelLayout a = random_layout(15, 15, 0.5, 0.15, 42);
    const PixelLayout b = random_layout(15, 15, 0.5, 0.15, 42);
    const PixelLayout c = random_layout(15, 15, 0.5, 0.15, 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
}

TEST_CASE("random layout density follows the requested distribution") {
    Rng rng(7);
    double total = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const PixelLayout g = random_layout(15, 15, 0.5, 0.15, rng);
        int metal = 0;
        for (std::uint8_t v : g.cells) metal += v;
        total += static_cast<double>(metal) / 225.0;
    }
    const double mean = total / trials;
    CHECK(mean > 0.48);
    CHECK(mean < 0.54);  // forced port metal biases slightly above 0.5
}

TEST_CASE("connectivity test agrees with union-find on random layouts") {
    Rng rng(3);
    int connected = 0;
    for (int t = 0; t < 1000; ++t) {
        const double density = rng.uniform(0.2, 0.8);
        const PixelLayout g = random_layout(11, 11, density, 0.05, rng);
        const bool mine = is_connected(g);
        CHECK(mine == union_find_connected(g));
        if (mine) ++connected;
    }
    CHECK(connected > 100);
    CHECK(connected < 900);
}

TEST_CASE("connectivity of hand-built layouts") {
    PixelLayout g = make_layout(5, 5);
    // only the port cells are metal, no path between them
    CHECK_FALSE(is_connected(g));

    // full metal connects everything
    std::fill(g.cells.begin(), g.cells.end(), std::uint8_t{1});
    CHECK(is_connected(g));

    // a single cross through the center connects all four feeds
    PixelLayout cross = make_layout(5, 5);
    for (int i = 0; i < 5; ++i) {
        cross.set(2, i, true);
        cross.set(i, 2, true);
    }
    CHECK(is_connected(cross));

    // diagonal chains count as connected (8-neighbor adjacency)
    PixelLayout diag = make_layout(5, 5);
    diag.set(1, 1, true);
    diag.set(2, 2, true);
    diag.set(3, 3, true);
    diag.set(3, 1, true);
    diag.set(1, 3, true);
    CHECK(is_connected(diag));
}

TEST_CASE("partial connectivity can be required for a port subset") {
    PixelLayout g = make_layout(5, 5);
    for (int i = 0; i < 5; ++i) g.set(2, i, true);  // west-east bar only
    CHECK(is_connected(g, {PortRole::Main, PortRole::Aux}));
    CHECK_FALSE(is_connected(g, {PortRole::Main, PortRole::Output}));
    CHECK_FALSE(is_connected(g));
}

TEST_CASE("symmetry group closes and keeps the feed set") {
    Rng rng(11);
    const PixelLayout g = random_layout(9, 9, 0.5, 0.1, rng);

    CHECK(d4_elements().size() == 8);
    std::set<std::string> images;
    for (D4Element e : d4_elements()) {
        const PixelLayout t = transform_layout(g, e);
        images.insert(to_text(t));
        // transformed feeds still sit on edge centers with metal under them
        for (const PortFeed& p : t.ports) CHECK(t.metal(p.row, p.col));
    }
    // identity must be among the images; a generic layout has 8 distinct ones
    CHECK(images.count(to_text(g)) == 1);
    CHECK(images.size() == 8);

    // four quarter turns come back to the start
    PixelLayout r = g;
    for (int i = 0; i < 4; ++i) r = transform_layout(r, D4Element::Rot90);
    CHECK(r == g);

    // two half turns as well
    CHECK(transform_layout(transform_layout(g, D4Element::Rot180), D4Element::Rot180) == g);

    // mirrors are involutions
    for (D4Element e : {D4Element::MirrorH, D4Element::MirrorV, D4Element::MirrorD,
                        D4Element::MirrorA})
        CHECK(transform_layout(transform_layout(g, e), e) == g);
}

TEST_CASE("port permutations match the geometric moves") {
    // quarter turn clockwise: west->north, east->south, south->west, north->east
    const std::array<int, 4> rot90 = port_permutation(D4Element::Rot90);
    CHECK(rot90 == std::array<int, 4>{2, 3, 1, 0});
    const std::array<int, 4> rot180 = port_permutation(D4Element::Rot180);
    CHECK(rot180 == std::array<int, 4>{1, 0, 3, 2});
    const std::array<int, 4> ident = port_permutation(D4Element::Identity);
    CHECK(ident == std::array<int, 4>{0, 1, 2, 3});
}

TEST_CASE("network transform permutes rows and columns together") {
    Rng rng(5);
    const netalg::NetworkMatrix s = random_s4(rng);
    for (D4Element e : d4_elements()) {
        const std::array<int, 4> p = port_permutation(e);
        const netalg::NetworkMatrix t = transform_network(s, e);
        for (int fi = 0; fi < s.n_freqs(); ++fi)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    CHECK(t.at(fi)(i, j) == s.at(fi)(p[i], p[j]));
    }
}

TEST_CASE("augmentation produces eight records with identity first") {
    Rng rng(13);
    const PixelLayout g = random_layout(9, 9, 0.5, 0.1, rng);
    const netalg::NetworkMatrix s = random_s4(rng);
    const std::vector<AugmentedRecord> recs = augment(g, s);
    REQUIRE(recs.size() == 8);
    CHECK(recs[0].element == D4Element::Identity);
    CHECK(recs[0].layout == g);
    for (const AugmentedRecord& r : recs) {
        CHECK(transform_layout(g, r.element) == r.layout);
    }
}

TEST_CASE("symmetry transforms reject unsuitable grids") {
    CHECK_THROWS_AS(transform_layout(make_layout(9, 11), D4Element::Rot90), NonSquareGrid);
    CHECK_THROWS_AS(transform_layout(make_layout(8, 8), D4Element::Rot90),
                    std::invalid_argument);
}

TEST_CASE("text round-trip preserves every field") {
    Rng rng(17);
    for (int t = 0; t < 100; ++t) {
        const int rows = 3 + static_cast<int>(rng.index(13));
        const int cols = 3 + static_cast<int>(rng.index(13));
        PixelLayout g = random_layout(rows, cols, rng.uniform(0.2, 0.8), 0.1, rng);
        const std::string text = to_text(g);
        const PixelLayout back = from_text(text);
        CHECK(back == g);
    }
}

TEST_CASE("text io through files") {
    const PixelLayout g = random_layout(7, 9, 0.5, 0.1, 21);
    const std::string path = "layout_test.txt";
    save_text(g, path);
    const PixelLayout back = load_text(path);
    std::remove(path.c_str());
    CHECK(back == g);
}

TEST_CASE("malformed layout text is rejected with a location") {
    const std::string good = to_text(make_layout(3, 3));

    // header token without key=value shape
    CHECK_THROWS_AS(from_text("rows"), ParseError);
    // non-numeric dimension
    CHECK_THROWS_AS(from_text("rows=x cols=3 pixel_mm=1.8 overlap=0.2 main=W aux=E "
                              "output=S spare=N\n000\n000\n000\n"),
                    ParseError);
    // bad edge letter
    CHECK_THROWS_AS(from_text("rows=3 cols=3 pixel_mm=1.8 overlap=0.2 main=Q aux=E "
                              "output=S spare=N\n000\n000\n000\n"),
                    ParseError);
    // bad cell character, and the error names the spot
    std::string bad_cell = good;
    bad_cell[bad_cell.find('\n') + 2] = 'x';
    try {
        from_text(bad_cell);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
        CHECK(e.col == 2);
    }
    // truncated grid
    const std::string truncated = good.substr(0, good.size() - 4);
    CHECK_THROWS_AS(from_text(truncated), ParseError);
}

TEST_CASE("d4 names round-trip") {
    for (D4Element e : d4_elements()) CHECK(d4_from_name(d4_name(e)) == e);
    CHECK_THROWS_AS(d4_from_name("nonsense"), std::invalid_argument);
}
