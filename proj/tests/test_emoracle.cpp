// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "combforge/emoracle.hpp"
#include "combforge/network.hpp"
#include "combforge/pixelgrid.hpp"
#include "combforge/response.hpp"
#include "combforge/rng.hpp"

using namespace combforge;
using namespace combforge::emoracle;
using pixelgrid::PixelLayout;

namespace {

std::vector<double> three_freqs() { return {2.55e9, 2.75e9, 2.95e9}; }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("isolated feeds look like opens") {
    // nothing but the four port cells; without shunt capacitance each feed
    // sees only the tiny leakage conductance, i.e. a megaohm to ground
    PixelLayout g = pixelgrid::make_layout(9, 9);
    OracleParams p;
    p.shunt_capacitance_per_cell = 0.0;
    const netalg::NetworkMatrix s = simulate(g, three_freqs(), p);
    for (int fi = 0; fi < s.n_freqs(); ++fi) {
        for (int i = 0; i < 4; ++i) {
            CHECK(std::abs(s.at(fi)(i, i) - netalg::cxd(1.0, 0.0)) < 1e-3);
            for (int j = 0; j < 4; ++j)
                if (i != j) CHECK(std::abs(s.at(fi)(i, j)) < 1e-6);
        }
    }
}

TEST_CASE("full metal sheet couples every pair of ports") {
    PixelLayout g = pixelgrid::make_layout(9, 9);
    std::fill(g.cells.begin(), g.cells.end(), std::uint8_t{1});
    const netalg::NetworkMatrix s = simulate(g, three_freqs(), OracleParams{});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) CHECK(std::abs(s.at(1)(i, j)) > 1e-3);
}

TEST_CASE("simulated networks are reciprocal and passive") {
    Rng rng(2);
    const OracleParams params;
    for (int t = 0; t < 25; ++t) {
        const PixelLayout g = pixelgrid::random_layout(9, 9, 0.5, 0.15, rng);
        const netalg::NetworkMatrix s = simulate(g, three_freqs(), params);
        CHECK(s.is_reciprocal(1e-9));
        for (int fi = 0; fi < s.n_freqs(); ++fi) {
            const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(s.at(fi));
            CHECK(svd.singularValues()(0) <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("lossless settings give a unitary scattering matrix") {
    Rng rng(3);
    OracleParams p;
    p.series_resistance_per_cell = 0.0;
    p.shunt_conductance_per_cell = 0.0;
    for (int t = 0; t < 5; ++t) {
        const PixelLayout g = pixelgrid::random_layout(9, 9, 0.6, 0.1, rng);
        const netalg::NetworkMatrix s = simulate(g, three_freqs(), p);
        for (int fi = 0; fi < s.n_freqs(); ++fi) {
            const Eigen::MatrixXcd gram = s.at(fi).adjoint() * s.at(fi);
            CHECK((gram - Eigen::MatrixXcd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("losses strictly shrink the singular values") {
    PixelLayout g = pixelgrid::make_layout(9, 9);
    std::fill(g.cells.begin(), g.cells.end(), std::uint8_t{1});
    OracleParams lossy;
    lossy.series_resistance_per_cell = 0.5;
    const netalg::NetworkMatrix s = simulate(g, three_freqs(), lossy);
    for (int fi = 0; fi < s.n_freqs(); ++fi) {
        const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(s.at(fi));
        CHECK(svd.singularValues()(0) < 1.0 - 1e-6);
    }
}

TEST_CASE("simulation commutes with the symmetry group") {
    Rng rng(5);
    const OracleParams params;
    const PixelLayout g = pixelgrid::random_layout(9, 9, 0.5, 0.15, rng);
    const netalg::NetworkMatrix s = simulate(g, three_freqs(), params);
    for (pixelgrid::D4Element e : pixelgrid::d4_elements()) {
        const netalg::NetworkMatrix direct =
            simulate(pixelgrid::transform_layout(g, e), three_freqs(), params);
        const netalg::NetworkMatrix permuted = pixelgrid::transform_network(s, e);
        for (int fi = 0; fi < s.n_freqs(); ++fi)
            CHECK((direct.at(fi) - permuted.at(fi)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("a half-turn symmetric layout swaps ports invisibly") {
    PixelLayout g = pixelgrid::make_layout(9, 9);
    // center cross is Rot180-symmetric
    for (int i = 0; i < 9; ++i) {
        g.set(4, i, true);
        g.set(i, 4, true);
    }
    REQUIRE(pixelgrid::transform_layout(g, pixelgrid::D4Element::Rot180) == g);
    const netalg::NetworkMatrix s = simulate(g, three_freqs(), OracleParams{});
    const std::array<int, 4> p =
        pixelgrid::port_permutation(pixelgrid::D4Element::Rot180);
    for (int fi = 0; fi < s.n_freqs(); ++fi)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                CHECK(std::abs(s.at(fi)(i, j) - s.at(fi)(p[i], p[j])) < 1e-9);
}

TEST_CASE("floating mesh with no ground return is singular") {
    PixelLayout g = pixelgrid::make_layout(9, 9);
    std::fill(g.cells.begin(), g.cells.end(), std::uint8_t{1});
    OracleParams p;
    p.shunt_conductance_per_cell = 0.0;
    CHECK_THROWS_AS(simulate(g, std::vector<double>{0.0}, p), SingularMesh);
}

TEST_CASE("oracle parameter validation") {
    OracleParams p;
    p.series_inductance_per_cell = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = OracleParams{};
    p.series_resistance_per_cell = -1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = OracleParams{};
    p.z_ref = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = OracleParams{};
    p.diagonal_impedance_scale = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    // zero loss terms are allowed
    p = OracleParams{};
    p.series_resistance_per_cell = 0.0;
    p.shunt_conductance_per_cell = 0.0;
    p.shunt_capacitance_per_cell = 0.0;
    p.validate();
}

TEST_CASE("frequency grid generates inclusive endpoints") {
    FrequencyGrid fg;
    const std::vector<double> pts = fg.points();
    REQUIRE(pts.size() == 13);
    CHECK(pts.front() == doctest::Approx(2.55e9));
    CHECK(pts.back() == doctest::Approx(2.95e9));
    for (size_t i = 1; i < pts.size(); ++i)
        CHECK(pts[i] - pts[i - 1] == doctest::Approx((2.95e9 - 2.55e9) / 12.0));

    FrequencyGrid bad;
    bad.n_points = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    FrequencyGrid single;
    single.n_points = 1;
    CHECK(single.points() == std::vector<double>{single.start_hz});
    bad = FrequencyGrid{};
    bad.stop_hz = bad.start_hz;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("dataset records carry the reduced response") {
    DatasetConfig cfg;
    cfg.n_samples = 2;
    cfg.rows = 9;
    cfg.cols = 9;
    cfg.jobs = 1;
    const std::string path = "ds_reduced.jsonl";
    generate_dataset(cfg, path);
    const std::vector<DatasetRecord> recs = load_dataset(path);
    std::remove(path.c_str());
    REQUIRE(recs.size() == 16);

    // re-derive the first record's response from its layout text
    const DatasetRecord& r = recs[0];
    REQUIRE(r.freqs_hz.size() == 13);
    REQUIRE(r.s_params_real_imag_flat.size() == 78);
    const PixelLayout g = pixelgrid::from_text(r.layout_text);
    const netalg::NetworkMatrix s4 = simulate(g, r.freqs_hz, cfg.oracle);
    const std::vector<double> want = response::flatten_triple(
        response::triple_from_two_port(response::reduce_combiner(s4)));
    REQUIRE(want.size() == r.s_params_real_imag_flat.size());
    for (size_t i = 0; i < want.size(); ++i)
        CHECK(r.s_params_real_imag_flat[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("odd square grids expand eightfold") {
    CHECK(records_per_structure(15, 15) == 8);
    CHECK(records_per_structure(9, 9) == 8);
    CHECK(records_per_structure(8, 8) == 1);
    CHECK(records_per_structure(9, 11) == 1);

    DatasetConfig cfg;
    cfg.n_samples = 4;
    cfg.rows = 8;
    cfg.cols = 8;
    cfg.jobs = 2;
    const std::string path = "ds_even.jsonl";
    const DatasetStats stats = generate_dataset(cfg, path);
    const std::vector<DatasetRecord> recs = load_dataset(path);
    std::remove(path.c_str());
    CHECK(stats.n_structures == 4);
    CHECK(stats.n_records == 4);
    CHECK(recs.size() == 4);
    for (const DatasetRecord& r : recs)
        CHECK(r.augment_element == pixelgrid::d4_name(pixelgrid::D4Element::Identity));
}

TEST_CASE("dataset generation is byte-identical across runs and thread counts") {
    DatasetConfig cfg;
    cfg.n_samples = 6;
    cfg.rows = 9;
    cfg.cols = 9;
    cfg.base_seed = 77;

    cfg.jobs = 1;
    generate_dataset(cfg, "ds_a.jsonl");
    cfg.jobs = 4;
    generate_dataset(cfg, "ds_b.jsonl");
    const std::string a = slurp("ds_a.jsonl");
    const std::string b = slurp("ds_b.jsonl");
    std::remove("ds_a.jsonl");
    std::remove("ds_b.jsonl");
    REQUIRE_FALSE(a.empty());
    CHECK(a == b);
}

TEST_CASE("different base seeds give different datasets") {
    DatasetConfig cfg;
    cfg.n_samples = 2;
    cfg.rows = 9;
    cfg.cols = 9;
    cfg.base_seed = 1;
    generate_dataset(cfg, "ds_s1.jsonl");
    cfg.base_seed = 2;
    generate_dataset(cfg, "ds_s2.jsonl");
    const std::string a = slurp("ds_s1.jsonl");
    const std::string b = slurp("ds_s2.jsonl");
    std::remove("ds_s1.jsonl");
    std::remove("ds_s2.jsonl");
    CHECK(a != b);
}

TEST_CASE("every stored layout is connected") {
    DatasetConfig cfg;
    cfg.n_samples = 10;
    cfg.rows = 9;
    cfg.cols = 9;
    cfg.base_seed = 5;
    const std::string path = "ds_conn.jsonl";
    const DatasetStats stats = generate_dataset(cfg, path);
    const std::vector<DatasetRecord> recs = load_dataset(path);
    std::remove(path.c_str());
    REQUIRE(recs.size() == 80);
    for (const DatasetRecord& r : recs)
        CHECK(pixelgrid::is_connected(pixelgrid::from_text(r.layout_text)));
    CHECK(stats.rejection_rate > 0.0);
    CHECK(stats.rejection_rate < 1.0);
    CHECK(stats.elapsed_s >= 0.0);
}

TEST_CASE("hopeless density raises connectivity starvation") {
    DatasetConfig cfg;
    cfg.n_samples = 1;
    cfg.rows = 15;
    cfg.cols = 15;
    cfg.density_mean = 0.05;
    cfg.density_std = 0.0;
    CHECK_THROWS_AS(generate_dataset(cfg, "ds_starved.jsonl"), ConnectivityStarvation);
    std::remove("ds_starved.jsonl");
}

TEST_CASE("record json line round-trip") {
    Rng rng(9);
    const PixelLayout g = pixelgrid::random_layout(9, 9, 0.5, 0.1, rng);
    const netalg::NetworkMatrix s4 = simulate(g, three_freqs(), OracleParams{});
    DatasetRecord rec;
    rec.layout_text = pixelgrid::to_text(g);
    rec.freqs_hz = three_freqs();
    rec.s_params_real_imag_flat = response::flatten_triple(
        response::triple_from_two_port(response::reduce_combiner(s4)));
    rec.seed = 123;
    rec.augment_element = pixelgrid::d4_name(pixelgrid::D4Element::MirrorD);

    const std::string line = record_to_json_line(rec);
    CHECK(line.find('\n') == std::string::npos);
    const DatasetRecord back = record_from_json_line(line);
    CHECK(back.layout_text == rec.layout_text);
    CHECK(back.freqs_hz == rec.freqs_hz);
    CHECK(back.s_params_real_imag_flat == rec.s_params_real_imag_flat);
    CHECK(back.seed == 123);
    CHECK(back.augment_element == rec.augment_element);

    CHECK_THROWS_AS(record_from_json_line("{not json"), std::invalid_argument);
}

TEST_CASE("dataset stats serialization") {
    DatasetStats stats{10, 80, 0.5, 1.25};
    const std::string path = "stats_test.json";
    save_stats(stats, path);
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::remove(path.c_str());
    CHECK(content.find("\"n_structures\"") != std::string::npos);
    CHECK(content.find("80") != std::string::npos);
}

TEST_CASE("dataset config validation") {
    DatasetConfig cfg;
    cfg.n_samples = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = DatasetConfig{};
    cfg.density_std = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = DatasetConfig{};
    cfg.rows = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
