// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "combforge/network.hpp"
#include "combforge/rng.hpp"
#include "combforge/touchstone.hpp"

using namespace combforge;
using namespace combforge::netalg;

namespace {

Eigen::MatrixXcd random_reciprocal_z(int n, Rng& rng) {
    Eigen::MatrixXcd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a(i, j) = cxd(rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0));
    Eigen::MatrixXcd z = a + a.transpose();
    for (int i = 0; i < n; ++i) z(i, i) += cxd(150.0, 0.0);
    return z;
}

NetworkMatrix wrap_z(const Eigen::MatrixXcd& z, double f = 1e9) {
    return NetworkMatrix(MatrixKind::Impedance, {f}, {z});
}

// Terminating port k (1-based) with load z_load, eliminated directly in the
// impedance domain: Z' = Z_aa - Z_ak (Z_kk + z_load)^-1 Z_ka.
Eigen::MatrixXcd schur_terminate_z(const Eigen::MatrixXcd& z, int port, cxd z_load) {
    const int n = static_cast<int>(z.rows());
    const int k = port - 1;
    Eigen::MatrixXcd out(n - 1, n - 1);
    for (int i = 0, oi = 0; i < n; ++i) {
        if (i == k) continue;
        for (int j = 0, oj = 0; j < n; ++j) {
            if (j == k) continue;
            out(oi, oj) = z(i, j) - z(i, k) * z(k, j) / (z(k, k) + z_load);
            ++oj;
        }
        ++oi;
    }
    return out;
}

Eigen::MatrixXcd drop_port_z(const Eigen::MatrixXcd& z, int port) {
    const int n = static_cast<int>(z.rows());
    const int k = port - 1;
    Eigen::MatrixXcd out(n - 1, n - 1);
    for (int i = 0, oi = 0; i < n; ++i) {
        if (i == k) continue;
        for (int j = 0, oj = 0; j < n; ++j) {
            if (j == k) continue;
            out(oi, oj) = z(i, j);
            ++oj;
        }
        ++oi;
    }
    return out;
}

double max_abs_diff(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("impedance to scattering and back is the identity") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.index(4));
        const Eigen::MatrixXcd z = random_reciprocal_z(n, rng);
        const NetworkMatrix s = z_to_s(wrap_z(z), 50.0);
        const NetworkMatrix z2 = s_to_z(s);
        CHECK(max_abs_diff(z, z2.at(0)) < 1e-10 * z.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("scattering to impedance and back is the identity") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::MatrixXcd z = random_reciprocal_z(3, rng);
        const NetworkMatrix s = z_to_s(wrap_z(z), 50.0);
        const NetworkMatrix s2 = z_to_s(s_to_z(s), 50.0);
        CHECK(max_abs_diff(s.at(0), s2.at(0)) < 1e-10);
    }
}

TEST_CASE("known 1-port conversions") {
    Eigen::MatrixXcd z(1, 1);
    z(0, 0) = cxd(50.0, 0.0);
    CHECK(std::abs(z_to_s(wrap_z(z), 50.0).at(0)(0, 0)) < 1e-15);
    z(0, 0) = cxd(100.0, 0.0);
    CHECK(z_to_s(wrap_z(z), 50.0).at(0)(0, 0).real() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("port termination matches impedance-domain elimination") {
    Rng rng(3);
    const double z0 = 50.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::MatrixXcd z = random_reciprocal_z(4, rng);
        const NetworkMatrix s = z_to_s(wrap_z(z), z0);

        // matched load: gamma = 0 <=> z_load = z0
        {
            const NetworkMatrix red = terminate_port(s, 4, cxd(0.0, 0.0));
            const Eigen::MatrixXcd want =
                z_to_s(wrap_z(schur_terminate_z(z, 4, cxd(z0, 0.0))), z0).at(0);
            CHECK(max_abs_diff(red.at(0), want) < 1e-9);
        }
        // complex partial reflection
        {
            const cxd gamma(0.4, 0.3);
            const cxd z_load = z0 * (1.0 + gamma) / (1.0 - gamma);
            const NetworkMatrix red = terminate_port(s, 2, gamma);
            const Eigen::MatrixXcd want =
                z_to_s(wrap_z(schur_terminate_z(z, 2, z_load)), z0).at(0);
            CHECK(max_abs_diff(red.at(0), want) < 1e-9);
        }
        // open: gamma = +1 <=> row/col deletion in the impedance domain
        {
            const NetworkMatrix red = terminate_port(s, 4, cxd(1.0, 0.0));
            const Eigen::MatrixXcd want = z_to_s(wrap_z(drop_port_z(z, 4)), z0).at(0);
            CHECK(max_abs_diff(red.at(0), want) < 1e-9);
        }
        // short: gamma = -1 <=> z_load = 0
        {
            const NetworkMatrix red = terminate_port(s, 1, cxd(-1.0, 0.0));
            const Eigen::MatrixXcd want =
                z_to_s(wrap_z(schur_terminate_z(z, 1, cxd(0.0, 0.0))), z0).at(0);
            CHECK(max_abs_diff(red.at(0), want) < 1e-9);
        }
    }
}

TEST_CASE("termination order does not matter") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXcd z = random_reciprocal_z(4, rng);
        const NetworkMatrix s = z_to_s(wrap_z(z), 50.0);
        const cxd ga(1.0, 0.0);
        const cxd gb(0.0, 0.0);
        // removing port 4 first leaves port 3 at index 3; removing port 3
        // first shifts port 4 down to index 3
        const NetworkMatrix ab = terminate_port(terminate_port(s, 4, ga), 3, gb);
        const NetworkMatrix ba = terminate_port(terminate_port(s, 3, gb), 3, ga);
        CHECK(max_abs_diff(ab.at(0), ba.at(0)) < 1e-12);
    }
}

TEST_CASE("resonant termination is rejected") {
    // S with S_kk = 1 so a full open at that port blows up the feedback term
    Eigen::MatrixXcd s(2, 2);
    s << cxd(0.2, 0.0), cxd(0.5, 0.0), cxd(0.5, 0.0), cxd(1.0, 0.0);
    const NetworkMatrix nm(MatrixKind::Scattering, {1e9}, {s});
    CHECK_THROWS_AS(terminate_port(nm, 2, cxd(1.0, 0.0)), ResonantTermination);
}

TEST_CASE("identity scattering has no impedance representation") {
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Identity(2, 2);
    const NetworkMatrix nm(MatrixKind::Scattering, {1e9}, {s});
    CHECK_THROWS_AS(s_to_z(nm), SingularReflection);
}

TEST_CASE("losslessness residual") {
    Eigen::Matrix2cd z;
    SUBCASE("ideal quarter-wave inverter is lossless") {
        z << cxd(0.0, 0.0), cxd(0.0, 35.0), cxd(0.0, 35.0), cxd(0.0, 0.0);
        CHECK(losslessness_residual(z) < 1e-15);
    }
    SUBCASE("published rounded combiner matrix sits near zero") {
        z << cxd(1.35, 6.94), cxd(-5.37, 14.02), cxd(-5.37, 14.02), cxd(21.27, 16.10);
        CHECK(losslessness_residual(z) == doctest::Approx(0.004263).epsilon(1e-3));
    }
    SUBCASE("uncoupled resistors are maximally lossy") {
        z << cxd(50.0, 0.0), cxd(0.0, 0.0), cxd(0.0, 0.0), cxd(50.0, 0.0);
        CHECK(losslessness_residual(z) == doctest::Approx(1.0));
    }
    SUBCASE("asymmetric input is rejected") {
        z << cxd(1.0, 0.0), cxd(2.0, 0.0), cxd(3.0, 0.0), cxd(4.0, 0.0);
        CHECK_THROWS_AS(losslessness_residual(z), NonReciprocalInput);
    }
}

TEST_CASE("constructor validation") {
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(2, 2);
    CHECK_THROWS_AS(NetworkMatrix(MatrixKind::Impedance, {2e9, 1e9}, {m, m}),
                    std::invalid_argument);
    CHECK_THROWS_AS(NetworkMatrix(MatrixKind::Impedance, {1e9, 1e9}, {m, m}),
                    std::invalid_argument);
    CHECK_THROWS_AS(NetworkMatrix(MatrixKind::Impedance, {1e9}, {m, m}),
                    std::invalid_argument);
    CHECK_THROWS_AS(NetworkMatrix(MatrixKind::Scattering, {1e9}, {m}, -50.0),
                    std::invalid_argument);
}

TEST_CASE("reciprocity check") {
    Rng rng(5);
    const Eigen::MatrixXcd z = random_reciprocal_z(3, rng);
    CHECK(wrap_z(z).is_reciprocal());
    Eigen::MatrixXcd bad = z;
    bad(0, 1) += cxd(1.0, 0.0);
    CHECK_FALSE(wrap_z(bad).is_reciprocal());
}

TEST_CASE("json round-trip") {
    Rng rng(6);
    const Eigen::MatrixXcd z1 = random_reciprocal_z(2, rng);
    const Eigen::MatrixXcd z2 = random_reciprocal_z(2, rng);
    const NetworkMatrix s =
        z_to_s(NetworkMatrix(MatrixKind::Impedance, {1e9, 2e9}, {z1, z2}), 50.0);
    const std::string path = "nm_roundtrip.json";
    save_json(s, path);
    const NetworkMatrix back = load_json(path);
    std::remove(path.c_str());
    REQUIRE(back.kind() == MatrixKind::Scattering);
    REQUIRE(back.n_freqs() == 2);
    CHECK(back.z_ref() == s.z_ref());
    CHECK(max_abs_diff(back.at(0), s.at(0)) < 1e-12);
    CHECK(max_abs_diff(back.at(1), s.at(1)) < 1e-12);
}

TEST_CASE("touchstone round-trip in both formats") {
    Rng rng(7);
    std::vector<double> freqs{2.55e9, 2.75e9, 2.95e9};
    std::vector<Eigen::MatrixXcd> mats;
    for (size_t i = 0; i < freqs.size(); ++i) mats.push_back(random_reciprocal_z(4, rng));
    const NetworkMatrix s =
        z_to_s(NetworkMatrix(MatrixKind::Impedance, freqs, mats), 50.0);

    for (TouchstoneFormat fmt : {TouchstoneFormat::RealImag, TouchstoneFormat::MagnitudeAngle}) {
        const std::string path = "roundtrip.s4p";
        write_touchstone(s, path, fmt);
        const NetworkMatrix back = read_touchstone(path);
        std::remove(path.c_str());
        REQUIRE(back.n_ports() == 4);
        REQUIRE(back.n_freqs() == 3);
        for (int fi = 0; fi < 3; ++fi) {
            CHECK(back.freqs_hz()[fi] == doctest::Approx(freqs[fi]).epsilon(1e-9));
            CHECK(max_abs_diff(back.at(fi), s.at(fi)) < 1e-9);
        }
    }
}

TEST_CASE("touchstone two-port ordering survives a round-trip") {
    Rng rng(8);
    const Eigen::MatrixXcd z = random_reciprocal_z(2, rng);
    Eigen::MatrixXcd zn = z;
    zn(0, 1) += cxd(5.0, -3.0);  // deliberately non-reciprocal so S12 != S21
    const NetworkMatrix s = z_to_s(wrap_z(zn), 50.0);
    const std::string path = "roundtrip.s2p";
    write_touchstone(s, path);
    const NetworkMatrix back = read_touchstone(path);
    std::remove(path.c_str());
    CHECK(max_abs_diff(back.at(0), s.at(0)) < 1e-9);
}

TEST_CASE("touchstone parse errors carry the line number") {
    const std::string path = "broken.s2p";
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("# GHz S RI R 50\n1.0 0.1 0.2 0.3\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_touchstone(path), TouchstoneParseError);
    std::remove(path.c_str());
}
