// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "combforge/rng.hpp"

using combforge::Rng;

TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (a.uniform() == b.uniform()) ++same;
    CHECK(same < 5);
}

TEST_CASE("uniform stays in [0,1) with the right mean") {
    Rng rng(7);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("bounded uniform respects the interval") {
    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform(-2.0, 3.0);
        REQUIRE(u >= -2.0);
        REQUIRE(u < 3.0);
    }
}

TEST_CASE("normal has the requested moments") {
    Rng rng(3);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal(1.5, 2.0);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(1.5).epsilon(0.02));
    CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("index covers the range without bias") {
    Rng rng(5);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 100000; ++i) {
        const auto k = rng.index(10);
        REQUIRE(k < 10);
        ++counts[static_cast<int>(k)];
    }
    for (int c : counts) {
        CHECK(c > 9000);
        CHECK(c < 11000);
    }
    CHECK_THROWS_AS(static_cast<void>(rng.index(0)), std::invalid_argument);
}

TEST_CASE("bernoulli tracks its probability") {
    Rng rng(9);
    int hits = 0;
    for (int i = 0; i < 100000; ++i)
        if (rng.bernoulli(0.3)) ++hits;
    CHECK(hits / 100000.0 == doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("shuffle permutes without losing elements") {
    Rng rng(13);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> orig = v;
    rng.shuffle(v);
    CHECK(v != orig);
    std::sort(v.begin(), v.end());
    CHECK(v == orig);
}

TEST_CASE("state round-trip resumes the exact stream") {
    Rng rng(21);
    for (int i = 0; i < 37; ++i) rng.uniform();
    rng.normal();  // leaves a cached spare in flight
    const std::string state = rng.state();

    Rng restored(999);
    restored.set_state(state);
    Rng& original = rng;
    for (int i = 0; i < 100; ++i) {
        CHECK(original.normal() == restored.normal());
        CHECK(original.uniform() == restored.uniform());
        CHECK(original.index(17) == restored.index(17));
    }
}
