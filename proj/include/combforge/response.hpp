// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_RESPONSE_HPP
#define COMBFORGE_RESPONSE_HPP

#include <complex>
#include <vector>

#include "combforge/network.hpp"

namespace combforge::response {

// S11, S12, S22 of the reciprocal combiner 2-port (Main, Aux), sampled on a
// frequency grid. S21 is omitted because the networks here are reciprocal.
struct TwoPortTriple {
    std::vector<double> freqs_hz;
    std::vector<netalg::cxd> s11;
    std::vector<netalg::cxd> s12;
    std::vector<netalg::cxd> s22;

    std::size_t n_freqs() const { return freqs_hz.size(); }
    bool operator==(const TwoPortTriple&) const = default;
};

// Reduce the simulated 4-port (Main, Aux, Output, Spare) to the combiner
// 2-port: the spare port is left open (reflection +1) and the output port is
// terminated in the reference impedance (reflection 0).
netalg::NetworkMatrix reduce_combiner(const netalg::NetworkMatrix& s4);

TwoPortTriple triple_from_two_port(const netalg::NetworkMatrix& s2);

// Flat real vector of length 6 * n_freqs: frequency-major, per frequency
// [Re S11, Im S11, Re S12, Im S12, Re S22, Im S22]. This is the surrogate's
// output layout and the dataset target layout.
std::vector<double> flatten_triple(const TwoPortTriple& triple);
TwoPortTriple unflatten_triple(const std::vector<double>& flat,
                               const std::vector<double>& freqs_hz);

}  // namespace combforge::response

#endif  // COMBFORGE_RESPONSE_HPP
