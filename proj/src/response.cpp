// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/response.hpp"

#include <stdexcept>
#include <string>

#include "combforge/errors.hpp"

namespace combforge::response {

netalg::NetworkMatrix reduce_combiner(const netalg::NetworkMatrix& s4) {
    if (s4.kind() != netalg::MatrixKind::Scattering)
        throw std::invalid_argument("combiner reduction expects scattering parameters");
    if (s4.n_ports() != 4)
        throw std::invalid_argument("combiner reduction expects a 4-port network, got " +
                                    std::to_string(s4.n_ports()) + " ports");
    const netalg::NetworkMatrix spare_open =
        netalg::terminate_port(s4, 4, netalg::cxd(1.0, 0.0));
    return netalg::terminate_port(spare_open, 3, netalg::cxd(0.0, 0.0));
}

TwoPortTriple triple_from_two_port(const netalg::NetworkMatrix& s2) {
    if (s2.kind() != netalg::MatrixKind::Scattering || s2.n_ports() != 2)
        throw std::invalid_argument("expected a 2-port scattering matrix");
    TwoPortTriple triple;
    triple.freqs_hz = s2.freqs_hz();
    triple.s11.reserve(triple.freqs_hz.size());
    triple.s12.reserve(triple.freqs_hz.size());
    triple.s22.reserve(triple.freqs_hz.size());
    for (int fi = 0; fi < s2.n_freqs(); ++fi) {
        const Eigen::MatrixXcd& s = s2.at(fi);
        triple.s11.push_back(s(0, 0));
        triple.s12.push_back(s(0, 1));
        triple.s22.push_back(s(1, 1));
    }
    return triple;
}

std::vector<double> flatten_triple(const TwoPortTriple& triple) {
    const std::size_t n = triple.n_freqs();
    if (triple.s11.size() != n || triple.s12.size() != n || triple.s22.size() != n)
        throw LengthMismatch("parameter vectors do not match the frequency grid");
    std::vector<double> flat;
    flat.reserve(6 * n);
    for (std::size_t fi = 0; fi < n; ++fi) {
        flat.push_back(triple.s11[fi].real());
        flat.push_back(triple.s11[fi].imag());
        flat.push_back(triple.s12[fi].real());
        flat.push_back(triple.s12[fi].imag());
        flat.push_back(triple.s22[fi].real());
        flat.push_back(triple.s22[fi].imag());
    }
    return flat;
}

TwoPortTriple unflatten_triple(const std::vector<double>& flat,
                               const std::vector<double>& freqs_hz) {
    if (flat.size() != 6 * freqs_hz.size())
        throw LengthMismatch("flat vector has " + std::to_string(flat.size()) +
                             " values, expected " + std::to_string(6 * freqs_hz.size()));
    TwoPortTriple triple;
    triple.freqs_hz = freqs_hz;
    triple.s11.reserve(freqs_hz.size());
    triple.s12.reserve(freqs_hz.size());
    triple.s22.reserve(freqs_hz.size());
    for (std::size_t fi = 0; fi < freqs_hz.size(); ++fi) {
        const double* p = flat.data() + 6 * fi;
        triple.s11.emplace_back(p[0], p[1]);
        triple.s12.emplace_back(p[2], p[3]);
        triple.s22.emplace_back(p[4], p[5]);
    }
    return triple;
}

}  // namespace combforge::response
