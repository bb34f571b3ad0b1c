// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_TOUCHSTONE_HPP
#define COMBFORGE_TOUCHSTONE_HPP

#include <stdexcept>
#include <string>

#include "combforge/network.hpp"

namespace combforge::netalg {

enum class TouchstoneFormat { RealImag, MagnitudeAngle };

struct TouchstoneParseError : std::runtime_error {
    TouchstoneParseError(const std::string& what, int line_number)
        : std::runtime_error(what + " (line " + std::to_string(line_number) + ")"),
          line(line_number) {}
    int line;
};

// Write a 1- to 4-port scattering matrix as a Touchstone v1 file
// ("# HZ S RI R <z_ref>" option line; two-port data uses the standard
// S11 S21 S12 S22 column order, larger networks one matrix row per line).
void write_touchstone(const NetworkMatrix& s, const std::string& path,
                      TouchstoneFormat format = TouchstoneFormat::RealImag);

// Read a Touchstone v1 file; the port count is taken from the .sNp extension.
// Handles RI and MA formats and HZ/KHZ/MHZ/GHZ units.
NetworkMatrix read_touchstone(const std::string& path);

}  // namespace combforge::netalg

#endif  // COMBFORGE_TOUCHSTONE_HPP
