// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_PIXELGRID_HPP
#define COMBFORGE_PIXELGRID_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "combforge/network.hpp"
#include "combforge/rng.hpp"

namespace combforge::pixelgrid {

// D4 symmetry operations need rows == cols.
struct NonSquareGrid : std::runtime_error {
    explicit NonSquareGrid(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, int line_number, int column)
        : std::runtime_error(what + " (line " + std::to_string(line_number) + ", column " +
                             std::to_string(column) + ")"),
          line(line_number),
          col(column) {}
    int line;
    int col;
};

enum class Edge : std::uint8_t { North, South, East, West };
enum class PortRole : std::uint8_t { Main = 0, Aux = 1, Output = 2, Spare = 3 };

const char* edge_name(Edge e);
const char* role_name(PortRole r);

// One feed: a role pinned to the center cell of one grid edge.
struct PortFeed {
    PortRole role;
    Edge edge;
    int row;
    int col;
    bool operator==(const PortFeed&) const = default;
};

// Binary occupancy grid (1 = metal, 0 = dielectric) with four edge-center
// port feeds; the genome of the inverse design and the input of the oracle
// and the surrogate.
struct PixelLayout {
    int rows = 0;
    int cols = 0;
    double pixel_size_mm = 1.8;
    double overlap_fraction = 0.20;    // fraction of cell size, in [0, 0.5)
    std::vector<std::uint8_t> cells;   // row-major
    std::array<PortFeed, 4> ports{};   // indexed by PortRole

    int index(int r, int c) const { return r * cols + c; }
    bool metal(int r, int c) const { return cells[index(r, c)] != 0; }
    void set(int r, int c, bool m) { cells[index(r, c)] = m ? 1 : 0; }
    const PortFeed& port(PortRole role) const {
        return ports[static_cast<std::size_t>(role)];
    }

    bool operator==(const PixelLayout&) const = default;
};

// All-dielectric grid with the standard feeds (Main=West, Aux=East,
// Output=South, Spare=North) forced to metal. Requires rows, cols >= 3 so the
// four edge centers are distinct cells.
PixelLayout make_layout(int rows, int cols, double pixel_size_mm = 1.8,
                        double overlap_fraction = 0.20);

// Re-assert the port-cells-are-metal invariant after any cell edit.
void force_ports_metal(PixelLayout& layout);

// Draw a target density from Normal(density_mean, density_std) clipped to
// [0.05, 0.95], then fill cells independently at that density.
PixelLayout random_layout(int rows, int cols, double density_mean, double density_std,
                          Rng& rng);
PixelLayout random_layout(int rows, int cols, double density_mean, double density_std,
                          std::uint64_t seed);

// True iff the required ports' cells lie in one metal component under
// 8-connectivity (diagonal contact is electrical due to the cell overlap).
// The default requires all four ports.
bool is_connected(const PixelLayout& layout);
bool is_connected(const PixelLayout& layout, const std::vector<PortRole>& required_ports);

// Size of the design space in bits: one bit per cell. Never enumerated.
std::size_t design_space_bits(const PixelLayout& layout);

enum class D4Element : std::uint8_t {
    Identity,
    Rot90,   // clockwise
    Rot180,
    Rot270,
    MirrorH,  // flip columns (left-right)
    MirrorV,  // flip rows (up-down)
    MirrorD,  // transpose (main diagonal)
    MirrorA,  // anti-transpose
};

const std::array<D4Element, 8>& d4_elements();
const char* d4_name(D4Element e);
D4Element d4_from_name(const std::string& name);

// Apply one square symmetry to the grid. Requires an odd square grid so the
// edge-center feeds map onto each other.
PixelLayout transform_layout(const PixelLayout& layout, D4Element e);

// Role permutation induced by the symmetry: the new port with role r carries
// the waves of the old port with role port_permutation(e)[r].
std::array<int, 4> port_permutation(D4Element e);

// Simultaneous row/column permutation of a 4-port scattering matrix matching
// transform_layout: S'(i, j) = S(p[i], p[j]).
netalg::NetworkMatrix transform_network(const netalg::NetworkMatrix& s4, D4Element e);

struct AugmentedRecord {
    PixelLayout layout;
    netalg::NetworkMatrix s4;
    D4Element element;
};

// The eight symmetry copies of (layout, s4), identity first. No re-simulation:
// the oracle commutes with every element, so each copy is a valid sample.
std::vector<AugmentedRecord> augment(const PixelLayout& layout,
                                     const netalg::NetworkMatrix& s4);

// One header line (dimensions, pixel size, overlap, port edges) followed by
// one '0'/'1' character per cell, one row per line.
std::string to_text(const PixelLayout& layout);
PixelLayout from_text(const std::string& text);
void save_text(const PixelLayout& layout, const std::string& path);
PixelLayout load_text(const std::string& path);

}  // namespace combforge::pixelgrid

#endif  // COMBFORGE_PIXELGRID_HPP
