// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_EMORACLE_HPP
#define COMBFORGE_EMORACLE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "combforge/network.hpp"
#include "combforge/pixelgrid.hpp"

namespace combforge::emoracle {

struct SingularMesh : std::runtime_error {
    explicit SingularMesh(const std::string& what) : std::runtime_error(what) {}
};

// The configured pixel density makes connected layouts vanishingly rare.
struct ConnectivityStarvation : std::runtime_error {
    explicit ConnectivityStarvation(const std::string& what) : std::runtime_error(what) {}
};

// Lumped per-cell circuit values of the quasi-static mesh model. These are
// calibration knobs of the internal ground truth, not measured data.
struct OracleParams {
    double series_inductance_per_cell = 0.6e-9;   // henries
    double series_resistance_per_cell = 0.05;     // ohms
    double shunt_capacitance_per_cell = 0.12e-12; // farads
    double shunt_conductance_per_cell = 1e-6;     // siemens
    double diagonal_impedance_scale = 1.4142135623730951;
    double z_ref = 50.0;

    void validate() const;
};

struct FrequencyGrid {
    double start_hz = 2.55e9;
    double stop_hz = 2.95e9;
    int n_points = 13;

    void validate() const;
    std::vector<double> points() const;
};

// Solve the nodal admittance mesh of the metal cells at each frequency:
// series R-L branches between 8-connected metal neighbors (diagonal branch
// impedance scaled up), shunt G-C from every metal cell to ground, ideal unit
// current injection at the four feed cells. Returns the 4-port scattering
// matrix (Main, Aux, Output, Spare) at params.z_ref.
netalg::NetworkMatrix simulate(const pixelgrid::PixelLayout& layout,
                               const FrequencyGrid& freqs, const OracleParams& params);
netalg::NetworkMatrix simulate(const pixelgrid::PixelLayout& layout,
                               const std::vector<double>& freqs_hz,
                               const OracleParams& params);

struct DatasetConfig {
    int n_samples = 100;
    int rows = 15;
    int cols = 15;
    double density_mean = 0.50;
    double density_std = 0.15;
    OracleParams oracle;
    FrequencyGrid freqs;
    std::uint64_t base_seed = 1;
    int jobs = 0;  // 0 = all hardware threads

    void validate() const;
};

struct DatasetStats {
    int n_structures = 0;
    int n_records = 0;
    double rejection_rate = 0.0;
    double elapsed_s = 0.0;
};

// One JSON-lines dataset row: a layout, the frequency grid, and the flat
// real/imag combiner response (see response::flatten_triple for the layout).
struct DatasetRecord {
    std::string layout_text;
    std::vector<double> freqs_hz;
    std::vector<double> s_params_real_imag_flat;
    std::uint64_t seed = 0;
    std::string augment_element;
};

// Draw connected random layouts (sample i uses seed base_seed + i, redrawing
// from its own stream until connected), simulate each, and write one record
// per symmetry copy. Odd square grids emit 8 records per structure; other
// grids emit 1, since their edge-center feeds do not map onto each other
// under the square symmetries.
DatasetStats generate_dataset(const DatasetConfig& config, const std::string& out_path);

int records_per_structure(int rows, int cols);

std::string record_to_json_line(const DatasetRecord& record);
DatasetRecord record_from_json_line(const std::string& line);
std::vector<DatasetRecord> load_dataset(const std::string& path);
void save_stats(const DatasetStats& stats, const std::string& path);

}  // namespace combforge::emoracle

#endif  // COMBFORGE_EMORACLE_HPP
