// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/emoracle.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <sstream>
#include <utility>

#include <Eigen/Dense>
#include <json.hpp>

#include "combforge/errors.hpp"
#include "combforge/parallel.hpp"
#include "combforge/response.hpp"

namespace combforge::emoracle {

using netalg::cxd;

void OracleParams::validate() const {
    if (!(series_inductance_per_cell > 0.0))
        throw std::invalid_argument("series inductance must be positive");
    if (!(series_resistance_per_cell >= 0.0))
        throw std::invalid_argument("series resistance must be non-negative");
    if (!(shunt_capacitance_per_cell >= 0.0))
        throw std::invalid_argument("shunt capacitance must be non-negative");
    if (!(shunt_conductance_per_cell >= 0.0))
        throw std::invalid_argument("shunt conductance must be non-negative");
    if (!(diagonal_impedance_scale > 0.0))
        throw std::invalid_argument("diagonal impedance scale must be positive");
    if (!(z_ref > 0.0)) throw std::invalid_argument("reference impedance must be positive");
}

void FrequencyGrid::validate() const {
    if (!(start_hz >= 0.0)) throw std::invalid_argument("start frequency must be >= 0");
    if (!(start_hz < stop_hz))
        throw std::invalid_argument("start frequency must be below stop frequency");
    if (n_points < 1) throw std::invalid_argument("need at least one frequency point");
}

std::vector<double> FrequencyGrid::points() const {
    validate();
    std::vector<double> pts;
    pts.reserve(static_cast<std::size_t>(n_points));
    if (n_points == 1) {
        pts.push_back(start_hz);
        return pts;
    }
    const double step = (stop_hz - start_hz) / (n_points - 1);
    for (int i = 0; i < n_points; ++i) pts.push_back(start_hz + step * i);
    return pts;
}

namespace {

struct MeshBranch {
    int a;
    int b;
    bool diagonal;
};

struct Mesh {
    int n_nodes = 0;
    std::array<int, 4> feed_nodes{};
    std::vector<MeshBranch> branches;
};

Mesh build_mesh(const pixelgrid::PixelLayout& layout) {
    Mesh mesh;
    std::vector<int> node_of(layout.cells.size(), -1);
    for (int r = 0; r < layout.rows; ++r)
        for (int c = 0; c < layout.cols; ++c)
            if (layout.metal(r, c)) node_of[static_cast<std::size_t>(layout.index(r, c))] = mesh.n_nodes++;

    for (std::size_t i = 0; i < layout.ports.size(); ++i) {
        const pixelgrid::PortFeed& feed = layout.ports[i];
        const int node = node_of[static_cast<std::size_t>(layout.index(feed.row, feed.col))];
        if (node < 0)
            throw std::invalid_argument(std::string("port cell for ") +
                                        pixelgrid::role_name(feed.role) + " is not metal");
        mesh.feed_nodes[i] = node;
    }

    // Forward neighbor offsets only, so each branch is collected once.
    constexpr std::array<std::array<int, 2>, 4> kOffsets = {{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
    for (int r = 0; r < layout.rows; ++r) {
        for (int c = 0; c < layout.cols; ++c) {
            if (!layout.metal(r, c)) continue;
            const int a = node_of[static_cast<std::size_t>(layout.index(r, c))];
            for (const auto& off : kOffsets) {
                const int nr = r + off[0];
                const int nc = c + off[1];
                if (nr < 0 || nr >= layout.rows || nc < 0 || nc >= layout.cols) continue;
                if (!layout.metal(nr, nc)) continue;
                const int b = node_of[static_cast<std::size_t>(layout.index(nr, nc))];
                mesh.branches.push_back({a, b, off[0] != 0 && off[1] != 0});
            }
        }
    }
    return mesh;
}

}  // namespace

netalg::NetworkMatrix simulate(const pixelgrid::PixelLayout& layout,
                               const FrequencyGrid& freqs, const OracleParams& params) {
    return simulate(layout, freqs.points(), params);
}

netalg::NetworkMatrix simulate(const pixelgrid::PixelLayout& layout,
                               const std::vector<double>& freqs_hz,
                               const OracleParams& params) {
    params.validate();
    const Mesh mesh = build_mesh(layout);

    std::vector<Eigen::MatrixXcd> zdata;
    zdata.reserve(freqs_hz.size());
    for (double f : freqs_hz) {
        const double w = 2.0 * std::numbers::pi * f;
        const cxd z_series(params.series_resistance_per_cell,
                           w * params.series_inductance_per_cell);
        if (std::abs(z_series) == 0.0)
            throw SingularMesh("zero branch impedance at " + std::to_string(f) + " Hz");
        const cxd y_straight = 1.0 / z_series;
        const cxd y_diagonal = y_straight / params.diagonal_impedance_scale;
        const cxd y_shunt(params.shunt_conductance_per_cell,
                          w * params.shunt_capacitance_per_cell);

        Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(mesh.n_nodes, mesh.n_nodes);
        for (int i = 0; i < mesh.n_nodes; ++i) y(i, i) = y_shunt;
        for (const MeshBranch& br : mesh.branches) {
            const cxd yb = br.diagonal ? y_diagonal : y_straight;
            y(br.a, br.a) += yb;
            y(br.b, br.b) += yb;
            y(br.a, br.b) -= yb;
            y(br.b, br.a) -= yb;
        }

        Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(mesh.n_nodes, 4);
        for (int k = 0; k < 4; ++k) rhs(mesh.feed_nodes[k], k) = 1.0;

        const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);
        const Eigen::MatrixXcd volts = lu.solve(rhs);
        const double residual = (y * volts - rhs).norm();
        if (!volts.allFinite() || residual > 1e-6 * (1.0 + rhs.norm()))
            throw SingularMesh("nodal matrix is singular at " + std::to_string(f) + " Hz");

        Eigen::MatrixXcd z(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 4; ++k) z(i, k) = volts(mesh.feed_nodes[i], k);
        zdata.push_back(std::move(z));
    }

    const netalg::NetworkMatrix zmat(netalg::MatrixKind::Impedance, freqs_hz,
                                     std::move(zdata));
    return netalg::z_to_s(zmat, params.z_ref);
}

void DatasetConfig::validate() const {
    if (n_samples < 1) throw std::invalid_argument("need at least one sample");
    if (!(density_std >= 0.0))
        throw std::invalid_argument("density standard deviation must be non-negative");
    oracle.validate();
    freqs.validate();
    pixelgrid::make_layout(rows, cols);  // validates the grid geometry
}

int records_per_structure(int rows, int cols) {
    return (rows == cols && rows % 2 == 1) ? 8 : 1;
}

namespace {

DatasetRecord make_record(const pixelgrid::PixelLayout& layout,
                          const netalg::NetworkMatrix& s4,
                          const std::vector<double>& freqs_hz, std::uint64_t seed,
                          pixelgrid::D4Element element) {
    DatasetRecord record;
    record.layout_text = pixelgrid::to_text(layout);
    record.freqs_hz = freqs_hz;
    record.s_params_real_imag_flat =
        response::flatten_triple(response::triple_from_two_port(response::reduce_combiner(s4)));
    record.seed = seed;
    record.augment_element = pixelgrid::d4_name(element);
    return record;
}

}  // namespace

DatasetStats generate_dataset(const DatasetConfig& config, const std::string& out_path) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<double> freqs_hz = config.freqs.points();
    const bool augmented = records_per_structure(config.rows, config.cols) == 8;

    // Draws are serial so the starvation window is well-defined; each sample
    // still consumes only its own seed stream and stays reproducible under
    // any job count.
    std::vector<pixelgrid::PixelLayout> layouts;
    layouts.reserve(static_cast<std::size_t>(config.n_samples));
    std::int64_t draws = 0;
    std::int64_t rejections = 0;
    std::deque<bool> window;  // true = rejected draw
    int window_rejections = 0;
    for (int i = 0; i < config.n_samples; ++i) {
        Rng rng(config.base_seed + static_cast<std::uint64_t>(i));
        for (;;) {
            pixelgrid::PixelLayout candidate = pixelgrid::random_layout(
                config.rows, config.cols, config.density_mean, config.density_std, rng);
            ++draws;
            const bool ok = pixelgrid::is_connected(candidate);
            window.push_back(!ok);
            if (!ok) {
                ++rejections;
                ++window_rejections;
            }
            if (window.size() > 1000) {
                if (window.front()) --window_rejections;
                window.pop_front();
            }
            if (window.size() == 1000 && window_rejections > 990)
                throw ConnectivityStarvation(
                    "more than 99% of the last 1000 random layouts were disconnected; "
                    "density configuration is infeasible");
            if (ok) {
                layouts.push_back(std::move(candidate));
                break;
            }
        }
    }

    std::vector<netalg::NetworkMatrix> results(
        static_cast<std::size_t>(config.n_samples),
        netalg::NetworkMatrix(netalg::MatrixKind::Scattering, {1.0},
                              {Eigen::MatrixXcd::Zero(1, 1)}, config.oracle.z_ref));
    parallel_for(config.n_samples, config.jobs, [&](std::int64_t i) {
        results[static_cast<std::size_t>(i)] =
            simulate(layouts[static_cast<std::size_t>(i)], freqs_hz, config.oracle);
    });

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + out_path + " for writing");
    int n_records = 0;
    for (int i = 0; i < config.n_samples; ++i) {
        const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(i);
        if (augmented) {
            for (const pixelgrid::AugmentedRecord& aug :
                 pixelgrid::augment(layouts[static_cast<std::size_t>(i)],
                                    results[static_cast<std::size_t>(i)])) {
                out << record_to_json_line(
                           make_record(aug.layout, aug.s4, freqs_hz, seed, aug.element))
                    << '\n';
                ++n_records;
            }
        } else {
            out << record_to_json_line(make_record(layouts[static_cast<std::size_t>(i)],
                                                   results[static_cast<std::size_t>(i)],
                                                   freqs_hz, seed,
                                                   pixelgrid::D4Element::Identity))
                << '\n';
            ++n_records;
        }
    }
    out.flush();
    if (!out) throw IoFailure("failed writing " + out_path);

    DatasetStats stats;
    stats.n_structures = config.n_samples;
    stats.n_records = n_records;
    stats.rejection_rate = draws > 0 ? static_cast<double>(rejections) / draws : 0.0;
    stats.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return stats;
}

std::string record_to_json_line(const DatasetRecord& record) {
    nlohmann::json j;
    j["layout_text"] = record.layout_text;
    j["freqs_hz"] = record.freqs_hz;
    j["s_params_real_imag_flat"] = record.s_params_real_imag_flat;
    j["provenance"] = {{"seed", record.seed}, {"augment_element", record.augment_element}};
    return j.dump();
}

DatasetRecord record_from_json_line(const std::string& line) {
    DatasetRecord record;
    try {
        const nlohmann::json j = nlohmann::json::parse(line);
        record.layout_text = j.at("layout_text").get<std::string>();
        record.freqs_hz = j.at("freqs_hz").get<std::vector<double>>();
        record.s_params_real_imag_flat =
            j.at("s_params_real_imag_flat").get<std::vector<double>>();
        record.seed = j.at("provenance").at("seed").get<std::uint64_t>();
        record.augment_element = j.at("provenance").at("augment_element").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed dataset record: ") + e.what());
    }
    if (record.s_params_real_imag_flat.size() != 6 * record.freqs_hz.size())
        throw std::invalid_argument("dataset record has " +
                                    std::to_string(record.s_params_real_imag_flat.size()) +
                                    " response values for " +
                                    std::to_string(record.freqs_hz.size()) + " frequencies");
    return record;
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path + " for reading");
    std::vector<DatasetRecord> records;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json_line(line));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path + " line " + std::to_string(line_number) +
                                        ": " + e.what());
        }
    }
    return records;
}

void save_stats(const DatasetStats& stats, const std::string& path) {
    nlohmann::json j;
    j["n_structures"] = stats.n_structures;
    j["n_records"] = stats.n_records;
    j["rejection_rate"] = stats.rejection_rate;
    j["elapsed_s"] = stats.elapsed_s;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoFailure("failed writing " + path);
}

}  // namespace combforge::emoracle
