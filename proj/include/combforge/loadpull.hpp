// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_LOADPULL_HPP
#define COMBFORGE_LOADPULL_HPP

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace combforge::loadpull {

using cxd = std::complex<double>;

// A load-pull resistance was zero or negative.
struct NonPositiveResistance : std::runtime_error {
    explicit NonPositiveResistance(const std::string& what) : std::runtime_error(what) {}
};

// The back-off power budget does not balance the peak powers.
struct PowerMismatch : std::runtime_error {
    PowerMismatch(const std::string& what, double delta)
        : std::runtime_error(what), delta_db(delta) {}
    double delta_db;
};

// The synthesis denominator vanished at the requested phase.
struct DegenerateDenominator : std::runtime_error {
    explicit DegenerateDenominator(const std::string& what) : std::runtime_error(what) {}
};

// No phase makes the synthesized two-port realizable.
struct NoSolution : std::runtime_error {
    explicit NoSolution(const std::string& what) : std::runtime_error(what) {}
};

// Optimal load and delivered power of one amplifier at one operating level.
struct LoadPullPoint {
    cxd z{};               // optimal load impedance, ohms
    double p_dbm = 0.0;    // delivered power; -inf models an absent amplifier
    std::optional<double> pae;  // informational only
};

// Everything needed to synthesize the combiner's two-port impedance matrix:
// main amplifier at peak and at back-off, auxiliary at peak, the auxiliary's
// off-state output impedance (the impedance terminating the combiner's aux
// port below the break point), and the target back-off level.
struct SynthesisInput {
    LoadPullPoint main_peak;
    LoadPullPoint main_backoff;
    LoadPullPoint aux_peak;
    cxd z_aux_off{};
    double gamma_b_db = 0.0;
    double power_tol_db = 0.2;

    void validate() const;  // NonPositiveResistance / std::invalid_argument
};

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

// alpha = sqrt(Re{Z_mM} P_aM / (Re{Z_aM} P_mM)) * exp(-j theta), powers in watts.
cxd alpha_from_loadpull(const SynthesisInput& inp, double theta);

struct PowerBalance {
    double backed_off_dbm;  // P_mB + gamma_B, dB domain
    double peak_sum_dbm;    // P_mM (+) P_aM summed in watts
    double delta_db;        // backed_off - peak_sum
};

// Verifies gamma_B * P_mB = P_mM + P_aM; throws PowerMismatch when |delta|
// exceeds inp.power_tol_db.
PowerBalance check_power_conservation(const SynthesisInput& inp);

// The two-port impedance matrix synthesized from load-pull data at phase
// theta (symmetric completion). Throws DegenerateDenominator when the common
// denominator Z_mM - Z_mB + (Z_aM + Z_aoff) alpha^2 vanishes.
Eigen::Matrix2cd z2p_from_loadpull(const SynthesisInput& inp, double theta);

struct ThetaRoot {
    double theta;               // radians in [0, 2pi)
    double residual;            // losslessness residual at the root
    Eigen::Matrix2cd z2p;
};

// Scan theta over [0, 2pi) on a 3600-point grid, bracket sign changes and
// sub-1e-3 local minima of the losslessness residual, refine each to below
// 1e-8, and return all roots sorted by theta. Throws NoSolution when the
// residual never drops below 1e-3.
std::vector<ThetaRoot> solve_theta(const SynthesisInput& inp);

// Default root choice: smallest residual, ties broken by smallest theta.
const ThetaRoot& select_root(const std::vector<ThetaRoot>& roots);

SynthesisInput input_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthesisInput& inp);
SynthesisInput load_input(const std::string& path);

}  // namespace combforge::loadpull

#endif  // COMBFORGE_LOADPULL_HPP
