// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_DOHERTY_HPP
#define COMBFORGE_DOHERTY_HPP

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace combforge::doherty {

using cxd = std::complex<double>;

// The break-point/current-ratio pair admits no real phase solution.
struct NoRealSolution : std::runtime_error {
    explicit NoRealSolution(const std::string& what) : std::runtime_error(what) {}
};

// Ideal black-box Doherty configuration. The main amplifier saturates at the
// break point beta_b; the auxiliary ramps linearly above it with peak current
// ratio alpha and phase lead theta.
struct IdealDohertyConfig {
    double beta_b = 0.5;   // break-point drive level, in (0, 1)
    double alpha = 1.0;    // aux/main peak current ratio, > 0
    double theta = 0.0;    // aux phase delay, radians
    double r_opt = 50.0;   // main amplifier optimal load, ohms
    double v_max = 1.0;    // maximum drain voltage swing (normalized)

    void validate() const;  // throws std::invalid_argument
};

// Fundamental currents at one drive level.
struct DrivePoint {
    double beta = 0.0;
    cxd i_main{0.0, 0.0};
    cxd i_aux{0.0, 0.0};
};

// I_main = beta * i_mM with i_mM = v_max / r_opt; I_aux = 0 up to beta_b, then
// ((beta - beta_b)/(1 - beta_b)) * alpha * i_mM * exp(-j theta).
DrivePoint current_profiles(const IdealDohertyConfig& cfg, double beta);

// The ideal two-port combiner impedance matrix:
//   Z11 = r_opt/beta_b
//   Z12 = (1 - 1/beta_b)(r_opt/alpha) e^{j theta}
//   Z22 = (1/beta_b + alpha e^{-j2theta} - 1)(r_opt/alpha^2) e^{j2theta}
Eigen::Matrix2cd ideal_combiner_z(const IdealDohertyConfig& cfg);

struct BackoffGamma {
    double ratio;  // (1 + alpha) / beta_b
    double db;     // 10 log10(ratio)
};
BackoffGamma backoff_gamma(double beta_b, double alpha);

// All phase solutions in [0, 2pi) that make the ideal combiner realizable as
// a lossless three-port: k*pi +- asin(sqrt(beta_b(alpha - beta_b + 1)/(1 - beta_b^2))).
// Throws NoRealSolution when the asin argument exceeds 1.
std::vector<double> theta_solutions(double beta_b, double alpha);

// One row of a drive sweep. Load impedances are NaN where the defining
// current is zero (main at beta = 0, aux at or below the break point).
struct SweepRow {
    double beta;
    double p_out_w;
    double p_dc_w;
    double efficiency;  // NaN at zero drive
    cxd v_main, v_aux;
    cxd z_main, z_aux;
};

// Evaluate voltages, powers, efficiency, and load modulation at one drive
// level. DC model: ideal Class-B half-sine drain current, DC component
// (2/pi)|I| per device at supply v_max, giving the pi/4 peak efficiency.
SweepRow evaluate_drive(const IdealDohertyConfig& cfg, double beta);

// Uniform sweep of n_points drive levels over [0, 1].
std::vector<SweepRow> drive_sweep(const IdealDohertyConfig& cfg, int n_points);

// CSV with header beta,pout_w,pout_dbc,pdc_w,eff,re_zm,im_zm,re_za,im_za;
// pout_dbc is relative to the final (beta = 1) row.
void write_drive_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace combforge::doherty

#endif  // COMBFORGE_DOHERTY_HPP
