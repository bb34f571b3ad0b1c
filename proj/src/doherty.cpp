// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/doherty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "combforge/errors.hpp"

namespace combforge::doherty {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;

double wrap_angle(double theta) {
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    return t;
}

}  // namespace

void IdealDohertyConfig::validate() const {
    if (!(beta_b > 0.0 && beta_b < 1.0)) {
        throw std::invalid_argument("IdealDohertyConfig: beta_b must lie in (0, 1)");
    }
    if (!(alpha > 0.0)) throw std::invalid_argument("IdealDohertyConfig: alpha must be positive");
    if (!(r_opt > 0.0)) throw std::invalid_argument("IdealDohertyConfig: r_opt must be positive");
    if (!(v_max > 0.0)) throw std::invalid_argument("IdealDohertyConfig: v_max must be positive");
    if (!std::isfinite(theta)) throw std::invalid_argument("IdealDohertyConfig: theta must be finite");
}

DrivePoint current_profiles(const IdealDohertyConfig& cfg, double beta) {
    cfg.validate();
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument("current_profiles: beta must lie in [0, 1]");
    }
    const double i_mm = cfg.v_max / cfg.r_opt;
    DrivePoint p;
    p.beta = beta;
    p.i_main = cxd(beta * i_mm, 0.0);
    if (beta > cfg.beta_b) {
        const double ramp = (beta - cfg.beta_b) / (1.0 - cfg.beta_b);
        p.i_aux = ramp * cfg.alpha * i_mm * std::exp(cxd(0.0, -cfg.theta));
    }
    return p;
}

Eigen::Matrix2cd ideal_combiner_z(const IdealDohertyConfig& cfg) {
    cfg.validate();
    const cxd ejt = std::exp(cxd(0.0, cfg.theta));
    const cxd ej2t = std::exp(cxd(0.0, 2.0 * cfg.theta));
    const cxd emj2t = std::exp(cxd(0.0, -2.0 * cfg.theta));
    Eigen::Matrix2cd z;
    z(0, 0) = cxd(cfg.r_opt / cfg.beta_b, 0.0);
    z(0, 1) = (1.0 - 1.0 / cfg.beta_b) * (cfg.r_opt / cfg.alpha) * ejt;
    z(1, 0) = z(0, 1);
    z(1, 1) = (1.0 / cfg.beta_b + cfg.alpha * emj2t - 1.0) *
              (cfg.r_opt / (cfg.alpha * cfg.alpha)) * ej2t;
    return z;
}

BackoffGamma backoff_gamma(double beta_b, double alpha) {
    if (!(beta_b > 0.0 && beta_b < 1.0)) {
        throw std::invalid_argument("backoff_gamma: beta_b must lie in (0, 1)");
    }
    if (!(alpha > 0.0)) throw std::invalid_argument("backoff_gamma: alpha must be positive");
    const double ratio = (1.0 + alpha) / beta_b;
    return {ratio, 10.0 * std::log10(ratio)};
}

std::vector<double> theta_solutions(double beta_b, double alpha) {
    if (!(beta_b > 0.0 && beta_b < 1.0)) {
        throw std::invalid_argument("theta_solutions: beta_b must lie in (0, 1)");
    }
    if (!(alpha > 0.0)) throw std::invalid_argument("theta_solutions: alpha must be positive");
    const double arg = beta_b * (alpha - beta_b + 1.0) / (1.0 - beta_b * beta_b);
    if (arg > 1.0) {
        throw NoRealSolution("theta_solutions: no real theta for beta_b=" +
                             std::to_string(beta_b) + ", alpha=" + std::to_string(alpha) +
                             " (asin argument " + std::to_string(arg) + " > 1)");
    }
    const double s = std::asin(std::sqrt(arg));
    std::vector<double> out;
    for (double cand : {s, kPi - s, kPi + s, kTwoPi - s}) {
        const double t = wrap_angle(cand);
        bool dup = false;
        for (double seen : out) dup = dup || std::abs(seen - t) < 1e-12;
        if (!dup) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

SweepRow evaluate_drive(const IdealDohertyConfig& cfg, double beta) {
    const DrivePoint dp = current_profiles(cfg, beta);
    const Eigen::Matrix2cd z = ideal_combiner_z(cfg);
    SweepRow row;
    row.beta = beta;
    row.v_main = z(0, 0) * dp.i_main + z(0, 1) * dp.i_aux;
    row.v_aux = z(1, 0) * dp.i_main + z(1, 1) * dp.i_aux;
    row.p_out_w = 0.5 * (row.v_main * std::conj(dp.i_main) +
                         row.v_aux * std::conj(dp.i_aux))
                            .real();
    row.p_dc_w = (2.0 / kPi) * cfg.v_max * (std::abs(dp.i_main) + std::abs(dp.i_aux));
    row.efficiency = row.p_dc_w > 0.0 ? row.p_out_w / row.p_dc_w
                                      : std::numeric_limits<double>::quiet_NaN();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.z_main = std::abs(dp.i_main) > 0.0 ? row.v_main / dp.i_main : cxd(nan, nan);
    row.z_aux = std::abs(dp.i_aux) > 0.0 ? row.v_aux / dp.i_aux : cxd(nan, nan);
    return row;
}

std::vector<SweepRow> drive_sweep(const IdealDohertyConfig& cfg, int n_points) {
    cfg.validate();
    if (n_points < 2) throw std::invalid_argument("drive_sweep: n_points must be >= 2");
    std::vector<SweepRow> rows;
    rows.reserve(n_points);
    for (int i = 0; i < n_points; ++i) {
        const double beta = static_cast<double>(i) / (n_points - 1);
        rows.push_back(evaluate_drive(cfg, beta));
    }
    return rows;
}

void write_drive_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    if (rows.empty()) throw std::invalid_argument("write_drive_sweep_csv: empty sweep");
    std::ofstream out(path);
    if (!out) throw IoFailure("write_drive_sweep_csv: cannot open " + path + " for writing");
    out << "beta,pout_w,pout_dbc,pdc_w,eff,re_zm,im_zm,re_za,im_za\n";
    const double p_peak = rows.back().p_out_w;
    char buf[320];
    for (const auto& r : rows) {
        const double dbc = 10.0 * std::log10(r.p_out_w / p_peak);
        std::snprintf(buf, sizeof(buf),
                      "%.9g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.beta,
                      r.p_out_w, dbc, r.p_dc_w, r.efficiency, r.z_main.real(),
                      r.z_main.imag(), r.z_aux.real(), r.z_aux.imag());
        out << buf;
    }
    if (!out) throw IoFailure("write_drive_sweep_csv: write failed for " + path);
}

}  // namespace combforge::doherty
