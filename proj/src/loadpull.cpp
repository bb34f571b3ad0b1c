// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/loadpull.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "combforge/errors.hpp"
#include "combforge/network.hpp"

namespace combforge::loadpull {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;
constexpr int kScanPoints = 3600;
constexpr double kRootResidual = 1e-8;
constexpr double kCandidateResidual = 1e-3;

// Signed realizability defect; its zero crossings are the solve_theta roots.
double signed_defect(const Eigen::Matrix2cd& z) {
    const double r12 = z(0, 1).real();
    return r12 * r12 - z(0, 0).real() * z(1, 1).real();
}

double parse_dbm(const nlohmann::json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw std::invalid_argument("loadpull: p_dbm string must be \"-inf\", got \"" + s + "\"");
    }
    return j.get<double>();
}

LoadPullPoint point_from_json(const nlohmann::json& j, const char* name) {
    if (!j.is_object()) {
        throw std::invalid_argument(std::string("loadpull: ") + name + " must be an object");
    }
    LoadPullPoint p;
    p.z = cxd(j.at("z_re").get<double>(), j.at("z_im").get<double>());
    p.p_dbm = parse_dbm(j.at("p_dbm"));
    if (j.contains("pae")) p.pae = j.at("pae").get<double>();
    return p;
}

nlohmann::json point_to_json(const LoadPullPoint& p) {
    nlohmann::json j;
    j["z_re"] = p.z.real();
    j["z_im"] = p.z.imag();
    if (std::isinf(p.p_dbm) && p.p_dbm < 0.0) {
        j["p_dbm"] = "-inf";
    } else {
        j["p_dbm"] = p.p_dbm;
    }
    if (p.pae) j["pae"] = *p.pae;
    return j;
}

}  // namespace

void SynthesisInput::validate() const {
    const struct {
        const char* name;
        const LoadPullPoint& p;
    } points[] = {{"main_peak", main_peak}, {"main_backoff", main_backoff}, {"aux_peak", aux_peak}};
    for (const auto& [name, p] : points) {
        if (p.z.real() < 0.0) {
            throw NonPositiveResistance(std::string("SynthesisInput: ") + name +
                                        " load resistance must be nonnegative");
        }
        if (std::isnan(p.p_dbm) || p.p_dbm == std::numeric_limits<double>::infinity()) {
            throw std::invalid_argument(std::string("SynthesisInput: ") + name +
                                        " power must be finite or -inf");
        }
    }
    if (!std::isfinite(main_peak.p_dbm) || !std::isfinite(main_backoff.p_dbm)) {
        throw std::invalid_argument("SynthesisInput: main amplifier powers must be finite");
    }
    if (z_aux_off.real() < 0.0) {
        throw NonPositiveResistance("SynthesisInput: off-state aux resistance must be nonnegative");
    }
    if (!(gamma_b_db > 0.0)) {
        throw std::invalid_argument("SynthesisInput: gamma_b_db must be positive");
    }
    if (!(power_tol_db > 0.0)) {
        throw std::invalid_argument("SynthesisInput: power_tol_db must be positive");
    }
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

cxd alpha_from_loadpull(const SynthesisInput& inp, double theta) {
    const double re_m = inp.main_peak.z.real();
    const double re_a = inp.aux_peak.z.real();
    if (re_m <= 0.0 || re_a <= 0.0) {
        throw NonPositiveResistance(
            "alpha_from_loadpull: peak load resistances must be positive");
    }
    const double p_m = dbm_to_watts(inp.main_peak.p_dbm);
    const double p_a = dbm_to_watts(inp.aux_peak.p_dbm);
    if (!(p_m > 0.0)) {
        throw std::invalid_argument("alpha_from_loadpull: main peak power must be positive");
    }
    const double mag = std::sqrt(re_m * p_a / (re_a * p_m));
    return mag * std::exp(cxd(0.0, -theta));
}

PowerBalance check_power_conservation(const SynthesisInput& inp) {
    PowerBalance b;
    b.backed_off_dbm = inp.main_backoff.p_dbm + inp.gamma_b_db;
    b.peak_sum_dbm =
        watts_to_dbm(dbm_to_watts(inp.main_peak.p_dbm) + dbm_to_watts(inp.aux_peak.p_dbm));
    b.delta_db = b.backed_off_dbm - b.peak_sum_dbm;
    if (!(std::abs(b.delta_db) <= inp.power_tol_db)) {
        std::ostringstream os;
        os << "check_power_conservation: backed-off budget " << b.backed_off_dbm
           << " dBm vs peak sum " << b.peak_sum_dbm << " dBm (delta " << b.delta_db
           << " dB exceeds tolerance " << inp.power_tol_db << " dB)";
        throw PowerMismatch(os.str(), b.delta_db);
    }
    return b;
}

Eigen::Matrix2cd z2p_from_loadpull(const SynthesisInput& inp, double theta) {
    const cxd a = alpha_from_loadpull(inp, theta);
    const cxd a2 = a * a;
    const cxd zm = inp.main_peak.z;
    const cxd zb = inp.main_backoff.z;
    const cxd za = inp.aux_peak.z;
    const cxd zo = inp.z_aux_off;
    const cxd aux_branch = (za + zo) * a2;
    const cxd den = zm - zb + aux_branch;
    const double scale = std::max({1.0, std::abs(zm - zb), std::abs(aux_branch)});
    if (std::abs(den) <= 1e-9 * scale) {
        std::ostringstream os;
        os << "z2p_from_loadpull: synthesis denominator vanished at theta = "
           << theta * 180.0 / kPi << " deg";
        throw DegenerateDenominator(os.str());
    }
    Eigen::Matrix2cd z;
    z(0, 0) = ((za + zo) * zb * a2 + (zm - zb) * zm) / den;
    z(0, 1) = (zm - zb) * (za + zo) * a / den;
    z(1, 0) = z(0, 1);
    z(1, 1) = ((za + zo) * za * a2 + (zb - zm) * zo) / den;
    return z;
}

std::vector<ThetaRoot> solve_theta(const SynthesisInput& inp) {
    inp.validate();

    const double mod_scale =
        std::max({1.0, std::abs(inp.main_peak.z), std::abs(inp.main_backoff.z)});
    if (std::abs(inp.main_peak.z - inp.main_backoff.z) <= 1e-12 * mod_scale) {
        // No load modulation: Z12 = 0 and the residual is theta-independent.
        const Eigen::Matrix2cd z = z2p_from_loadpull(inp, 0.0);
        const double r = netalg::losslessness_residual(z);
        if (r < kRootResidual) return {{0.0, r, z}};
        throw NoSolution(
            "solve_theta: residual is theta-independent (no load modulation) and nonzero");
    }

    const double step = kTwoPi / kScanPoints;
    std::vector<double> defect(kScanPoints, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> residual(kScanPoints, std::numeric_limits<double>::quiet_NaN());
    double min_residual = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kScanPoints; ++i) {
        try {
            const Eigen::Matrix2cd z = z2p_from_loadpull(inp, i * step);
            defect[i] = signed_defect(z);
            residual[i] = netalg::losslessness_residual(z);
            min_residual = std::min(min_residual, residual[i]);
        } catch (const DegenerateDenominator&) {
            // leave NaN; the adjacent intervals are skipped
        }
    }

    auto defect_at = [&inp](double theta) {
        return signed_defect(z2p_from_loadpull(inp, theta));
    };
    auto residual_at = [&inp](double theta) {
        return netalg::losslessness_residual(z2p_from_loadpull(inp, theta));
    };

    std::vector<ThetaRoot> roots;
    auto add_root = [&](double theta) {
        const double t = theta < 0.0 ? theta + kTwoPi
                                     : (theta >= kTwoPi ? theta - kTwoPi : theta);
        Eigen::Matrix2cd z;
        double r;
        try {
            z = z2p_from_loadpull(inp, t);
            r = netalg::losslessness_residual(z);
        } catch (const DegenerateDenominator&) {
            return;
        }
        if (r >= kRootResidual) return;
        for (const auto& seen : roots) {
            double d = std::abs(seen.theta - t);
            d = std::min(d, kTwoPi - d);
            if (d < 1e-6) return;
        }
        roots.push_back({t, r, z});
    };

    for (int i = 0; i < kScanPoints; ++i) {
        const int j = (i + 1) % kScanPoints;
        if (std::isnan(defect[i]) || std::isnan(defect[j])) continue;
        if (defect[i] == 0.0) {
            add_root(i * step);
            continue;
        }
        if (defect[i] * defect[j] < 0.0) {
            // Bisection on the signed defect.
            double lo = i * step, hi = (i + 1) * step;
            double flo = defect[i];
            for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = defect_at(mid);
                if (fm == 0.0) {
                    lo = hi = mid;
                    break;
                }
                if (flo * fm < 0.0) {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            add_root(0.5 * (lo + hi));
        } else {
            // Tangent roots: a local residual minimum already below the
            // candidate threshold, refined by golden-section search.
            const int h = (i + kScanPoints - 1) % kScanPoints;
            if (std::isnan(residual[h]) || residual[i] >= kCandidateResidual) continue;
            if (!(residual[i] <= residual[h] && residual[i] <= residual[j])) continue;
            constexpr double kInvPhi = 0.6180339887498949;
            double a = (i - 1) * step, b = (i + 1) * step;
            double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
            double f1 = residual_at(x1), f2 = residual_at(x2);
            for (int it = 0; it < 100 && b - a > 1e-13; ++it) {
                if (f1 < f2) {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - kInvPhi * (b - a);
                    f1 = residual_at(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + kInvPhi * (b - a);
                    f2 = residual_at(x2);
                }
            }
            add_root(0.5 * (a + b));
        }
    }

    if (roots.empty()) {
        std::ostringstream os;
        os << "solve_theta: no realizable phase found (smallest residual over the scan: "
           << min_residual << ")";
        throw NoSolution(os.str());
    }
    std::sort(roots.begin(), roots.end(),
              [](const ThetaRoot& a, const ThetaRoot& b) { return a.theta < b.theta; });
    return roots;
}

const ThetaRoot& select_root(const std::vector<ThetaRoot>& roots) {
    if (roots.empty()) throw std::invalid_argument("select_root: empty root list");
    // Residuals below the refinement target carry no information, so they
    // compare as equal and the smallest theta wins deterministically.
    auto key = [](double residual) { return std::max(residual, 1e-8); };
    const ThetaRoot* best = &roots.front();
    for (const auto& r : roots) {
        if (key(r.residual) < key(best->residual) ||
            (key(r.residual) == key(best->residual) && r.theta < best->theta)) {
            best = &r;
        }
    }
    return *best;
}

SynthesisInput input_from_json(const nlohmann::json& j) {
    SynthesisInput inp;
    inp.main_peak = point_from_json(j.at("main_peak"), "main_peak");
    inp.main_backoff = point_from_json(j.at("main_backoff"), "main_backoff");
    inp.aux_peak = point_from_json(j.at("aux_peak"), "aux_peak");
    const auto& off = j.at("aux_off");
    inp.z_aux_off = cxd(off.at("z_re").get<double>(), off.at("z_im").get<double>());
    inp.gamma_b_db = j.at("gamma_b_db").get<double>();
    inp.power_tol_db = j.value("power_tol_db", 0.2);
    inp.validate();
    return inp;
}

nlohmann::json to_json(const SynthesisInput& inp) {
    nlohmann::json j;
    j["main_peak"] = point_to_json(inp.main_peak);
    j["main_backoff"] = point_to_json(inp.main_backoff);
    j["aux_peak"] = point_to_json(inp.aux_peak);
    j["aux_off"] = {{"z_re", inp.z_aux_off.real()}, {"z_im", inp.z_aux_off.imag()}};
    j["gamma_b_db"] = inp.gamma_b_db;
    j["power_tol_db"] = inp.power_tol_db;
    return j;
}

SynthesisInput load_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("load_input: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("load_input: invalid JSON in " + path + ": " + e.what());
    }
    try {
        return input_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("load_input: bad schema in " + path + ": " + e.what());
    }
}

}  // namespace combforge::loadpull
