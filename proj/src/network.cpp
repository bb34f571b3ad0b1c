// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "combforge/errors.hpp"

namespace combforge::netalg {

namespace {

constexpr double kMaxCondition = 1e12;

// Condition-checked inverse for the small per-frequency matrices.
template <typename ErrorType>
Eigen::MatrixXcd checked_inverse(const Eigen::MatrixXcd& m, const char* context,
                                 double freq_hz) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (smin <= 0.0 || sv(0) / smin > kMaxCondition) {
        std::ostringstream os;
        os << context << ": matrix numerically singular at " << freq_hz << " Hz";
        throw ErrorType(os.str());
    }
    return m.inverse();
}

}  // namespace

NetworkMatrix::NetworkMatrix(MatrixKind kind, std::vector<double> freqs_hz,
                             std::vector<Eigen::MatrixXcd> data, double z_ref)
    : kind_(kind), freqs_hz_(std::move(freqs_hz)), data_(std::move(data)), z_ref_(z_ref) {
    if (freqs_hz_.empty() || data_.size() != freqs_hz_.size()) {
        throw std::invalid_argument("NetworkMatrix: data length must equal freqs length (>= 1)");
    }
    for (std::size_t i = 1; i < freqs_hz_.size(); ++i) {
        if (!(freqs_hz_[i] > freqs_hz_[i - 1])) {
            throw std::invalid_argument("NetworkMatrix: frequencies must be strictly increasing");
        }
    }
    const Eigen::Index n = data_.front().rows();
    if (n < 1) throw std::invalid_argument("NetworkMatrix: matrices must be at least 1x1");
    for (const auto& m : data_) {
        if (m.rows() != n || m.cols() != n) {
            throw std::invalid_argument("NetworkMatrix: all matrices must be square with identical size");
        }
    }
    if (kind_ == MatrixKind::Scattering && !(z_ref_ > 0.0)) {
        throw std::invalid_argument("NetworkMatrix: z_ref must be positive for scattering matrices");
    }
}

bool NetworkMatrix::is_reciprocal(double tol) const {
    for (const auto& m : data_) {
        if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
    }
    return true;
}

NetworkMatrix z_to_s(const NetworkMatrix& z, double z_ref) {
    if (z.kind() != MatrixKind::Impedance) {
        throw std::invalid_argument("z_to_s: input must be impedance-kind");
    }
    if (!(z_ref > 0.0)) throw std::invalid_argument("z_to_s: z_ref must be positive");
    const int n = z.n_ports();
    const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(n, n);
    std::vector<Eigen::MatrixXcd> out;
    out.reserve(z.n_freqs());
    for (int fi = 0; fi < z.n_freqs(); ++fi) {
        const Eigen::MatrixXcd inv = checked_inverse<SingularAugmentedMatrix>(
            z.at(fi) + z_ref * eye, "z_to_s", z.freqs_hz()[fi]);
        out.push_back((z.at(fi) - z_ref * eye) * inv);
    }
    return NetworkMatrix(MatrixKind::Scattering, z.freqs_hz(), std::move(out), z_ref);
}

NetworkMatrix s_to_z(const NetworkMatrix& s) {
    if (s.kind() != MatrixKind::Scattering) {
        throw std::invalid_argument("s_to_z: input must be scattering-kind");
    }
    const int n = s.n_ports();
    const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(n, n);
    std::vector<Eigen::MatrixXcd> out;
    out.reserve(s.n_freqs());
    for (int fi = 0; fi < s.n_freqs(); ++fi) {
        const Eigen::MatrixXcd inv = checked_inverse<SingularReflection>(
            eye - s.at(fi), "s_to_z", s.freqs_hz()[fi]);
        out.push_back(s.z_ref() * (eye + s.at(fi)) * inv);
    }
    return NetworkMatrix(MatrixKind::Impedance, s.freqs_hz(), std::move(out), s.z_ref());
}

NetworkMatrix terminate_port(const NetworkMatrix& s, int port, cxd gamma) {
    if (s.kind() != MatrixKind::Scattering) {
        throw std::invalid_argument("terminate_port: input must be scattering-kind");
    }
    const int n = s.n_ports();
    if (port < 1 || port > n) {
        throw std::invalid_argument("terminate_port: port index out of range");
    }
    if (n < 2) throw std::invalid_argument("terminate_port: need at least 2 ports");
    const int k = port - 1;
    std::vector<Eigen::MatrixXcd> out;
    out.reserve(s.n_freqs());
    for (int fi = 0; fi < s.n_freqs(); ++fi) {
        const Eigen::MatrixXcd& m = s.at(fi);
        const cxd den = 1.0 - gamma * m(k, k);
        if (std::abs(den) <= 1e-12) {
            std::ostringstream os;
            os << "terminate_port: |1 - gamma*S_kk| vanished at " << s.freqs_hz()[fi]
               << " Hz (port " << port << ")";
            throw ResonantTermination(os.str());
        }
        Eigen::MatrixXcd r(n - 1, n - 1);
        for (int i = 0, ri = 0; i < n; ++i) {
            if (i == k) continue;
            for (int j = 0, rj = 0; j < n; ++j) {
                if (j == k) continue;
                r(ri, rj) = m(i, j) + m(i, k) * gamma * m(k, j) / den;
                ++rj;
            }
            ++ri;
        }
        out.push_back(std::move(r));
    }
    return NetworkMatrix(MatrixKind::Scattering, s.freqs_hz(), std::move(out), s.z_ref());
}

double losslessness_residual(const Eigen::Matrix2cd& z2p) {
    const cxd z12 = z2p(0, 1);
    const cxd z21 = z2p(1, 0);
    const double scale = std::max({1.0, std::abs(z12), std::abs(z21)});
    if (std::abs(z12 - z21) > 1e-9 * scale) {
        throw NonReciprocalInput("losslessness_residual: matrix is not symmetric (Z12 != Z21)");
    }
    const double r11 = z2p(0, 0).real();
    const double r12 = z12.real();
    const double r22 = z2p(1, 1).real();
    const double product = r11 * r22;
    return std::abs(r12 * r12 - product) / std::max(1.0, std::abs(product));
}

nlohmann::json to_json(const NetworkMatrix& nm) {
    nlohmann::json j;
    j["kind"] = nm.kind() == MatrixKind::Impedance ? "impedance" : "scattering";
    if (nm.kind() == MatrixKind::Scattering) j["z_ref"] = nm.z_ref();
    j["freqs_hz"] = nm.freqs_hz();
    nlohmann::json data = nlohmann::json::array();
    for (int fi = 0; fi < nm.n_freqs(); ++fi) {
        nlohmann::json rows = nlohmann::json::array();
        const auto& m = nm.at(fi);
        for (int i = 0; i < nm.n_ports(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int jx = 0; jx < nm.n_ports(); ++jx) {
                row.push_back({m(i, jx).real(), m(i, jx).imag()});
            }
            rows.push_back(std::move(row));
        }
        data.push_back(std::move(rows));
    }
    j["data"] = std::move(data);
    return j;
}

NetworkMatrix network_from_json(const nlohmann::json& j) {
    const std::string kind_str = j.at("kind").get<std::string>();
    MatrixKind kind;
    if (kind_str == "impedance") {
        kind = MatrixKind::Impedance;
    } else if (kind_str == "scattering") {
        kind = MatrixKind::Scattering;
    } else {
        throw std::invalid_argument("network_from_json: kind must be 'impedance' or 'scattering'");
    }
    const auto freqs = j.at("freqs_hz").get<std::vector<double>>();
    const double z_ref = j.value("z_ref", 50.0);
    std::vector<Eigen::MatrixXcd> data;
    for (const auto& rows : j.at("data")) {
        const int n = static_cast<int>(rows.size());
        Eigen::MatrixXcd m(n, n);
        for (int i = 0; i < n; ++i) {
            const auto& row = rows.at(i);
            if (static_cast<int>(row.size()) != n) {
                throw std::invalid_argument("network_from_json: data matrices must be square");
            }
            for (int jx = 0; jx < n; ++jx) {
                const auto& entry = row.at(jx);
                m(i, jx) = cxd(entry.at(0).get<double>(), entry.at(1).get<double>());
            }
        }
        data.push_back(std::move(m));
    }
    return NetworkMatrix(kind, freqs, std::move(data), z_ref);
}

void save_json(const NetworkMatrix& nm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("save_json: cannot open " + path + " for writing");
    out << to_json(nm).dump(2) << '\n';
    if (!out) throw IoFailure("save_json: write failed for " + path);
}

NetworkMatrix load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("load_json: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("load_json: invalid JSON in " + path + ": " + e.what());
    }
    return network_from_json(j);
}

}  // namespace combforge::netalg
