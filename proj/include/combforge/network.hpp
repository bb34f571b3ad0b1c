// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_NETWORK_HPP
#define COMBFORGE_NETWORK_HPP

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace combforge::netalg {

using cxd = std::complex<double>;

enum class MatrixKind { Impedance, Scattering };

// (Z + z_ref I) is numerically singular in z_to_s.
struct SingularAugmentedMatrix : std::runtime_error {
    explicit SingularAugmentedMatrix(const std::string& what) : std::runtime_error(what) {}
};

// (I - S) is numerically singular in s_to_z, e.g. an ideal open.
struct SingularReflection : std::runtime_error {
    explicit SingularReflection(const std::string& what) : std::runtime_error(what) {}
};

// Termination denominator 1 - gamma*S_kk vanished: unphysical lossless loop.
struct ResonantTermination : std::runtime_error {
    explicit ResonantTermination(const std::string& what) : std::runtime_error(what) {}
};

// losslessness_residual requires a symmetric (reciprocal) matrix.
struct NonReciprocalInput : std::runtime_error {
    explicit NonReciprocalInput(const std::string& what) : std::runtime_error(what) {}
};

// Frequency-indexed complex N x N network matrix, tagged as impedance-kind or
// scattering-kind. Immutable after construction; safe to share across threads.
class NetworkMatrix {
public:
    // Validates shape consistency, strictly increasing frequencies, z_ref > 0.
    NetworkMatrix(MatrixKind kind, std::vector<double> freqs_hz,
                  std::vector<Eigen::MatrixXcd> data, double z_ref = 50.0);

    MatrixKind kind() const { return kind_; }
    int n_ports() const { return static_cast<int>(data_.front().rows()); }
    int n_freqs() const { return static_cast<int>(freqs_hz_.size()); }
    const std::vector<double>& freqs_hz() const { return freqs_hz_; }
    const Eigen::MatrixXcd& at(int freq_index) const { return data_.at(freq_index); }
    const std::vector<Eigen::MatrixXcd>& data() const { return data_; }
    double z_ref() const { return z_ref_; }

    // True when every matrix is symmetric entrywise within tol.
    bool is_reciprocal(double tol = 1e-9) const;

private:
    MatrixKind kind_;
    std::vector<double> freqs_hz_;
    std::vector<Eigen::MatrixXcd> data_;
    double z_ref_;
};

// S = (Z - z_ref I)(Z + z_ref I)^-1 per frequency.
NetworkMatrix z_to_s(const NetworkMatrix& z, double z_ref = 50.0);

// Z = z_ref (I + S)(I - S)^-1 per frequency.
NetworkMatrix s_to_z(const NetworkMatrix& s);

// Terminate 1-based port k with reflection coefficient gamma and drop it:
// S'_ij = S_ij + S_ik gamma S_kj / (1 - gamma S_kk). gamma = 0 is a matched
// load, +1 an ideal open; a resistive load R has gamma = (R-z_ref)/(R+z_ref).
NetworkMatrix terminate_port(const NetworkMatrix& s, int port, cxd gamma);

// Realizability of a reciprocal two-port as a lossless three-port with one
// resistive termination: |Re{Z12}^2 - Re{Z11} Re{Z22}| normalized by
// max(1, |Re{Z11} Re{Z22}|). Zero means realizable.
double losslessness_residual(const Eigen::Matrix2cd& z2p);

nlohmann::json to_json(const NetworkMatrix& nm);
NetworkMatrix network_from_json(const nlohmann::json& j);
void save_json(const NetworkMatrix& nm, const std::string& path);
NetworkMatrix load_json(const std::string& path);

}  // namespace combforge::netalg

#endif  // COMBFORGE_NETWORK_HPP
