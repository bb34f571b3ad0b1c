// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/touchstone.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "combforge/errors.hpp"

namespace combforge::netalg {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

void append_value(std::ostream& out, cxd v, TouchstoneFormat format) {
    char buf[64];
    if (format == TouchstoneFormat::RealImag) {
        std::snprintf(buf, sizeof(buf), " %.12e %.12e", v.real(), v.imag());
    } else {
        std::snprintf(buf, sizeof(buf), " %.12e %.12e", std::abs(v),
                      std::arg(v) * 180.0 / kPi);
    }
    out << buf;
}

cxd decode_value(double a, double b, TouchstoneFormat format) {
    if (format == TouchstoneFormat::RealImag) return {a, b};
    const double rad = b * kPi / 180.0;
    return {a * std::cos(rad), a * std::sin(rad)};
}

}  // namespace

void write_touchstone(const NetworkMatrix& s, const std::string& path,
                      TouchstoneFormat format) {
    if (s.kind() != MatrixKind::Scattering) {
        throw std::invalid_argument("write_touchstone: input must be scattering-kind");
    }
    const int n = s.n_ports();
    if (n < 1 || n > 4) {
        throw std::invalid_argument("write_touchstone: supports 1 to 4 ports");
    }
    std::ofstream out(path);
    if (!out) throw IoFailure("write_touchstone: cannot open " + path + " for writing");

    out << "! " << n << "-port scattering parameters, " << s.n_freqs()
        << " frequency points\n";
    out << "# HZ S " << (format == TouchstoneFormat::RealImag ? "RI" : "MA") << " R "
        << s.z_ref() << "\n";

    char fbuf[48];
    for (int fi = 0; fi < s.n_freqs(); ++fi) {
        const auto& m = s.at(fi);
        std::snprintf(fbuf, sizeof(fbuf), "%.9f", s.freqs_hz()[fi]);
        if (n <= 2) {
            out << fbuf;
            if (n == 1) {
                append_value(out, m(0, 0), format);
            } else {
                // Two-port files list S11 S21 S12 S22.
                append_value(out, m(0, 0), format);
                append_value(out, m(1, 0), format);
                append_value(out, m(0, 1), format);
                append_value(out, m(1, 1), format);
            }
            out << "\n";
        } else {
            for (int i = 0; i < n; ++i) {
                out << (i == 0 ? std::string(fbuf) : std::string(std::strlen(fbuf), ' '));
                for (int j = 0; j < n; ++j) append_value(out, m(i, j), format);
                out << "\n";
            }
        }
    }
    if (!out) throw IoFailure("write_touchstone: write failed for " + path);
}

NetworkMatrix read_touchstone(const std::string& path) {
    // Port count comes from the .sNp suffix, the standard convention.
    int n_ports = 0;
    {
        const auto dot = path.find_last_of('.');
        if (dot != std::string::npos) {
            const std::string ext = path.substr(dot + 1);
            if (ext.size() == 3 && (ext[0] == 's' || ext[0] == 'S') &&
                std::isdigit(static_cast<unsigned char>(ext[1])) &&
                (ext[2] == 'p' || ext[2] == 'P')) {
                n_ports = ext[1] - '0';
            }
        }
    }
    if (n_ports < 1 || n_ports > 4) {
        throw std::invalid_argument(
            "read_touchstone: port count must come from a .s1p-.s4p extension: " + path);
    }

    std::ifstream in(path);
    if (!in) throw IoFailure("read_touchstone: cannot open " + path);

    double unit_scale = 1e9;  // Touchstone v1 default unit is GHz
    TouchstoneFormat format = TouchstoneFormat::MagnitudeAngle;
    double z_ref = 50.0;
    bool saw_options = false;

    std::vector<double> values;
    std::vector<int> value_lines;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto bang = line.find('!'); bang != std::string::npos) {
            line.erase(bang);
        }
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        if (tok == "#") {
            if (saw_options) continue;  // v1: only the first option line counts
            saw_options = true;
            std::string word;
            while (ls >> word) {
                for (auto& c : word) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
                if (word == "HZ") unit_scale = 1.0;
                else if (word == "KHZ") unit_scale = 1e3;
                else if (word == "MHZ") unit_scale = 1e6;
                else if (word == "GHZ") unit_scale = 1e9;
                else if (word == "RI") format = TouchstoneFormat::RealImag;
                else if (word == "MA") format = TouchstoneFormat::MagnitudeAngle;
                else if (word == "DB") throw TouchstoneParseError("read_touchstone: DB format not supported", line_no);
                else if (word == "S") { /* parameter type */ }
                else if (word == "R") {
                    if (!(ls >> z_ref)) throw TouchstoneParseError("read_touchstone: missing value after R", line_no);
                } else {
                    throw TouchstoneParseError("read_touchstone: unknown option '" + word + "'", line_no);
                }
            }
            continue;
        }
        // Data line: every token must be a number.
        do {
            try {
                std::size_t used = 0;
                const double v = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
                values.push_back(v);
                value_lines.push_back(line_no);
            } catch (const std::exception&) {
                throw TouchstoneParseError("read_touchstone: bad numeric token '" + tok + "'", line_no);
            }
        } while (ls >> tok);
    }

    const std::size_t per_record = 1 + 2 * static_cast<std::size_t>(n_ports) * n_ports;
    if (values.empty()) throw TouchstoneParseError("read_touchstone: no data records", line_no);
    if (values.size() % per_record != 0) {
        throw TouchstoneParseError("read_touchstone: truncated data record",
                                   value_lines.back());
    }

    std::vector<double> freqs;
    std::vector<Eigen::MatrixXcd> data;
    for (std::size_t base = 0; base < values.size(); base += per_record) {
        freqs.push_back(values[base] * unit_scale);
        Eigen::MatrixXcd m(n_ports, n_ports);
        std::size_t p = base + 1;
        if (n_ports == 2) {
            m(0, 0) = decode_value(values[p], values[p + 1], format);
            m(1, 0) = decode_value(values[p + 2], values[p + 3], format);
            m(0, 1) = decode_value(values[p + 4], values[p + 5], format);
            m(1, 1) = decode_value(values[p + 6], values[p + 7], format);
        } else {
            for (int i = 0; i < n_ports; ++i) {
                for (int j = 0; j < n_ports; ++j, p += 2) {
                    m(i, j) = decode_value(values[p], values[p + 1], format);
                }
            }
        }
        data.push_back(std::move(m));
    }
    try {
        return NetworkMatrix(MatrixKind::Scattering, std::move(freqs), std::move(data), z_ref);
    } catch (const std::invalid_argument& e) {
        throw TouchstoneParseError(std::string("read_touchstone: ") + e.what(), line_no);
    }
}

}  // namespace combforge::netalg
