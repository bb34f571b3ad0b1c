// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/pixelgrid.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "combforge/errors.hpp"

namespace combforge::pixelgrid {

namespace {

constexpr std::array<PortRole, 4> kRoles = {PortRole::Main, PortRole::Aux,
                                            PortRole::Output, PortRole::Spare};

Edge standard_edge(PortRole role) {
    switch (role) {
        case PortRole::Main: return Edge::West;
        case PortRole::Aux: return Edge::East;
        case PortRole::Output: return Edge::South;
        case PortRole::Spare: return Edge::North;
    }
    throw std::logic_error("unknown port role");
}

std::pair<int, int> edge_center(Edge e, int rows, int cols) {
    switch (e) {
        case Edge::North: return {0, cols / 2};
        case Edge::South: return {rows - 1, cols / 2};
        case Edge::West: return {rows / 2, 0};
        case Edge::East: return {rows / 2, cols - 1};
    }
    throw std::logic_error("unknown edge");
}

PortFeed make_feed(PortRole role, Edge e, int rows, int cols) {
    auto [r, c] = edge_center(e, rows, cols);
    return PortFeed{role, e, r, c};
}

void validate_geometry(int rows, int cols, double pixel_mm, double overlap) {
    if (rows < 3 || cols < 3)
        throw std::invalid_argument("grid must be at least 3x3, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    if (!(pixel_mm > 0.0))
        throw std::invalid_argument("pixel size must be positive");
    if (!(overlap >= 0.0 && overlap < 0.5))
        throw std::invalid_argument("overlap fraction must lie in [0, 0.5)");
}

// Source cell of the transformed cell (r, c): out(r, c) = in(map(r, c)).
std::pair<int, int> d4_source(D4Element e, int n, int r, int c) {
    const int m = n - 1;
    switch (e) {
        case D4Element::Identity: return {r, c};
        case D4Element::Rot90: return {m - c, r};
        case D4Element::Rot180: return {m - r, m - c};
        case D4Element::Rot270: return {c, m - r};
        case D4Element::MirrorH: return {r, m - c};
        case D4Element::MirrorV: return {m - r, c};
        case D4Element::MirrorD: return {c, r};
        case D4Element::MirrorA: return {m - c, m - r};
    }
    throw std::logic_error("unknown symmetry element");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lg", &back);
    if (back == v) {
        // Prefer the shortest representation that round-trips.
        for (int prec = 1; prec < 17; ++prec) {
            char small[64];
            std::snprintf(small, sizeof small, "%.*g", prec, v);
            std::sscanf(small, "%lg", &back);
            if (back == v) return small;
        }
    }
    return buf;
}

}  // namespace

const char* edge_name(Edge e) {
    switch (e) {
        case Edge::North: return "N";
        case Edge::South: return "S";
        case Edge::East: return "E";
        case Edge::West: return "W";
    }
    throw std::logic_error("unknown edge");
}

const char* role_name(PortRole r) {
    switch (r) {
        case PortRole::Main: return "main";
        case PortRole::Aux: return "aux";
        case PortRole::Output: return "output";
        case PortRole::Spare: return "spare";
    }
    throw std::logic_error("unknown port role");
}

PixelLayout make_layout(int rows, int cols, double pixel_size_mm, double overlap_fraction) {
    validate_geometry(rows, cols, pixel_size_mm, overlap_fraction);
    PixelLayout layout;
    layout.rows = rows;
    layout.cols = cols;
    layout.pixel_size_mm = pixel_size_mm;
    layout.overlap_fraction = overlap_fraction;
    layout.cells.assign(static_cast<std::size_t>(rows) * cols, 0);
    for (PortRole role : kRoles)
        layout.ports[static_cast<std::size_t>(role)] =
            make_feed(role, standard_edge(role), rows, cols);
    force_ports_metal(layout);
    return layout;
}

void force_ports_metal(PixelLayout& layout) {
    for (const PortFeed& feed : layout.ports) layout.set(feed.row, feed.col, true);
}

PixelLayout random_layout(int rows, int cols, double density_mean, double density_std,
                          Rng& rng) {
    PixelLayout layout = make_layout(rows, cols);
    const double density = std::clamp(rng.normal(density_mean, density_std), 0.05, 0.95);
    for (auto& cell : layout.cells) cell = rng.bernoulli(density) ? 1 : 0;
    force_ports_metal(layout);
    return layout;
}

PixelLayout random_layout(int rows, int cols, double density_mean, double density_std,
                          std::uint64_t seed) {
    Rng rng(seed);
    return random_layout(rows, cols, density_mean, density_std, rng);
}

bool is_connected(const PixelLayout& layout) {
    return is_connected(layout, {PortRole::Main, PortRole::Aux, PortRole::Output,
                                 PortRole::Spare});
}

bool is_connected(const PixelLayout& layout, const std::vector<PortRole>& required_ports) {
    if (required_ports.empty()) return true;
    const PortFeed& start = layout.port(required_ports.front());
    if (!layout.metal(start.row, start.col)) return false;
    std::vector<std::uint8_t> seen(layout.cells.size(), 0);
    std::vector<int> stack = {layout.index(start.row, start.col)};
    seen[static_cast<std::size_t>(stack.back())] = 1;
    while (!stack.empty()) {
        const int at = stack.back();
        stack.pop_back();
        const int r = at / layout.cols;
        const int c = at % layout.cols;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int nr = r + dr;
                const int nc = c + dc;
                if (nr < 0 || nr >= layout.rows || nc < 0 || nc >= layout.cols) continue;
                const int ni = layout.index(nr, nc);
                if (seen[static_cast<std::size_t>(ni)] || !layout.metal(nr, nc)) continue;
                seen[static_cast<std::size_t>(ni)] = 1;
                stack.push_back(ni);
            }
        }
    }
    for (PortRole role : required_ports) {
        const PortFeed& feed = layout.port(role);
        if (!seen[static_cast<std::size_t>(layout.index(feed.row, feed.col))]) return false;
    }
    return true;
}

std::size_t design_space_bits(const PixelLayout& layout) {
    return static_cast<std::size_t>(layout.rows) * static_cast<std::size_t>(layout.cols);
}

const std::array<D4Element, 8>& d4_elements() {
    static const std::array<D4Element, 8> elements = {
        D4Element::Identity, D4Element::Rot90,   D4Element::Rot180, D4Element::Rot270,
        D4Element::MirrorH,  D4Element::MirrorV, D4Element::MirrorD, D4Element::MirrorA};
    return elements;
}

const char* d4_name(D4Element e) {
    switch (e) {
        case D4Element::Identity: return "identity";
        case D4Element::Rot90: return "rot90";
        case D4Element::Rot180: return "rot180";
        case D4Element::Rot270: return "rot270";
        case D4Element::MirrorH: return "mirror_h";
        case D4Element::MirrorV: return "mirror_v";
        case D4Element::MirrorD: return "mirror_d";
        case D4Element::MirrorA: return "mirror_a";
    }
    throw std::logic_error("unknown symmetry element");
}

D4Element d4_from_name(const std::string& name) {
    for (D4Element e : d4_elements())
        if (name == d4_name(e)) return e;
    throw std::invalid_argument("unknown symmetry element name: " + name);
}

PixelLayout transform_layout(const PixelLayout& layout, D4Element e) {
    if (layout.rows != layout.cols)
        throw NonSquareGrid("symmetry transform requires a square grid, got " +
                            std::to_string(layout.rows) + "x" + std::to_string(layout.cols));
    if (layout.rows % 2 == 0)
        throw std::invalid_argument(
            "symmetry transform requires an odd grid size so edge-center feeds map onto "
            "each other, got " + std::to_string(layout.rows));
    PixelLayout out = layout;
    const int n = layout.rows;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            auto [sr, sc] = d4_source(e, n, r, c);
            out.set(r, c, layout.metal(sr, sc));
        }
    }
    return out;
}

std::array<int, 4> port_permutation(D4Element e) {
    // Derived on a canonical odd square: the feed cell of the new role r is
    // sourced from the feed cell of exactly one old role.
    constexpr int n = 3;
    std::array<int, 4> perm{};
    for (PortRole role : kRoles) {
        const PortFeed feed = make_feed(role, standard_edge(role), n, n);
        auto [sr, sc] = d4_source(e, n, feed.row, feed.col);
        int found = -1;
        for (PortRole old_role : kRoles) {
            const PortFeed old_feed = make_feed(old_role, standard_edge(old_role), n, n);
            if (old_feed.row == sr && old_feed.col == sc) {
                found = static_cast<int>(old_role);
                break;
            }
        }
        if (found < 0) throw std::logic_error("feed cell does not map onto a feed cell");
        perm[static_cast<std::size_t>(role)] = found;
    }
    return perm;
}

netalg::NetworkMatrix transform_network(const netalg::NetworkMatrix& s4, D4Element e) {
    if (s4.kind() != netalg::MatrixKind::Scattering)
        throw std::invalid_argument("symmetry transform expects scattering parameters");
    if (s4.n_ports() != 4)
        throw std::invalid_argument("symmetry transform expects a 4-port network, got " +
                                    std::to_string(s4.n_ports()) + " ports");
    const std::array<int, 4> perm = port_permutation(e);
    std::vector<Eigen::MatrixXcd> data;
    data.reserve(static_cast<std::size_t>(s4.n_freqs()));
    for (int fi = 0; fi < s4.n_freqs(); ++fi) {
        const Eigen::MatrixXcd& in = s4.at(fi);
        Eigen::MatrixXcd out(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) out(i, j) = in(perm[i], perm[j]);
        data.push_back(std::move(out));
    }
    return netalg::NetworkMatrix(netalg::MatrixKind::Scattering, s4.freqs_hz(),
                                 std::move(data), s4.z_ref());
}

std::vector<AugmentedRecord> augment(const PixelLayout& layout,
                                     const netalg::NetworkMatrix& s4) {
    std::vector<AugmentedRecord> records;
    records.reserve(8);
    for (D4Element e : d4_elements())
        records.push_back({transform_layout(layout, e), transform_network(s4, e), e});
    return records;
}

std::string to_text(const PixelLayout& layout) {
    std::ostringstream out;
    out << "rows=" << layout.rows << " cols=" << layout.cols
        << " pixel_mm=" << format_double(layout.pixel_size_mm)
        << " overlap=" << format_double(layout.overlap_fraction);
    for (PortRole role : kRoles) {
        const PortFeed& feed = layout.port(role);
        out << ' ' << role_name(role) << '=' << edge_name(feed.edge);
    }
    out << '\n';
    for (int r = 0; r < layout.rows; ++r) {
        for (int c = 0; c < layout.cols; ++c) out << (layout.metal(r, c) ? '1' : '0');
        out << '\n';
    }
    return out.str();
}

namespace {

struct HeaderToken {
    std::string key;
    std::string value;
    int col;  // 1-based column of the token start
};

std::vector<HeaderToken> tokenize_header(const std::string& line) {
    std::vector<HeaderToken> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        if (line[i] == ' ' || line[i] == '\t') {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        const std::string token = line.substr(start, i - start);
        const int col = static_cast<int>(start) + 1;
        const std::size_t eq = token.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= token.size())
            throw ParseError("expected key=value, got '" + token + "'", 1, col);
        tokens.push_back({token.substr(0, eq), token.substr(eq + 1), col});
    }
    return tokens;
}

int parse_int(const HeaderToken& t) {
    std::size_t used = 0;
    int value = 0;
    try {
        value = std::stoi(t.value, &used);
    } catch (const std::exception&) {
        throw ParseError("invalid integer for " + t.key + ": '" + t.value + "'", 1, t.col);
    }
    if (used != t.value.size())
        throw ParseError("invalid integer for " + t.key + ": '" + t.value + "'", 1, t.col);
    return value;
}

double parse_double(const HeaderToken& t) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(t.value, &used);
    } catch (const std::exception&) {
        throw ParseError("invalid number for " + t.key + ": '" + t.value + "'", 1, t.col);
    }
    if (used != t.value.size())
        throw ParseError("invalid number for " + t.key + ": '" + t.value + "'", 1, t.col);
    return value;
}

Edge parse_edge(const HeaderToken& t) {
    if (t.value == "N") return Edge::North;
    if (t.value == "S") return Edge::South;
    if (t.value == "E") return Edge::East;
    if (t.value == "W") return Edge::West;
    throw ParseError("invalid edge for " + t.key + ": '" + t.value + "' (want N, S, E or W)",
                     1, t.col);
}

}  // namespace

PixelLayout from_text(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    }
    if (lines.empty()) throw ParseError("missing header line", 1, 1);

    int rows = -1;
    int cols = -1;
    double pixel_mm = 1.8;
    double overlap = 0.20;
    std::array<Edge, 4> edges{};
    for (PortRole role : kRoles)
        edges[static_cast<std::size_t>(role)] = standard_edge(role);

    std::vector<std::string> seen_keys;
    for (const HeaderToken& t : tokenize_header(lines[0])) {
        if (std::find(seen_keys.begin(), seen_keys.end(), t.key) != seen_keys.end())
            throw ParseError("duplicate key '" + t.key + "'", 1, t.col);
        seen_keys.push_back(t.key);
        if (t.key == "rows") {
            rows = parse_int(t);
        } else if (t.key == "cols") {
            cols = parse_int(t);
        } else if (t.key == "pixel_mm") {
            pixel_mm = parse_double(t);
        } else if (t.key == "overlap") {
            overlap = parse_double(t);
        } else if (t.key == "main" || t.key == "aux" || t.key == "output" ||
                   t.key == "spare") {
            std::size_t role_index = 0;
            for (PortRole role : kRoles)
                if (t.key == role_name(role)) role_index = static_cast<std::size_t>(role);
            edges[role_index] = parse_edge(t);
        } else {
            throw ParseError("unknown key '" + t.key + "'", 1, t.col);
        }
    }
    if (rows < 0) throw ParseError("missing required key 'rows'", 1, 1);
    if (cols < 0) throw ParseError("missing required key 'cols'", 1, 1);
    try {
        validate_geometry(rows, cols, pixel_mm, overlap);
    } catch (const std::invalid_argument& err) {
        throw ParseError(err.what(), 1, 1);
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b)
            if (edges[a] == edges[b])
                throw ParseError(std::string("ports ") + role_name(kRoles[a]) + " and " +
                                     role_name(kRoles[b]) + " share edge " +
                                     edge_name(edges[a]),
                                 1, 1);

    PixelLayout layout;
    layout.rows = rows;
    layout.cols = cols;
    layout.pixel_size_mm = pixel_mm;
    layout.overlap_fraction = overlap;
    layout.cells.assign(static_cast<std::size_t>(rows) * cols, 0);
    for (PortRole role : kRoles)
        layout.ports[static_cast<std::size_t>(role)] =
            make_feed(role, edges[static_cast<std::size_t>(role)], rows, cols);

    for (int r = 0; r < rows; ++r) {
        const int line_number = r + 2;
        if (static_cast<std::size_t>(r + 1) >= lines.size())
            throw ParseError("missing grid row " + std::to_string(r + 1) + " of " +
                                 std::to_string(rows),
                             line_number, 1);
        const std::string& line = lines[static_cast<std::size_t>(r + 1)];
        if (static_cast<int>(line.size()) != cols)
            throw ParseError("grid row has " + std::to_string(line.size()) +
                                 " cells, expected " + std::to_string(cols),
                             line_number, static_cast<int>(line.size()) + 1);
        for (int c = 0; c < cols; ++c) {
            if (line[static_cast<std::size_t>(c)] == '1') {
                layout.set(r, c, true);
            } else if (line[static_cast<std::size_t>(c)] != '0') {
                throw ParseError(std::string("invalid cell character '") +
                                     line[static_cast<std::size_t>(c)] + "'",
                                 line_number, c + 1);
            }
        }
    }
    for (std::size_t i = static_cast<std::size_t>(rows) + 1; i < lines.size(); ++i)
        if (!lines[i].empty())
            throw ParseError("unexpected content after grid", static_cast<int>(i) + 1, 1);

    for (const PortFeed& feed : layout.ports)
        if (!layout.metal(feed.row, feed.col))
            throw ParseError(std::string("port cell for ") + role_name(feed.role) +
                                 " is not metal",
                             feed.row + 2, feed.col + 1);
    return layout;
}

void save_text(const PixelLayout& layout, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out << to_text(layout);
    if (!out) throw IoFailure("failed writing " + path);
}

PixelLayout load_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path + " for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

}  // namespace combforge::pixelgrid
