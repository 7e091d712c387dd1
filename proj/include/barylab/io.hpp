#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "barylab/errors.hpp"
#include "barylab/graph.hpp"
#include "barylab/types.hpp"

namespace barylab {

namespace detail {

inline double parse_real(const std::string& token, int line, int column) {
    try {
        std::size_t used = 0;
        const double value = std::stod(token, &used);
        // Reject trailing garbage such as "0.1abc".
        for (std::size_t i = used; i < token.size(); ++i) {
            if (!std::isspace(static_cast<unsigned char>(token[i]))) {
                throw std::invalid_argument(token);
            }
        }
        return value;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": cannot parse '" + token + "' as a real number");
    }
}

inline std::vector<std::vector<double>> read_csv_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // Skip blank lines and comment lines.
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string token;
        int column = 0;
        while (std::getline(ss, token, ',')) {
            ++column;
            if (token.find_first_not_of(" \t") == std::string::npos) {
                throw ParseError("line " + std::to_string(line_no) + ", column " +
                                 std::to_string(column) + ": empty field");
            }
            row.push_back(parse_real(token, line_no, column));
        }
        if (row.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": no fields");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

// One histogram per row, comma separated; rows are normalized to unit mass.
inline std::vector<Histogram> read_histogram_csv(const std::string& path) {
    const auto rows = detail::read_csv_rows(path);
    if (rows.empty()) throw ParseError("'" + path + "': no histogram rows");
    const std::size_t n = rows.front().size();
    std::vector<Histogram> result;
    result.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != n) {
            throw DimensionError("'" + path + "': row " + std::to_string(r + 1) + " has " +
                                 std::to_string(rows[r].size()) + " fields, expected " +
                                 std::to_string(n));
        }
        Vec v(n);
        for (std::size_t j = 0; j < n; ++j) v[j] = rows[r][j];
        result.emplace_back(v, MassMode::kNormalize);
    }
    return result;
}

// Square matrix, one row per line, comma separated.
inline CostMatrix read_cost_csv(const std::string& path) {
    const auto rows = detail::read_csv_rows(path);
    const std::size_t n = rows.size();
    if (n == 0) throw ParseError("'" + path + "': empty cost matrix");
    Mat c(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) {
            throw DimensionError("'" + path + "': cost row " + std::to_string(i + 1) + " has " +
                                 std::to_string(rows[i].size()) + " fields, expected " +
                                 std::to_string(n) + " (square matrix)");
        }
        for (std::size_t j = 0; j < n; ++j) c(i, j) = rows[i][j];
    }
    return CostMatrix(c);
}

// "i j" per line, zero-indexed, undirected.
inline EdgeList read_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    EdgeList edges;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        long a = 0, b = 0;
        if (!(ss >> a >> b)) {
            throw ParseError("line " + std::to_string(line_no) + ": expected two integers");
        }
        std::string rest;
        if (ss >> rest) {
            throw ParseError("line " + std::to_string(line_no) + ": trailing tokens after edge");
        }
        edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
    return edges;
}

// Squared Euclidean distances between n equispaced points on [0, 1].
inline CostMatrix grid_cost_1d(Eigen::Index n) {
    if (n < 2) throw DimensionError("grid_cost_1d: need n >= 2");
    Mat c(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = static_cast<double>(i - j) / static_cast<double>(n - 1);
            c(i, j) = d * d;
        }
    }
    return CostMatrix(c);
}

// Squared Euclidean distances between pixels of a rows x cols grid spread over
// the unit square, flattened row-major.
inline CostMatrix grid_cost_2d(Eigen::Index rows, Eigen::Index cols) {
    if (rows < 1 || cols < 1 || rows * cols < 2) {
        throw DimensionError("grid_cost_2d: need at least 2 grid points");
    }
    const Eigen::Index n = rows * cols;
    const double sx = rows > 1 ? 1.0 / static_cast<double>(rows - 1) : 0.0;
    const double sy = cols > 1 ? 1.0 / static_cast<double>(cols - 1) : 0.0;
    Mat c(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        const double xa = static_cast<double>(a / cols) * sx;
        const double ya = static_cast<double>(a % cols) * sy;
        for (Eigen::Index b = 0; b < n; ++b) {
            const double xb = static_cast<double>(b / cols) * sx;
            const double yb = static_cast<double>(b % cols) * sy;
            c(a, b) = (xa - xb) * (xa - xb) + (ya - yb) * (ya - yb);
        }
    }
    return CostMatrix(c);
}

struct PgmImage {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Vec pixels;  // row-major
};

// Portable graymap, ASCII (P2) or binary (P5); maxval up to 65535.
inline PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");

    auto next_token = [&in, &path]() -> std::string {
        std::string tok;
        int ch = 0;
        while ((ch = in.get()) != EOF) {
            if (ch == '#') {
                while ((ch = in.get()) != EOF && ch != '\n') {
                }
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        if (tok.empty()) throw ParseError("'" + path + "': truncated PGM header");
        return tok;
    };

    const std::string magic = next_token();
    if (magic != "P2" && magic != "P5") {
        throw ParseError("'" + path + "': not a PGM file (magic '" + magic + "')");
    }
    auto parse_int = [&path](const std::string& tok) -> long {
        try {
            std::size_t used = 0;
            const long v = std::stol(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw ParseError("'" + path + "': bad PGM header token '" + tok + "'");
        }
    };
    const long width = parse_int(next_token());
    const long height = parse_int(next_token());
    const long maxval = parse_int(next_token());
    if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
        throw ParseError("'" + path + "': invalid PGM dimensions/maxval");
    }

    PgmImage img;
    img.rows = height;
    img.cols = width;
    img.pixels.resize(width * height);
    const long count = width * height;
    if (magic == "P2") {
        for (long i = 0; i < count; ++i) {
            img.pixels[i] = static_cast<double>(parse_int(next_token()));
        }
    } else {
        // Binary samples follow a single whitespace byte after maxval; the
        // header tokenizer has already consumed it.
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> buf(static_cast<std::size_t>(count) * bytes);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
            throw ParseError("'" + path + "': truncated PGM pixel data");
        }
        for (long i = 0; i < count; ++i) {
            if (bytes == 1) {
                img.pixels[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
            } else {
                const std::size_t o = static_cast<std::size_t>(i) * 2;
                img.pixels[i] = static_cast<double>((static_cast<std::uint16_t>(buf[o]) << 8) |
                                                    buf[o + 1]);
            }
        }
    }
    for (long i = 0; i < count; ++i) {
        if (img.pixels[i] < 0 || img.pixels[i] > static_cast<double>(maxval)) {
            throw ParseError("'" + path + "': pixel value out of range");
        }
    }
    return img;
}

// Discretized Gaussian mixtures on n equispaced points of [0, 1]; a fixed seed
// reproduces the same family bit for bit.  A small floor keeps every bin
// strictly positive so the measures are valid solver inputs.
inline std::vector<Histogram> gauss_mix_instance(Eigen::Index n, int m, std::uint64_t seed) {
    if (n < 2) throw DimensionError("gauss_mix_instance: need n >= 2");
    if (m < 1) throw DimensionError("gauss_mix_instance: need m >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> comp_count(1, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sigma_draw(0.05, 0.25);

    std::vector<Histogram> result;
    result.reserve(static_cast<std::size_t>(m));
    for (int l = 0; l < m; ++l) {
        const int k = comp_count(rng);
        std::vector<double> mean(k), sigma(k), mix(k);
        double mix_total = 0.0;
        for (int c = 0; c < k; ++c) {
            mean[c] = unit(rng);
            sigma[c] = sigma_draw(rng);
            mix[c] = 0.1 + unit(rng);
            mix_total += mix[c];
        }
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = static_cast<double>(i) / static_cast<double>(n - 1);
            double density = 0.0;
            for (int c = 0; c < k; ++c) {
                const double z = (x - mean[c]) / sigma[c];
                density += mix[c] / mix_total * std::exp(-0.5 * z * z) / sigma[c];
            }
            v[i] = density + 1e-9;
        }
        result.emplace_back(v, MassMode::kNormalize);
    }
    return result;
}

}  // namespace barylab
