// File export for inspection: single-channel maps as ASCII portable graymaps
// (P2, maxval 65535, row-major, min-max normalized per map) and raw floats as
// CSV. Deterministic output bytes for identical inputs.
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxagg {

inline void write_pgm(const std::string& path, const std::vector<double>& values, int64_t h, int64_t w) {
    if (static_cast<int64_t>(values.size()) != h * w) throw std::invalid_argument("write_pgm: size mismatch");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
    os << "P2\n" << w << " " << h << "\n65535\n";
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const double v = values[static_cast<size_t>(y * w + x)];
            const long q = span > 0.0 ? std::lround((v - lo) / span * 65535.0) : 0;
            os << q << (x + 1 < w ? " " : "");
        }
        os << "\n";
    }
    if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

inline void write_csv_matrix(const std::string& path, const std::vector<double>& values, int64_t h, int64_t w) {
    if (static_cast<int64_t>(values.size()) != h * w) throw std::invalid_argument("write_csv_matrix: size mismatch");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_csv_matrix: cannot open " + path);
    char buf[64];
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            std::snprintf(buf, sizeof(buf), "%.17g", values[static_cast<size_t>(y * w + x)]);
            os << buf << (x + 1 < w ? "," : "");
        }
        os << "\n";
    }
    if (!os) throw std::runtime_error("write_csv_matrix: write failed for " + path);
}

}  // namespace ctxagg
