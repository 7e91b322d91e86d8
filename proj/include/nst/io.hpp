#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nst/matrix.hpp"

namespace nst {

// Deterministic float formatting for CSV output.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Reads a CSV of doubles, one sample per row. Ragged rows are an error.
inline Matrix read_csv_matrix(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("csv: cannot open " + path);
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t row_cols = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t pos = 0;
                const double v = std::stod(cell, &pos);
                values.push_back(v);
            } catch (const std::exception&) {
                throw std::runtime_error("csv: bad number '" + cell + "' in " + path);
            }
            ++row_cols;
        }
        if (rows == 0)
            cols = row_cols;
        else if (row_cols != cols)
            throw std::runtime_error("csv: ragged row in " + path);
        ++rows;
    }
    if (rows == 0) throw std::runtime_error("csv: empty file " + path);
    return Matrix(rows, cols, std::move(values));
}

inline void write_csv_matrix(const Matrix& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("csv: cannot open for writing " + path);
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (c) os << ',';
            os << fmt_double(m.at(r, c));
        }
        os << '\n';
    }
}

}  // namespace nst
