#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace nst {

// Dense row-major matrix of doubles. Feature maps are stored as one of
// these with one channel per row (C x HW).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols)
            throw std::invalid_argument("Matrix: data size does not match rows*cols");
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
    double* row_ptr(std::size_t r) { return data.data() + r * cols; }

    std::size_t size() const { return data.size(); }
};

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!all_finite(m.data))
        throw std::runtime_error(std::string(what) + ": non-finite entries");
}

// Standard product, fixed left-to-right summation over k so results are
// bit-identical between runs.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: inner dimensions disagree");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            double* orow = out.row_ptr(i);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    require_finite(out, "matmul");
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

inline double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

inline double sq_distance(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

inline double row_norm(const Matrix& m, std::size_t r) {
    return std::sqrt(dot(m.row_ptr(r), m.row_ptr(r), m.cols));
}

// Rows with norm below this are treated as degenerate and map to zero rows.
inline constexpr double kNormEps = 1e-12;

// Each row divided by its l2 norm; rows with norm < kNormEps become all
// zeros instead of blowing up.
inline Matrix row_l2_normalize(const Matrix& f) {
    Matrix out(f.rows, f.cols);
    for (std::size_t r = 0; r < f.rows; ++r) {
        const double nrm = row_norm(f, r);
        if (nrm < kNormEps) continue;  // leave the row at zero
        const double inv = 1.0 / nrm;
        for (std::size_t c = 0; c < f.cols; ++c) out.at(r, c) = f.at(r, c) * inv;
    }
    return out;
}

inline double frobenius_sq(const Matrix& a) { return dot(a.data.data(), a.data.data(), a.size()); }

}  // namespace nst
