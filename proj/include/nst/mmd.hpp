#pragma once

#include <optional>
#include <span>
#include <stdexcept>

#include "nst/kernel.hpp"
#include "nst/matrix.hpp"

namespace nst {

struct MmdResult {
    double value = 0.0;
    std::optional<Matrix> grad_y;        // d value / d y_rows, when requested
    std::optional<double> sigma_sq_used; // Gaussian only
};

namespace detail {

inline std::span<const double> row_span(const Matrix& m, std::size_t r) {
    return {m.row_ptr(r), m.cols};
}

// Resolves the Gaussian bandwidth for a call; other families return nullopt.
inline std::optional<double> resolve_sigma_sq(const KernelSpec& spec, const Matrix& x,
                                              const Matrix& y) {
    if (spec.family != KernelFamily::Gaussian) return std::nullopt;
    if (spec.bandwidth == BandwidthRule::Fixed) {
        if (!(spec.sigma_sq > 0.0))
            throw std::invalid_argument("mmd_sq: fixed sigma^2 must be > 0");
        return spec.sigma_sq;
    }
    return mean_pairwise_sq_distance(x, y);
}

}  // namespace detail

// Squared MMD between the row sets of x_rows and y_rows (biased V-statistic:
// diagonal self-pairs included, which makes mmd_sq(X, X) exactly zero):
//
//   (1/N^2) sum_ii' k(x_i, x_i') + (1/M^2) sum_jj' k(y_j, y_j')
//                                - (2/NM) sum_ij k(x_i, y_j)
//
// With want_grad_y the analytic derivative with respect to every entry of
// y_rows is returned. sigma^2 is treated as a constant in the gradient even
// under the MeanPairwiseSq rule (stop-gradient through the bandwidth).
inline MmdResult mmd_sq(const KernelSpec& spec, const Matrix& x_rows, const Matrix& y_rows,
                        bool want_grad_y = false) {
    if (x_rows.cols != y_rows.cols) throw std::invalid_argument("mmd_sq: column mismatch");
    if (x_rows.rows == 0 || y_rows.rows == 0)
        throw std::invalid_argument("mmd_sq: both sets need at least one row");

    const std::size_t n = x_rows.rows, m = y_rows.rows;
    const std::optional<double> s2 = detail::resolve_sigma_sq(spec, x_rows, y_rows);

    double sum_xx = 0.0, sum_yy = 0.0, sum_xy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            sum_xx += kernel_eval(spec, detail::row_span(x_rows, i), detail::row_span(x_rows, j), s2);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            sum_yy += kernel_eval(spec, detail::row_span(y_rows, i), detail::row_span(y_rows, j), s2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            sum_xy += kernel_eval(spec, detail::row_span(x_rows, i), detail::row_span(y_rows, j), s2);

    // Combine as means so identical inputs cancel exactly.
    const double mean_xx = sum_xx / (static_cast<double>(n) * static_cast<double>(n));
    const double mean_yy = sum_yy / (static_cast<double>(m) * static_cast<double>(m));
    const double mean_xy = sum_xy / (static_cast<double>(n) * static_cast<double>(m));

    MmdResult res;
    res.value = mean_xx + mean_yy - 2.0 * mean_xy;
    res.sigma_sq_used = s2;
    if (!want_grad_y) return res;

    // d/d y_a = (2/M^2) sum_j dk(y_a, y_j)/dy_a - (2/NM) sum_i dk(y_a, x_i)/dy_a
    Matrix grad(m, y_rows.cols);
    const double wy = 2.0 / (static_cast<double>(m) * static_cast<double>(m));
    const double wxy = -2.0 / (static_cast<double>(n) * static_cast<double>(m));
    const double s2v = s2.value_or(0.0);
    for (std::size_t a = 0; a < m; ++a) {
        double* g = grad.row_ptr(a);
        const auto ya = detail::row_span(y_rows, a);
        for (std::size_t j = 0; j < m; ++j)
            kernel_grad_x(spec, ya, detail::row_span(y_rows, j), s2v, wy, g);
        for (std::size_t i = 0; i < n; ++i)
            kernel_grad_x(spec, ya, detail::row_span(x_rows, i), s2v, wxy, g);
    }
    res.grad_y = std::move(grad);
    return res;
}

// NST inner loss: squared MMD over l2-normalized rows. grad_y (as
// grad_s) is taken with respect to the un-normalized f_s entries, i.e. the
// chain rule runs through the row normalization. Degenerate rows (norm below
// kNormEps) are mapped to zero and receive zero gradient.
inline MmdResult mmd_sq_normalized(const KernelSpec& spec, const Matrix& f_t, const Matrix& f_s,
                                   bool want_grad_s = false) {
    if (f_t.cols != f_s.cols) throw std::invalid_argument("mmd_sq_normalized: column mismatch");
    const Matrix t_hat = row_l2_normalize(f_t);
    const Matrix s_hat = row_l2_normalize(f_s);
    MmdResult res = mmd_sq(spec, t_hat, s_hat, want_grad_s);
    if (!want_grad_s) return res;

    // Row-wise: d/ds = (g - (g . s_hat) s_hat) / ||s||
    Matrix& grad = *res.grad_y;
    for (std::size_t r = 0; r < f_s.rows; ++r) {
        double* g = grad.row_ptr(r);
        const double nrm = row_norm(f_s, r);
        if (nrm < kNormEps) {
            for (std::size_t c = 0; c < f_s.cols; ++c) g[c] = 0.0;
            continue;
        }
        const double* sh = s_hat.row_ptr(r);
        const double gs = dot(g, sh, f_s.cols);
        const double inv = 1.0 / nrm;
        for (std::size_t c = 0; c < f_s.cols; ++c) g[c] = (g[c] - gs * sh[c]) * inv;
    }
    return res;
}

}  // namespace nst
