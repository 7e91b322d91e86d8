#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>

#include "nst/matrix.hpp"

namespace nst {

enum class KernelFamily { Linear, Polynomial, Gaussian };
enum class BandwidthRule { MeanPairwiseSq, Fixed };

// Kernel family plus its hyperparameters. degree/offset apply to the
// polynomial family, bandwidth/sigma_sq to the Gaussian one.
struct KernelSpec {
    KernelFamily family = KernelFamily::Linear;
    int degree = 2;
    double offset = 0.0;
    BandwidthRule bandwidth = BandwidthRule::MeanPairwiseSq;
    double sigma_sq = 0.0;  // used when bandwidth == Fixed

    static KernelSpec linear() { return {KernelFamily::Linear}; }
    static KernelSpec polynomial(int d = 2, double c = 0.0) {
        if (d < 1) throw std::invalid_argument("KernelSpec: polynomial degree must be >= 1");
        KernelSpec s;
        s.family = KernelFamily::Polynomial;
        s.degree = d;
        s.offset = c;
        return s;
    }
    static KernelSpec gaussian() { return {KernelFamily::Gaussian}; }
    static KernelSpec gaussian_fixed(double sigma_sq) {
        if (!(sigma_sq > 0.0)) throw std::invalid_argument("KernelSpec: fixed sigma^2 must be > 0");
        KernelSpec s;
        s.family = KernelFamily::Gaussian;
        s.bandwidth = BandwidthRule::Fixed;
        s.sigma_sq = sigma_sq;
        return s;
    }
};

inline double ipow(double base, int exp) {
    double r = 1.0;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

// k(x, y). sigma_sq must be present and positive for the Gaussian family
// (callers resolve the bandwidth rule before getting here).
inline double kernel_eval(const KernelSpec& spec, std::span<const double> x,
                          std::span<const double> y,
                          std::optional<double> sigma_sq = std::nullopt) {
    if (x.size() != y.size()) throw std::invalid_argument("kernel_eval: length mismatch");
    switch (spec.family) {
        case KernelFamily::Linear:
            return dot(x.data(), y.data(), x.size());
        case KernelFamily::Polynomial:
            return ipow(dot(x.data(), y.data(), x.size()) + spec.offset, spec.degree);
        case KernelFamily::Gaussian: {
            double s2 = sigma_sq ? *sigma_sq
                                 : (spec.bandwidth == BandwidthRule::Fixed ? spec.sigma_sq : 0.0);
            if (!(s2 > 0.0))
                throw std::invalid_argument("kernel_eval: Gaussian kernel needs sigma^2 > 0");
            return std::exp(-sq_distance(x.data(), y.data(), x.size()) / (2.0 * s2));
        }
    }
    throw std::logic_error("kernel_eval: unknown family");
}

// dk(x, y)/dx, accumulated into grad with the given weight.
inline void kernel_grad_x(const KernelSpec& spec, std::span<const double> x,
                          std::span<const double> y, double sigma_sq, double weight,
                          double* grad) {
    const std::size_t n = x.size();
    switch (spec.family) {
        case KernelFamily::Linear:
            for (std::size_t i = 0; i < n; ++i) grad[i] += weight * y[i];
            return;
        case KernelFamily::Polynomial: {
            const double base = dot(x.data(), y.data(), n) + spec.offset;
            const double coef = weight * spec.degree * ipow(base, spec.degree - 1);
            for (std::size_t i = 0; i < n; ++i) grad[i] += coef * y[i];
            return;
        }
        case KernelFamily::Gaussian: {
            const double k = std::exp(-sq_distance(x.data(), y.data(), n) / (2.0 * sigma_sq));
            const double coef = -weight * k / sigma_sq;
            for (std::size_t i = 0; i < n; ++i) grad[i] += coef * (x[i] - y[i]);
            return;
        }
    }
    throw std::logic_error("kernel_grad_x: unknown family");
}

// Mean of ||a - b||^2 over all unordered pairs of distinct rows drawn from
// the pooled set X u Y, floored at 1e-12 so a degenerate pool still yields
// a usable Gaussian bandwidth.
inline double mean_pairwise_sq_distance(const Matrix& x_rows, const Matrix& y_rows) {
    if (x_rows.cols != y_rows.cols)
        throw std::invalid_argument("mean_pairwise_sq_distance: column mismatch");
    const std::size_t n = x_rows.rows, m = y_rows.rows, dim = x_rows.cols;
    const std::size_t total = n + m;
    if (total < 2)
        throw std::invalid_argument("mean_pairwise_sq_distance: need at least 2 pooled rows");

    auto row_at = [&](std::size_t i) -> const double* {
        return i < n ? x_rows.row_ptr(i) : y_rows.row_ptr(i - n);
    };
    double sum = 0.0;
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = i + 1; j < total; ++j) sum += sq_distance(row_at(i), row_at(j), dim);
    const double pairs = 0.5 * static_cast<double>(total) * static_cast<double>(total - 1);
    return std::max(sum / pairs, 1e-12);
}

}  // namespace nst
