#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nst/matrix.hpp"

namespace nst {

// Rank-4 batch of per-sample feature maps, contiguous N-C-H-W layout.
struct Batch4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Batch4() = default;
    Batch4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
        : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, 0.0) {
        if (h == 0 || w == 0) throw std::invalid_argument("Batch4: h and w must be >= 1");
    }
    Batch4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, std::vector<double> d)
        : n(n_), c(c_), h(h_), w(w_), data(std::move(d)) {
        if (h == 0 || w == 0) throw std::invalid_argument("Batch4: h and w must be >= 1");
        if (data.size() != n * c * h * w)
            throw std::invalid_argument("Batch4: data size does not match n*c*h*w");
    }

    double& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) {
        return data[((i * c + ch) * h + y) * w + x];
    }
    double at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const {
        return data[((i * c + ch) * h + y) * w + x];
    }

    std::size_t sample_size() const { return c * h * w; }
    const double* sample_ptr(std::size_t i) const { return data.data() + i * sample_size(); }
    double* sample_ptr(std::size_t i) { return data.data() + i * sample_size(); }

    bool same_shape(const Batch4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

// One sample's feature map as a C x HW matrix (copy).
inline Matrix sample_as_matrix(const Batch4& b, std::size_t i) {
    Matrix m(b.c, b.h * b.w);
    const double* p = b.sample_ptr(i);
    std::copy(p, p + b.sample_size(), m.data.begin());
    return m;
}

// Per-channel bilinear interpolation, align-corners-false: source position
// of output pixel i is (i + 0.5) * scale - 0.5, clamped to the valid range.
inline Batch4 bilinear_resize(const Batch4& x, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0)
        throw std::invalid_argument("bilinear_resize: output dims must be >= 1");
    if (out_h == x.h && out_w == x.w) return x;

    Batch4 out(x.n, x.c, out_h, out_w);
    const double scale_y = static_cast<double>(x.h) / static_cast<double>(out_h);
    const double scale_x = static_cast<double>(x.w) / static_cast<double>(out_w);

    // Precompute the per-axis neighbor indices and blend weights.
    std::vector<std::size_t> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
    std::vector<double> wy(out_h), wx(out_w);
    for (std::size_t i = 0; i < out_h; ++i) {
        double sy = (static_cast<double>(i) + 0.5) * scale_y - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(x.h - 1));
        y0[i] = static_cast<std::size_t>(sy);
        y1[i] = std::min(y0[i] + 1, x.h - 1);
        wy[i] = sy - static_cast<double>(y0[i]);
    }
    for (std::size_t j = 0; j < out_w; ++j) {
        double sx = (static_cast<double>(j) + 0.5) * scale_x - 0.5;
        sx = std::clamp(sx, 0.0, static_cast<double>(x.w - 1));
        x0[j] = static_cast<std::size_t>(sx);
        x1[j] = std::min(x0[j] + 1, x.w - 1);
        wx[j] = sx - static_cast<double>(x0[j]);
    }

    for (std::size_t i = 0; i < x.n; ++i)
        for (std::size_t ch = 0; ch < x.c; ++ch)
            for (std::size_t oy = 0; oy < out_h; ++oy)
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    const double v00 = x.at(i, ch, y0[oy], x0[ox]);
                    const double v01 = x.at(i, ch, y0[oy], x1[ox]);
                    const double v10 = x.at(i, ch, y1[oy], x0[ox]);
                    const double v11 = x.at(i, ch, y1[oy], x1[ox]);
                    const double top = v00 + (v01 - v00) * wx[ox];
                    const double bot = v10 + (v11 - v10) * wx[ox];
                    out.at(i, ch, oy, ox) = top + (bot - top) * wy[oy];
                }
    if (!all_finite(out.data)) throw std::runtime_error("bilinear_resize: non-finite entries");
    return out;
}

}  // namespace nst
