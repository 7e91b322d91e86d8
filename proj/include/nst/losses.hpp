#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nst/batch.hpp"
#include "nst/matrix.hpp"
#include "nst/mmd.hpp"

namespace nst {

enum class AtMapping { AbsSum, SqSum };

// A tagged transfer-loss configuration. Combined holds a flat list of
// non-Combined parts.
struct TransferLoss {
    enum class Kind { NST, KD, FitNet, AT, Combined };

    Kind kind = Kind::NST;
    double lambda = 1.0;
    KernelSpec kernel;            // NST
    double tau = 4.0;             // KD
    AtMapping mapping = AtMapping::SqSum;  // AT
    std::vector<TransferLoss> parts;       // Combined

    static TransferLoss nst(const KernelSpec& spec, double lambda) {
        check_lambda(lambda);
        TransferLoss t;
        t.kind = Kind::NST;
        t.kernel = spec;
        t.lambda = lambda;
        return t;
    }
    static TransferLoss kd(double tau, double lambda) {
        check_lambda(lambda);
        if (!(tau > 0.0)) throw std::invalid_argument("TransferLoss: tau must be > 0");
        TransferLoss t;
        t.kind = Kind::KD;
        t.tau = tau;
        t.lambda = lambda;
        return t;
    }
    static TransferLoss fitnet(double lambda) {
        check_lambda(lambda);
        TransferLoss t;
        t.kind = Kind::FitNet;
        t.lambda = lambda;
        return t;
    }
    static TransferLoss at(AtMapping mapping, double lambda) {
        check_lambda(lambda);
        TransferLoss t;
        t.kind = Kind::AT;
        t.mapping = mapping;
        t.lambda = lambda;
        return t;
    }
    static TransferLoss combined(std::vector<TransferLoss> parts) {
        if (parts.empty()) throw std::invalid_argument("TransferLoss: combined list is empty");
        for (const auto& p : parts)
            if (p.kind == Kind::Combined)
                throw std::invalid_argument("TransferLoss: combined lists cannot nest");
        TransferLoss t;
        t.kind = Kind::Combined;
        t.parts = std::move(parts);
        return t;
    }

  private:
    static void check_lambda(double l) {
        if (l < 0.0) throw std::invalid_argument("TransferLoss: lambda must be >= 0");
    }
};

// Default weights: NST linear/poly 5e1, Gaussian 1e2; KD tau=4 lambda=16;
// FitNet 1e2; AT 1e3.
inline double default_nst_lambda(KernelFamily family) {
    return family == KernelFamily::Gaussian ? 100.0 : 50.0;
}
inline constexpr double kDefaultKdTau = 4.0;
inline constexpr double kDefaultKdLambda = 16.0;
inline constexpr double kDefaultFitnetLambda = 100.0;
inline constexpr double kDefaultAtLambda = 1000.0;

struct LossValue {
    double total = 0.0;
    double ce_part = 0.0;
    double transfer_part = 0.0;
    std::optional<Matrix> grad_logits;   // d/d student logits
    std::optional<Batch4> grad_feature;  // d/d student tap features
    std::optional<Matrix> grad_adapter;  // d/d FitNet adapter weights
};

// Row-wise softmax of logits/tau, max-subtracted for stability.
inline Matrix softened_softmax(const Matrix& logits, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("softened_softmax: tau must be > 0");
    Matrix p(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* in = logits.row_ptr(r);
        double* out = p.row_ptr(r);
        double mx = in[0];
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            out[c] = std::exp((in[c] - mx) / tau);
            sum += out[c];
        }
        for (std::size_t c = 0; c < logits.cols; ++c) out[c] /= sum;
    }
    return p;
}

namespace detail {

// Row-wise log softmax of logits/tau.
inline Matrix log_softened_softmax(const Matrix& logits, double tau) {
    Matrix lp(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* in = logits.row_ptr(r);
        double* out = lp.row_ptr(r);
        double mx = in[0];
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp((in[c] - mx) / tau);
        const double lse = std::log(sum);
        for (std::size_t c = 0; c < logits.cols; ++c) out[c] = (in[c] - mx) / tau - lse;
    }
    return lp;
}

// Teacher maps are resized to the student's spatial size before any
// feature-space comparison; the teacher is constant so no gradient is lost.
inline Batch4 match_teacher_spatial(const Batch4& f_t, const Batch4& f_s) {
    if (f_t.n != f_s.n) throw std::invalid_argument("transfer loss: batch-size mismatch");
    if (f_t.h == f_s.h && f_t.w == f_s.w) return f_t;
    return bilinear_resize(f_t, f_s.h, f_s.w);
}

}  // namespace detail

// (lambda/2) * batch mean of per-sample squared MMD between l2-normalized
// channel patterns (rows of the C x HW per-sample maps).
inline LossValue nst_loss(const Batch4& f_t, const Batch4& f_s, const KernelSpec& spec,
                          double lambda, bool want_grad = true) {
    const Batch4 t = detail::match_teacher_spatial(f_t, f_s);
    const std::size_t batch = f_s.n;
    LossValue lv;
    Batch4 grad(f_s.n, f_s.c, f_s.h, f_s.w);
    double mean_val = 0.0;
    const double gscale = lambda / (2.0 * static_cast<double>(batch));
    for (std::size_t b = 0; b < batch; ++b) {
        MmdResult r = mmd_sq_normalized(spec, sample_as_matrix(t, b), sample_as_matrix(f_s, b),
                                        want_grad);
        mean_val += r.value;
        if (want_grad) {
            double* g = grad.sample_ptr(b);
            const Matrix& gs = *r.grad_y;
            for (std::size_t i = 0; i < gs.size(); ++i) g[i] = gscale * gs.data[i];
        }
    }
    mean_val /= static_cast<double>(batch);
    lv.transfer_part = 0.5 * lambda * mean_val;
    lv.total = lv.transfer_part;
    if (want_grad) lv.grad_feature = std::move(grad);
    return lv;
}

// lambda * tau^2 * batch mean of H(p_T^tau, p_S^tau). The tau^2 factor keeps
// soft-target gradients on the same scale as the hard loss as tau grows.
inline LossValue kd_loss(const Matrix& logits_t, const Matrix& logits_s, double tau,
                         double lambda, bool want_grad = true) {
    if (logits_t.rows != logits_s.rows || logits_t.cols != logits_s.cols)
        throw std::invalid_argument("kd_loss: logits shape mismatch");
    const std::size_t batch = logits_s.rows;
    const Matrix p_t = softened_softmax(logits_t, tau);
    const Matrix p_s = softened_softmax(logits_s, tau);
    const Matrix log_p_s = detail::log_softened_softmax(logits_s, tau);

    double ce = 0.0;
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < logits_s.cols; ++c) ce -= p_t.at(r, c) * log_p_s.at(r, c);
    ce /= static_cast<double>(batch);

    LossValue lv;
    lv.transfer_part = lambda * tau * tau * ce;
    lv.total = lv.transfer_part;
    if (want_grad) {
        Matrix g(batch, logits_s.cols);
        const double scale = lambda * tau / static_cast<double>(batch);
        for (std::size_t i = 0; i < g.size(); ++i)
            g.data[i] = scale * (p_s.data[i] - p_t.data[i]);
        lv.grad_logits = std::move(g);
    }
    return lv;
}

// lambda/2 * batch mean of ||f_t - adapt(f_s)||^2 / (C_T*H*W). The adapter is
// a per-position C_S -> C_T linear map, required when channel counts differ.
inline LossValue fitnet_loss(const Batch4& f_t, const Batch4& f_s,
                             const std::optional<Matrix>& adapter, double lambda,
                             bool want_grad = true) {
    const Batch4 t = detail::match_teacher_spatial(f_t, f_s);
    if (adapter) {
        if (adapter->rows != t.c || adapter->cols != f_s.c)
            throw std::invalid_argument("fitnet_loss: adapter shape must be C_T x C_S");
    } else if (t.c != f_s.c) {
        throw std::invalid_argument("fitnet_loss: channel mismatch and no adapter given");
    }

    const std::size_t batch = f_s.n, hw = f_s.h * f_s.w, ct = t.c;
    const double denom = static_cast<double>(ct) * static_cast<double>(hw);
    const double scale = lambda / (2.0 * static_cast<double>(batch) * denom);

    LossValue lv;
    Batch4 grad_f(f_s.n, f_s.c, f_s.h, f_s.w);
    Matrix grad_w(adapter ? adapter->rows : 0, adapter ? adapter->cols : 0);
    double sum = 0.0;
    std::vector<double> resid(ct * hw);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* tp = t.sample_ptr(b);
        const double* sp = f_s.sample_ptr(b);
        // residual r = f_t - adapt(f_s), laid out C_T x HW
        for (std::size_t i = 0; i < ct; ++i)
            for (std::size_t p = 0; p < hw; ++p) {
                double z;
                if (adapter) {
                    z = 0.0;
                    for (std::size_t j = 0; j < f_s.c; ++j)
                        z += adapter->at(i, j) * sp[j * hw + p];
                } else {
                    z = sp[i * hw + p];
                }
                resid[i * hw + p] = tp[i * hw + p] - z;
            }
        sum += dot(resid.data(), resid.data(), resid.size()) / denom;
        if (!want_grad) continue;
        double* gf = grad_f.sample_ptr(b);
        for (std::size_t i = 0; i < ct; ++i)
            for (std::size_t p = 0; p < hw; ++p) {
                const double r2 = -2.0 * scale * resid[i * hw + p];
                if (adapter) {
                    for (std::size_t j = 0; j < f_s.c; ++j) {
                        gf[j * hw + p] += r2 * adapter->at(i, j);
                        grad_w.at(i, j) += r2 * sp[j * hw + p];
                    }
                } else {
                    gf[i * hw + p] += r2;
                }
            }
    }
    lv.transfer_part = 0.5 * lambda * sum / static_cast<double>(batch);
    lv.total = lv.transfer_part;
    if (want_grad) {
        lv.grad_feature = std::move(grad_f);
        if (adapter) lv.grad_adapter = std::move(grad_w);
    }
    return lv;
}

// Channel-collapsed spatial map per sample, l2-normalized: sum_k |f^k| for
// AbsSum, sum_k (f^k)^2 for SqSum. One row per sample, length HW.
inline Matrix attention_map(const Batch4& f, AtMapping mapping) {
    const std::size_t hw = f.h * f.w;
    Matrix maps(f.n, hw);
    for (std::size_t b = 0; b < f.n; ++b) {
        const double* sp = f.sample_ptr(b);
        double* out = maps.row_ptr(b);
        for (std::size_t ch = 0; ch < f.c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) {
                const double v = sp[ch * hw + p];
                out[p] += mapping == AtMapping::AbsSum ? std::abs(v) : v * v;
            }
    }
    return row_l2_normalize(maps);
}

// lambda * batch mean of ||A(f_t) - A(f_s)||^2 over normalized attention maps.
inline LossValue at_loss(const Batch4& f_t, const Batch4& f_s, AtMapping mapping, double lambda,
                         bool want_grad = true) {
    const Batch4 t = detail::match_teacher_spatial(f_t, f_s);
    const std::size_t batch = f_s.n, hw = f_s.h * f_s.w;
    const Matrix a_t = attention_map(t, mapping);
    const Matrix a_s = attention_map(f_s, mapping);

    LossValue lv;
    Batch4 grad(f_s.n, f_s.c, f_s.h, f_s.w);
    double sum = 0.0;
    std::vector<double> raw(hw), g_raw(hw);
    const double scale = lambda / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        sum += sq_distance(a_t.row_ptr(b), a_s.row_ptr(b), hw);
        if (!want_grad) continue;

        // un-normalized collapsed map and its norm
        const double* sp = f_s.sample_ptr(b);
        std::fill(raw.begin(), raw.end(), 0.0);
        for (std::size_t ch = 0; ch < f_s.c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) {
                const double v = sp[ch * hw + p];
                raw[p] += mapping == AtMapping::AbsSum ? std::abs(v) : v * v;
            }
        const double nrm = std::sqrt(dot(raw.data(), raw.data(), hw));
        if (nrm < kNormEps) continue;  // zero map rule: flat zero gradient

        // d||a_t - a_s||^2 / d a_hat, then back through the normalization
        const double* ah = a_s.row_ptr(b);
        const double* th = a_t.row_ptr(b);
        double gs = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
            g_raw[p] = 2.0 * (ah[p] - th[p]);
            gs += g_raw[p] * ah[p];
        }
        const double inv = 1.0 / nrm;
        for (std::size_t p = 0; p < hw; ++p) g_raw[p] = (g_raw[p] - gs * ah[p]) * inv;

        // back through the channel collapse
        double* gf = grad.sample_ptr(b);
        for (std::size_t ch = 0; ch < f_s.c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) {
                const double v = sp[ch * hw + p];
                double d;
                if (mapping == AtMapping::AbsSum)
                    d = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                else
                    d = 2.0 * v;
                gf[ch * hw + p] = scale * g_raw[p] * d;
            }
    }
    lv.transfer_part = scale * sum;
    lv.total = lv.transfer_part;
    if (want_grad) lv.grad_feature = std::move(grad);
    return lv;
}

// F_hat^T F_hat / C on the row-normalized feature map; HW x HW, symmetric PSD.
inline Matrix gram_matrix_normalized(const Matrix& f) {
    const Matrix f_hat = row_l2_normalize(f);
    const std::size_t hw = f.cols;
    Matrix g(hw, hw);
    const double inv_c = 1.0 / static_cast<double>(f.rows);
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t j = i; j < hw; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < f.rows; ++k) s += f_hat.at(k, i) * f_hat.at(k, j);
            g.at(i, j) = s * inv_c;
            g.at(j, i) = g.at(i, j);
        }
    return g;
}

// Mean cross-entropy of softmax(logits_s) against the integer labels, plus
// the already-evaluated transfer parts. Gradient contributions are summed.
inline LossValue total_loss(const Matrix& logits_s, const std::vector<std::size_t>& labels,
                            const std::vector<LossValue>& transfers, bool want_grad = true) {
    if (labels.size() != logits_s.rows)
        throw std::invalid_argument("total_loss: one label per logits row required");
    const std::size_t batch = logits_s.rows, k = logits_s.cols;
    for (std::size_t b = 0; b < batch; ++b)
        if (labels[b] >= k) throw std::invalid_argument("total_loss: label out of range");

    const Matrix log_p = detail::log_softened_softmax(logits_s, 1.0);
    LossValue lv;
    for (std::size_t b = 0; b < batch; ++b) lv.ce_part -= log_p.at(b, labels[b]);
    lv.ce_part /= static_cast<double>(batch);

    if (want_grad) {
        Matrix g(batch, k);
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < k; ++c) g.at(b, c) = std::exp(log_p.at(b, c)) * inv_b;
            g.at(b, labels[b]) -= inv_b;
        }
        lv.grad_logits = std::move(g);
    }

    for (const LossValue& t : transfers) {
        lv.transfer_part += t.transfer_part;
        if (!want_grad) continue;
        if (t.grad_logits) {
            if (!lv.grad_logits) lv.grad_logits = Matrix(batch, k);
            for (std::size_t i = 0; i < lv.grad_logits->size(); ++i)
                lv.grad_logits->data[i] += t.grad_logits->data[i];
        }
        if (t.grad_feature) {
            if (!lv.grad_feature) {
                lv.grad_feature = t.grad_feature;
            } else {
                if (!lv.grad_feature->same_shape(*t.grad_feature))
                    throw std::invalid_argument("total_loss: transfer feature grads disagree in shape");
                for (std::size_t i = 0; i < lv.grad_feature->data.size(); ++i)
                    lv.grad_feature->data[i] += t.grad_feature->data[i];
            }
        }
        if (t.grad_adapter) lv.grad_adapter = t.grad_adapter;
    }
    lv.total = lv.ce_part + lv.transfer_part;
    return lv;
}

// Dispatches one TransferLoss (or each part of a Combined one) against the
// teacher/student batch outputs and sums the results.
inline LossValue evaluate_transfer(const TransferLoss& loss, const Matrix& logits_t,
                                   const Matrix& logits_s, const Batch4& f_t, const Batch4& f_s,
                                   const std::optional<Matrix>& adapter = std::nullopt,
                                   bool want_grad = true) {
    switch (loss.kind) {
        case TransferLoss::Kind::NST:
            return nst_loss(f_t, f_s, loss.kernel, loss.lambda, want_grad);
        case TransferLoss::Kind::KD:
            return kd_loss(logits_t, logits_s, loss.tau, loss.lambda, want_grad);
        case TransferLoss::Kind::FitNet:
            return fitnet_loss(f_t, f_s, adapter, loss.lambda, want_grad);
        case TransferLoss::Kind::AT:
            return at_loss(f_t, f_s, loss.mapping, loss.lambda, want_grad);
        case TransferLoss::Kind::Combined: {
            std::vector<LossValue> parts;
            parts.reserve(loss.parts.size());
            for (const auto& p : loss.parts)
                parts.push_back(evaluate_transfer(p, logits_t, logits_s, f_t, f_s, adapter, want_grad));
            LossValue lv;
            for (LossValue& p : parts) {
                lv.transfer_part += p.transfer_part;
                if (!want_grad) continue;
                if (p.grad_logits) {
                    if (!lv.grad_logits) lv.grad_logits = Matrix(logits_s.rows, logits_s.cols);
                    for (std::size_t i = 0; i < lv.grad_logits->size(); ++i)
                        lv.grad_logits->data[i] += p.grad_logits->data[i];
                }
                if (p.grad_feature) {
                    if (!lv.grad_feature) {
                        lv.grad_feature = std::move(p.grad_feature);
                    } else {
                        for (std::size_t i = 0; i < lv.grad_feature->data.size(); ++i)
                            lv.grad_feature->data[i] += p.grad_feature->data[i];
                    }
                }
                if (p.grad_adapter) lv.grad_adapter = std::move(p.grad_adapter);
            }
            lv.total = lv.transfer_part;
            return lv;
        }
    }
    throw std::logic_error("evaluate_transfer: unknown kind");
}

}  // namespace nst
