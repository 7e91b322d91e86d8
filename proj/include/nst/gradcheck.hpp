#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nst/losses.hpp"
#include "nst/mmd.hpp"
#include "nst/net.hpp"

namespace nst {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 1e-4;

    bool all_pass() const {
        for (const auto& e : entries)
            if (!(e.max_rel_err < tolerance)) return false;
        return true;
    }
};

namespace gradcheck_detail {

// Central finite differences over the given parameter blocks against the
// analytic gradient. The error is scale-normalized: max_i |fd_i - an_i|
// divided by the largest gradient magnitude seen on either side.
inline double fd_max_rel_error(const std::vector<std::vector<double>*>& blocks,
                               const std::vector<const std::vector<double>*>& analytic,
                               const std::function<double()>& eval, double step = 1e-5) {
    double max_diff = 0.0, denom = 1e-12;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        std::vector<double>& p = *blocks[b];
        const std::vector<double>& an = *analytic[b];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + step;
            const double up = eval();
            p[i] = saved - step;
            const double down = eval();
            p[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            max_diff = std::max(max_diff, std::abs(fd - an[i]));
            denom = std::max({denom, std::abs(fd), std::abs(an[i])});
        }
    }
    return max_diff / denom;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (double& v : m.data) v = u(rng);
    return m;
}

inline Batch4 random_batch(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                           std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Batch4 b(n, c, h, w);
    for (double& v : b.data) v = u(rng);
    return b;
}

// magnitudes bounded away from zero, for the |.| kink in AbsSum
inline Batch4 random_batch_signed_away_from_zero(std::size_t n, std::size_t c, std::size_t h,
                                                 std::size_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.2, 1.2);
    std::bernoulli_distribution sign(0.5);
    Batch4 b(n, c, h, w);
    for (double& v : b.data) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    return b;
}

// Freezes the adaptive Gaussian bandwidth to the forward value so the FD
// direction matches the stop-gradient convention of the analytic path.
inline KernelSpec frozen_spec(const KernelSpec& spec, const MmdResult& forward_result) {
    if (spec.family != KernelFamily::Gaussian || spec.bandwidth == BandwidthRule::Fixed)
        return spec;
    return KernelSpec::gaussian_fixed(*forward_result.sigma_sq_used);
}

}  // namespace gradcheck_detail

// Runs every finite-difference suite (mmd, losses, full network). `corrupt`
// is a test hook: a nonzero value is added to one analytic gradient entry so
// callers can confirm the gate actually trips.
inline GradCheckReport run_gradcheck(std::uint64_t seed = 1, double corrupt = 0.0) {
    namespace gd = gradcheck_detail;
    GradCheckReport report;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

    auto add = [&](const std::string& name, double err) {
        report.entries.push_back({name, err});
    };

    const std::vector<std::pair<std::string, KernelSpec>> kernels = {
        {"linear", KernelSpec::linear()},
        {"poly", KernelSpec::polynomial(2, 0.0)},
        {"gaussian", KernelSpec::gaussian()},
    };

    // mmd_sq: d/dY on random 4x6 sets
    for (const auto& [kname, spec] : kernels) {
        Matrix x = gd::random_matrix(4, 6, rng);
        Matrix y = gd::random_matrix(4, 6, rng);
        MmdResult res = mmd_sq(spec, x, y, true);
        if (corrupt != 0.0 && report.entries.empty()) res.grad_y->data[0] += corrupt;
        const KernelSpec fixed = gd::frozen_spec(spec, res);
        const double err = gd::fd_max_rel_error(
            {&y.data}, {&res.grad_y->data}, [&] { return mmd_sq(fixed, x, y, false).value; });
        add("mmd_sq(" + kname + ")", err);
    }

    // mmd_sq_normalized: d/d f_s through the row normalization
    for (const auto& [kname, spec] : kernels) {
        Matrix ft = gd::random_matrix(5, 6, rng);
        Matrix fs = gd::random_matrix(4, 6, rng);
        MmdResult res = mmd_sq_normalized(spec, ft, fs, true);
        const KernelSpec fixed = gd::frozen_spec(spec, res);
        const double err = gd::fd_max_rel_error(
            {&fs.data}, {&res.grad_y->data},
            [&] { return mmd_sq_normalized(fixed, ft, fs, false).value; });
        add("mmd_sq_normalized(" + kname + ")", err);
    }

    // kd_loss on random 3x5 logits at the default settings (tau 4, lambda 16)
    {
        Matrix lt = gd::random_matrix(3, 5, rng, -2.0, 2.0);
        Matrix ls = gd::random_matrix(3, 5, rng, -2.0, 2.0);
        const LossValue lv = kd_loss(lt, ls, 4.0, 16.0);
        const double err = gd::fd_max_rel_error(
            {&ls.data}, {&lv.grad_logits->data},
            [&] { return kd_loss(lt, ls, 4.0, 16.0, false).transfer_part; });
        add("kd_loss", err);
    }

    // fitnet_loss with a channel adapter
    {
        Batch4 ft = gd::random_batch(2, 5, 3, 3, rng);
        Batch4 fs = gd::random_batch(2, 3, 3, 3, rng);
        std::optional<Matrix> adapter = gd::random_matrix(5, 3, rng);
        const LossValue lv = fitnet_loss(ft, fs, adapter, 100.0);
        auto eval = [&] { return fitnet_loss(ft, fs, adapter, 100.0, false).transfer_part; };
        add("fitnet_loss(feature)",
            gd::fd_max_rel_error({&fs.data}, {&lv.grad_feature->data}, eval));
        add("fitnet_loss(adapter)",
            gd::fd_max_rel_error({&adapter->data}, {&lv.grad_adapter->data}, eval));
    }

    // at_loss, both mappings (inputs kept away from the |.| kink)
    for (AtMapping mapping : {AtMapping::AbsSum, AtMapping::SqSum}) {
        Batch4 ft = gd::random_batch_signed_away_from_zero(2, 4, 3, 3, rng);
        Batch4 fs = gd::random_batch_signed_away_from_zero(2, 3, 3, 3, rng);
        const LossValue lv = at_loss(ft, fs, mapping, 1000.0);
        const double err = gd::fd_max_rel_error(
            {&fs.data}, {&lv.grad_feature->data},
            [&] { return at_loss(ft, fs, mapping, 1000.0, false).transfer_part; });
        add(mapping == AtMapping::AbsSum ? "at_loss(abssum)" : "at_loss(sqsum)", err);
    }

    // nst_loss per kernel; the adaptive Gaussian bandwidth is frozen
    // per sample for the FD direction
    for (const auto& [kname, spec] : kernels) {
        Batch4 ft = gd::random_batch(2, 4, 3, 3, rng);
        Batch4 fs = gd::random_batch(2, 3, 3, 3, rng);
        const double lambda = 50.0;
        const LossValue lv = nst_loss(ft, fs, spec, lambda);

        std::vector<KernelSpec> per_sample_spec;
        for (std::size_t b = 0; b < fs.n; ++b) {
            MmdResult r =
                mmd_sq_normalized(spec, sample_as_matrix(ft, b), sample_as_matrix(fs, b), false);
            per_sample_spec.push_back(gd::frozen_spec(spec, r));
        }
        auto eval = [&] {
            double mean = 0.0;
            for (std::size_t b = 0; b < fs.n; ++b)
                mean += mmd_sq_normalized(per_sample_spec[b], sample_as_matrix(ft, b),
                                          sample_as_matrix(fs, b), false)
                            .value;
            return 0.5 * lambda * mean / static_cast<double>(fs.n);
        };
        add("nst_loss(" + kname + ")",
            gd::fd_max_rel_error({&fs.data}, {&lv.grad_feature->data}, eval));
    }

    // plain cross-entropy
    {
        Matrix logits = gd::random_matrix(4, 5, rng, -2.0, 2.0);
        std::vector<std::size_t> labels = {0, 2, 4, 1};
        const LossValue lv = total_loss(logits, labels, {});
        const double err =
            gd::fd_max_rel_error({&logits.data}, {&lv.grad_logits->data},
                                 [&] { return total_loss(logits, labels, {}, false).total; });
        add("cross_entropy", err);
    }

    // full-network backward: CE + each transfer kind, FD over every student
    // parameter (and the adapter)
    {
        Network teacher = make_network(
            2, 4, 4,
            {LayerSpec::conv(5), LayerSpec::relu(true), LayerSpec::flatten(), LayerSpec::dense(4)});
        Network student = make_network(
            2, 4, 4,
            {LayerSpec::conv(3), LayerSpec::relu(true), LayerSpec::flatten(), LayerSpec::dense(4)});
        init_params(teacher, seed ^ 0x11);
        init_params(student, seed ^ 0x22);
        Batch4 x = gd::random_batch(2, 2, 4, 4, rng);
        std::vector<std::size_t> labels = {1, 3};
        const ForwardResult tfwd = forward(teacher, x);

        const std::vector<std::pair<std::string, TransferLoss>> kinds = {
            {"none", TransferLoss{}},
            {"nst:linear", TransferLoss::nst(KernelSpec::linear(), 50.0)},
            {"nst:poly", TransferLoss::nst(KernelSpec::polynomial(2, 0.0), 50.0)},
            {"nst:gaussian", TransferLoss::nst(KernelSpec::gaussian_fixed(1.0), 100.0)},
            {"kd", TransferLoss::kd(4.0, 16.0)},
            {"fitnet", TransferLoss::fitnet(100.0)},
            {"at", TransferLoss::at(AtMapping::SqSum, 1000.0)},
            {"kd+nst:poly",
             TransferLoss::combined({TransferLoss::kd(4.0, 16.0),
                                     TransferLoss::nst(KernelSpec::polynomial(2, 0.0), 50.0)})},
        };
        for (const auto& [kname, loss] : kinds) {
            std::optional<Matrix> adapter;
            if (kname == "fitnet") adapter = gd::random_matrix(5, 3, rng, -0.5, 0.5);

            auto eval_loss = [&](bool want_grad) {
                ForwardResult fwd = forward(student, x);
                std::vector<LossValue> transfers;
                if (kname != "none")
                    transfers.push_back(evaluate_transfer(loss, tfwd.logits, fwd.logits, tfwd.tap,
                                                          fwd.tap, adapter, want_grad));
                return std::make_pair(total_loss(fwd.logits, labels, transfers, want_grad),
                                      std::move(fwd));
            };

            auto [lv, fwd] = eval_loss(true);
            std::optional<Batch4> grad_tap;
            if (lv.grad_feature) grad_tap = *lv.grad_feature;
            const Grads grads = backward(student, fwd, *lv.grad_logits, grad_tap);

            std::vector<std::vector<double>*> blocks;
            std::vector<const std::vector<double>*> analytic;
            for (std::size_t i = 0; i < student.params.size(); ++i) {
                if (student.params[i].w.empty()) continue;
                blocks.push_back(&student.params[i].w);
                analytic.push_back(&grads[i].w);
                blocks.push_back(&student.params[i].b);
                analytic.push_back(&grads[i].b);
            }
            std::vector<double> adapter_grad;
            if (adapter) {
                adapter_grad = lv.grad_adapter->data;
                blocks.push_back(&adapter->data);
                analytic.push_back(&adapter_grad);
            }
            const double err = gd::fd_max_rel_error(blocks, analytic, [&] {
                return eval_loss(false).first.total;
            });
            add("network(" + kname + ")", err);
        }
    }

    return report;
}

}  // namespace nst
