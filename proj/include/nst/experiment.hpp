#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nst/checkpoint.hpp"
#include "nst/config.hpp"
#include "nst/data.hpp"
#include "nst/io.hpp"
#include "nst/losses.hpp"
#include "nst/net.hpp"
#include "nst/sgd.hpp"

namespace nst {

struct RunRecord {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<double> train_loss;  // per epoch
    std::vector<double> test_error;  // per epoch
    double final_test_error = 0.0;
    double best_test_error = 0.0;
    std::uint64_t wall_ms = 0;
    std::string config_hash;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    // splitmix64 over seed xor tag
    std::uint64_t z = seed ^ (tag * 0x9e3779b97f4a7c15ull);
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Fraction of samples whose argmax logit disagrees with the label.
inline double evaluate_top1_error(const Network& net, const Dataset& ds,
                                  std::size_t eval_batch = 256) {
    std::size_t wrong = 0;
    for (std::size_t start = 0; start < ds.images.n; start += eval_batch) {
        const std::size_t stop = std::min(start + eval_batch, ds.images.n);
        Batch4 xb(stop - start, ds.images.c, ds.images.h, ds.images.w);
        std::copy(ds.images.sample_ptr(start), ds.images.sample_ptr(start) + xb.data.size(),
                  xb.data.begin());
        const ForwardResult fr = forward(net, xb);
        for (std::size_t i = 0; i < xb.n; ++i) {
            const double* row = fr.logits.row_ptr(i);
            std::size_t arg = 0;
            for (std::size_t c = 1; c < fr.logits.cols; ++c)
                if (row[c] > row[arg]) arg = c;
            if (arg != ds.labels[start + i]) ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(ds.images.n);
}

struct TrainOptions {
    SgdConfig sgd;
    std::size_t epochs = 60;
    std::size_t batch_size = 128;
    std::uint64_t seed = 1;
    const Network* teacher = nullptr;        // frozen; required for transfer losses
    const TransferLoss* transfer = nullptr;  // null -> plain cross-entropy
    bool use_augment = false;
    AugmentSpec augment;
};

namespace detail {

inline bool loss_needs_features(const TransferLoss& t) {
    switch (t.kind) {
        case TransferLoss::Kind::KD: return false;
        case TransferLoss::Kind::Combined:
            for (const auto& p : t.parts)
                if (loss_needs_features(p)) return true;
            return false;
        default: return true;
    }
}

inline bool loss_needs_adapter(const TransferLoss& t, std::size_t ct, std::size_t cs) {
    if (ct == cs) return false;
    if (t.kind == TransferLoss::Kind::FitNet) return true;
    if (t.kind == TransferLoss::Kind::Combined)
        for (const auto& p : t.parts)
            if (p.kind == TransferLoss::Kind::FitNet) return true;
    return false;
}

inline Batch4 gather_batch(const Dataset& ds, const std::vector<std::size_t>& order,
                           std::size_t start, std::size_t stop,
                           std::vector<std::size_t>& labels) {
    Batch4 xb(stop - start, ds.images.c, ds.images.h, ds.images.w);
    labels.resize(stop - start);
    for (std::size_t i = start; i < stop; ++i) {
        const std::size_t src = order[i];
        std::copy(ds.images.sample_ptr(src), ds.images.sample_ptr(src) + ds.images.sample_size(),
                  xb.sample_ptr(i - start));
        labels[i - start] = ds.labels[src];
    }
    return xb;
}

}  // namespace detail

// Trains `student` in place; the teacher (when given) stays frozen. Returns
// per-epoch train loss and test error. Fully deterministic for a fixed
// options.seed.
inline RunRecord train_student(Network& student, const Dataset& train, const Dataset& test,
                               const TrainOptions& opt) {
    opt.sgd.validate();
    if (opt.transfer && !opt.teacher)
        throw std::invalid_argument("train_student: transfer loss requires a teacher");

    if (opt.use_augment &&
        (opt.augment.crop != train.images.h || opt.augment.crop != train.images.w))
        throw std::invalid_argument(
            "train_student: augment crop must equal the (square) image side, otherwise train "
            "and eval shapes diverge");

    RunRecord rec;
    init_params(student, mix_seed(opt.seed, 0x57));

    // FitNet adapter when tap channel counts differ
    std::optional<Matrix> adapter;
    std::vector<double> adapter_grad;
    if (opt.transfer && detail::loss_needs_features(*opt.transfer)) {
        const int t_tap = opt.teacher->tap_index();
        const int s_tap = student.tap_index();
        if (t_tap < 0 || s_tap < 0)
            throw std::invalid_argument("train_student: transfer loss requires tap layers");
        const std::size_t ct = infer_shapes(*opt.teacher)[t_tap].c;
        const std::size_t cs = infer_shapes(student)[s_tap].c;
        if (detail::loss_needs_adapter(*opt.transfer, ct, cs)) {
            adapter = Matrix(ct, cs);
            std::mt19937_64 arng(mix_seed(opt.seed, 0xADA));
            std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(cs)));
            for (double& v : adapter->data) v = normal(arng);
        }
    }

    std::mt19937_64 shuffle_rng(mix_seed(opt.seed, 0x5F));
    std::mt19937_64 augment_rng(mix_seed(opt.augment.seed != 0 ? opt.augment.seed : opt.seed, 0xA6));
    std::vector<std::size_t> order(train.images.n);
    std::iota(order.begin(), order.end(), 0);

    SgdState state;
    std::vector<std::size_t> labels;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t stop = std::min(start + opt.batch_size, order.size());
            Batch4 xb = detail::gather_batch(train, order, start, stop, labels);
            if (opt.use_augment) xb = augment(xb, opt.augment, augment_rng);

            const ForwardResult fwd = forward(student, xb);
            std::vector<LossValue> transfers;
            if (opt.transfer) {
                const ForwardResult tfwd = forward(*opt.teacher, xb);
                transfers.push_back(evaluate_transfer(*opt.transfer, tfwd.logits, fwd.logits,
                                                      tfwd.tap, fwd.tap, adapter));
            }
            const LossValue lv = total_loss(fwd.logits, labels, transfers);
            epoch_loss += lv.total * static_cast<double>(stop - start);

            std::optional<Batch4> grad_tap;
            if (lv.grad_feature) grad_tap = *lv.grad_feature;
            const Grads grads = backward(student, fwd, *lv.grad_logits, grad_tap);

            std::vector<std::vector<double>*> ps;
            std::vector<const std::vector<double>*> gs;
            for (std::size_t i = 0; i < student.params.size(); ++i) {
                if (student.params[i].w.empty()) continue;
                ps.push_back(&student.params[i].w);
                gs.push_back(&grads[i].w);
                ps.push_back(&student.params[i].b);
                gs.push_back(&grads[i].b);
            }
            if (adapter) {
                adapter_grad.assign(adapter->size(), 0.0);
                if (lv.grad_adapter) adapter_grad = lv.grad_adapter->data;
                ps.push_back(&adapter->data);
                gs.push_back(&adapter_grad);
            }
            sgd_step_blocks(std::move(ps), gs, opt.sgd, state, epoch);
        }
        rec.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        rec.test_error.push_back(evaluate_top1_error(student, test));
    }
    rec.final_test_error = rec.test_error.empty() ? 1.0 : rec.test_error.back();
    rec.best_test_error =
        rec.test_error.empty() ? 1.0 : *std::min_element(rec.test_error.begin(), rec.test_error.end());
    return rec;
}

// Materializes the configured dataset as (train, test), normalized with
// train-split channel statistics when requested.
inline std::pair<Dataset, Dataset> load_dataset(const DatasetConfig& cfg) {
    Dataset train, test;
    if (cfg.kind == DatasetConfig::Kind::Blobs) {
        Dataset pool = gen_blobs(cfg.classes, cfg.per_class_train + cfg.per_class_test, cfg.dim,
                                 cfg.spread, cfg.seed);
        auto [tr, te] = split_per_class(pool, cfg.per_class_train);
        train = std::move(tr);
        test = std::move(te);
        if (cfg.shape_c != 0) {
            train = reshape_samples(train, cfg.shape_c, cfg.shape_h, cfg.shape_w);
            test = reshape_samples(test, cfg.shape_c, cfg.shape_h, cfg.shape_w);
        }
    } else {
        if (cfg.train_images.empty() || cfg.train_labels.empty() || cfg.test_images.empty() ||
            cfg.test_labels.empty())
            throw ConfigError("idx.*", "idx dataset needs all four file paths");
        train = load_idx(cfg.train_images, cfg.train_labels);
        test = load_idx(cfg.test_images, cfg.test_labels);
        test.split = Split::Test;
        test.num_classes = train.num_classes = std::max(train.num_classes, test.num_classes);
    }
    if (cfg.normalize) {
        const ChannelStats st = channel_stats(train);
        normalize_in_place(train, st);
        normalize_in_place(test, st);
    }
    train.validate();
    test.validate();
    return {std::move(train), std::move(test)};
}

namespace detail {

inline std::string sanitize_filename(std::string s) {
    for (char& c : s)
        if (c == ':' ) c = '-';
        else if (c == '+') c = '_';
    return s;
}

inline void write_run_csv(const RunRecord& rec, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("run csv: cannot open " + path);
    os << "# method=" << rec.method << " seed=" << rec.seed << " config_hash=" << rec.config_hash
       << " wall_ms=" << rec.wall_ms << '\n';
    os << "epoch,train_loss,test_error\n";
    for (std::size_t e = 0; e < rec.train_loss.size(); ++e)
        os << e << ',' << fmt_double(rec.train_loss[e]) << ',' << fmt_double(rec.test_error[e])
           << '\n';
}

}  // namespace detail

inline void write_summary_csv(const std::vector<RunRecord>& records, const std::string& path,
                              std::size_t epochs, bool timing_wall) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("summary csv: cannot open " + path);
    os << "method,seed,final_test_error,best_test_error,epochs,wall_ms\n";
    for (const RunRecord& r : records)
        os << r.method << ',' << r.seed << ',' << fmt_double(r.final_test_error) << ','
           << fmt_double(r.best_test_error) << ',' << epochs << ','
           << (timing_wall ? r.wall_ms : 0) << '\n';
}

// Full protocol: per seed, train a teacher on cross-entropy alone (or load
// one), freeze it, then train a no-transfer baseline student plus one
// student per configured method. Writes one CSV per run, checkpoints, and a
// summary CSV into cfg.output_dir.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                             const std::string& teacher_checkpoint = "") {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    if (!fs::is_directory(cfg.output_dir))
        throw std::runtime_error("train: cannot create output dir " + cfg.output_dir);

    auto [train, test] = load_dataset(cfg.dataset);
    const std::string hash = config_hash(cfg);

    std::vector<RunRecord> records;
    for (std::uint64_t seed : cfg.seeds) {
        // teacher
        Network teacher = make_network(train.images.c, train.images.h, train.images.w,
                                       cfg.teacher_layers);
        if (!teacher_checkpoint.empty()) {
            teacher = load_checkpoint(teacher_checkpoint);
        } else {
            TrainOptions topt;
            topt.sgd = cfg.sgd;
            topt.epochs = cfg.epochs;
            topt.batch_size = cfg.batch_size;
            topt.seed = mix_seed(seed, 0x7EAC);
            topt.use_augment = cfg.use_augment;
            topt.augment = cfg.augment;
            train_student(teacher, train, test, topt);
            save_checkpoint(teacher,
                            (fs::path(cfg.output_dir) /
                             ("teacher_seed" + std::to_string(seed) + ".ckpt")).string());
        }

        // baseline student plus one student per method
        std::vector<NamedMethod> methods;
        methods.push_back({"baseline", TransferLoss{}});
        for (const NamedMethod& m : cfg.methods) methods.push_back(m);

        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const bool is_baseline = mi == 0;
            Network student = make_network(train.images.c, train.images.h, train.images.w,
                                           cfg.student_layers);
            TrainOptions sopt;
            sopt.sgd = cfg.sgd;
            sopt.epochs = cfg.epochs;
            sopt.batch_size = cfg.batch_size;
            // one stream per experiment seed, shared by every method's
            // student, so method comparisons are paired (same init, same
            // batch order; only the transfer loss differs)
            sopt.seed = mix_seed(seed, 0x57D);
            sopt.use_augment = cfg.use_augment;
            sopt.augment = cfg.augment;
            if (!is_baseline) {
                sopt.teacher = &teacher;
                sopt.transfer = &methods[mi].loss;
            }

            const auto t0 = std::chrono::steady_clock::now();
            RunRecord rec = train_student(student, train, test, sopt);
            const auto t1 = std::chrono::steady_clock::now();
            rec.method = methods[mi].name;
            rec.seed = seed;
            rec.config_hash = hash;
            rec.wall_ms = static_cast<std::uint64_t>(
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count());

            const std::string stem =
                detail::sanitize_filename(rec.method) + "_seed" + std::to_string(seed);
            detail::write_run_csv(rec, (fs::path(cfg.output_dir) / (stem + ".csv")).string());
            save_checkpoint(student, (fs::path(cfg.output_dir) / (stem + ".ckpt")).string());
            records.push_back(std::move(rec));
        }
    }

    // summary ordered method-major so rows group naturally
    std::vector<RunRecord> ordered;
    const std::size_t n_methods = cfg.methods.size() + 1;
    for (std::size_t mi = 0; mi < n_methods; ++mi)
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si)
            ordered.push_back(records[si * n_methods + mi]);
    write_summary_csv(ordered, (std::filesystem::path(cfg.output_dir) / "summary.csv").string(),
                      cfg.epochs, cfg.timing_wall);
    return records;
}

}  // namespace nst
