// Command-line harness: train/distill experiments, standalone MMD between
// CSV sample sets, gradient verification, checkpoint evaluation.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "nst/nst.hpp"

namespace {

int cmd_train(const std::string& config_path, const std::string& teacher_ckpt) {
    const nst::ExperimentConfig cfg = nst::load_config(config_path);
    const auto records = nst::run_experiment(cfg, teacher_ckpt);
    for (const auto& r : records)
        std::printf("method=%s seed=%llu final_test_error=%s\n", r.method.c_str(),
                    static_cast<unsigned long long>(r.seed),
                    nst::fmt_double(r.final_test_error).c_str());
    std::printf("summary=%s/summary.csv\n", cfg.output_dir.c_str());
    return 0;
}

int cmd_mmd(const std::string& x_path, const std::string& y_path, const std::string& kernel,
            int degree, double offset, double sigma_sq) {
    nst::KernelSpec spec;
    if (kernel == "linear")
        spec = nst::KernelSpec::linear();
    else if (kernel == "poly")
        spec = nst::KernelSpec::polynomial(degree, offset);
    else if (kernel == "gaussian")
        spec = sigma_sq > 0.0 ? nst::KernelSpec::gaussian_fixed(sigma_sq)
                              : nst::KernelSpec::gaussian();
    else
        throw std::invalid_argument("mmd: unknown kernel '" + kernel + "'");

    const nst::Matrix x = nst::read_csv_matrix(x_path);
    const nst::Matrix y = nst::read_csv_matrix(y_path);
    if (x.cols != y.cols)
        throw std::invalid_argument("mmd: column mismatch between " + x_path + " and " + y_path);
    const nst::MmdResult res = nst::mmd_sq(spec, x, y, false);
    std::printf("mmd_sq=%s\n", nst::fmt_double(res.value).c_str());
    if (res.sigma_sq_used)
        std::printf("sigma_sq=%s\n", nst::fmt_double(*res.sigma_sq_used).c_str());
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double corrupt) {
    const nst::GradCheckReport report = nst::run_gradcheck(seed, corrupt);
    for (const auto& e : report.entries)
        std::printf("%-28s max_rel_err=%-12.3e %s\n", e.name.c_str(), e.max_rel_err,
                    e.max_rel_err < report.tolerance ? "PASS" : "FAIL");
    return report.all_pass() ? 0 : 1;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_config,
             const std::string& split) {
    const nst::Network net = nst::load_checkpoint(ckpt_path);
    const nst::ExperimentConfig cfg = nst::load_config(dataset_config);
    auto [train, test] = nst::load_dataset(cfg.dataset);
    const nst::Dataset& ds = split == "train" ? train : test;
    if (ds.images.c != net.in_c || ds.images.h != net.in_h || ds.images.w != net.in_w)
        throw std::invalid_argument("eval: dataset shape does not match checkpoint input shape");
    std::printf("top1_error=%s\n", nst::fmt_double(nst::evaluate_top1_error(net, ds)).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neuron selectivity transfer toolkit"};
    app.require_subcommand(1);

    std::string config_path, teacher_ckpt;
    auto* train = app.add_subcommand("train", "run the configured distillation experiment");
    train->add_option("config", config_path, "experiment config file")->required();
    train->add_option("--teacher-checkpoint", teacher_ckpt,
                      "reuse a trained teacher instead of training one per seed");

    std::string x_path, y_path, kernel = "linear";
    int degree = 2;
    double offset = 0.0, sigma_sq = 0.0;
    auto* mmd = app.add_subcommand("mmd", "squared MMD between two CSV sample sets");
    mmd->add_option("x", x_path, "CSV, one sample per row")->required();
    mmd->add_option("y", y_path, "CSV, one sample per row")->required();
    mmd->add_option("--kernel", kernel, "linear | poly | gaussian");
    mmd->add_option("--d", degree, "polynomial degree");
    mmd->add_option("--c", offset, "polynomial offset");
    mmd->add_option("--sigma-sq", sigma_sq, "fixed Gaussian bandwidth (default: mean pairwise)");

    std::uint64_t seed = 1;
    double corrupt = 0.0;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gradcheck->add_option("--seed", seed, "RNG seed for the random instances");
    gradcheck->add_option("--corrupt", corrupt, "test hook: perturb one analytic gradient")
        ->group("");  // hidden

    std::string ckpt_path, dataset_config, split = "test";
    auto* eval = app.add_subcommand("eval", "top-1 error of a checkpoint on a dataset");
    eval->add_option("checkpoint", ckpt_path, "NSTCKPT1 file")->required();
    eval->add_option("dataset", dataset_config, "config file providing the dataset keys")
        ->required();
    eval->add_option("--split", split, "train | test (default test)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, teacher_ckpt);
        if (mmd->parsed()) return cmd_mmd(x_path, y_path, kernel, degree, offset, sigma_sq);
        if (gradcheck->parsed()) return cmd_gradcheck(seed, corrupt);
        if (eval->parsed()) return cmd_eval(ckpt_path, dataset_config, split);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
