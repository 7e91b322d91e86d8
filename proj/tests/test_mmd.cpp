#include <catch_amalgamated.hpp>

#include "nst/kernel.hpp"
#include "nst/mmd.hpp"
#include "oracles.hpp"

using nst::KernelSpec;
using nst::Matrix;

namespace {

std::vector<std::pair<std::string, KernelSpec>> test_kernels() {
    return {{"linear", KernelSpec::linear()},
            {"poly", KernelSpec::polynomial(2, 0.0)},
            {"gaussian", KernelSpec::gaussian()}};
}

oracle::KernelFn oracle_kernel_for(const KernelSpec& spec, double sigma_sq) {
    switch (spec.family) {
        case nst::KernelFamily::Linear: return oracle::linear_kernel();
        case nst::KernelFamily::Polynomial: return oracle::poly_kernel(spec.degree, spec.offset);
        case nst::KernelFamily::Gaussian: return oracle::gaussian_kernel(sigma_sq);
    }
    throw std::logic_error("unreachable");
}

}  // namespace

TEST_CASE("kernel_eval known values") {
    const std::vector<double> e1 = {1, 0}, e2 = {0, 1};
    CHECK(nst::kernel_eval(KernelSpec::linear(), e1, e2) == 0.0);

    const std::vector<double> x = {1, 2}, y = {3, 4};
    CHECK(nst::kernel_eval(KernelSpec::polynomial(2, 0.0), x, y) == 121.0);

    CHECK(nst::kernel_eval(KernelSpec::gaussian(), x, x, 0.7) == 1.0);
}

TEST_CASE("kernel_eval errors") {
    const std::vector<double> a = {1, 2}, b = {1, 2, 3};
    CHECK_THROWS_AS(nst::kernel_eval(KernelSpec::linear(), a, b), std::invalid_argument);
    CHECK_THROWS_AS(nst::kernel_eval(KernelSpec::gaussian(), a, a), std::invalid_argument);
    CHECK_THROWS_AS(nst::kernel_eval(KernelSpec::gaussian(), a, a, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec::polynomial(0), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec::gaussian_fixed(0.0), std::invalid_argument);
}

TEST_CASE("mean_pairwise_sq_distance") {
    Matrix x(1, 2, {0, 0});
    Matrix y(1, 2, {3, 4});
    CHECK(nst::mean_pairwise_sq_distance(x, y) == 25.0);

    Matrix same(2, 2, {1, 2, 1, 2});
    CHECK(nst::mean_pairwise_sq_distance(same, same) == 1e-12);

    Matrix x2(2, 1, {0, 2});
    Matrix y2(1, 1, {4});
    CHECK(nst::mean_pairwise_sq_distance(x2, y2) == Catch::Approx(8.0).margin(1e-14));
    CHECK(nst::mean_pairwise_sq_distance(x2, y2) ==
          Catch::Approx(oracle::mean_pairwise_sq(x2, y2)).margin(1e-14));

    Matrix single(1, 1, {0});
    CHECK_THROWS_AS(nst::mean_pairwise_sq_distance(single, Matrix(0, 1)), std::invalid_argument);
}

TEST_CASE("mmd_sq vanishes when the two sets coincide") {
    std::mt19937_64 rng(5);
    const Matrix x = oracle::random_matrix(5, 4, rng);
    for (const auto& [name, spec] : test_kernels()) {
        INFO(name);
        CHECK(std::abs(nst::mmd_sq(spec, x, x).value) <= 1e-10);
    }
}

TEST_CASE("mmd_sq singleton expansion") {
    Matrix x(1, 2, {1, 0});
    Matrix y(1, 2, {0, 1});
    CHECK(nst::mmd_sq(KernelSpec::linear(), x, y).value == Catch::Approx(2.0).margin(1e-14));
}

TEST_CASE("mmd_sq matches the brute-force double sum") {
    std::mt19937_64 rng(17);
    for (const auto& [name, spec] : test_kernels()) {
        INFO(name);
        for (int trial = 0; trial < 20; ++trial) {
            const Matrix x = oracle::random_matrix(5, 3, rng);
            const Matrix y = oracle::random_matrix(4, 3, rng);
            const nst::MmdResult res = nst::mmd_sq(spec, x, y);
            const double sigma = res.sigma_sq_used.value_or(0.0);
            if (spec.family == nst::KernelFamily::Gaussian)
                CHECK(sigma == Catch::Approx(oracle::mean_pairwise_sq(x, y)).margin(1e-12));
            const double want = oracle::mmd_sq_double_sum(oracle_kernel_for(spec, sigma), x, y);
            CHECK(res.value == Catch::Approx(want).margin(1e-10));
        }
    }
}

TEST_CASE("mmd_sq with a fixed Gaussian bandwidth matches the oracle") {
    std::mt19937_64 rng(19);
    const Matrix x = oracle::random_matrix(5, 3, rng);
    const Matrix y = oracle::random_matrix(4, 3, rng);
    const KernelSpec spec = KernelSpec::gaussian_fixed(1.7);
    const nst::MmdResult res = nst::mmd_sq(spec, x, y);
    CHECK(*res.sigma_sq_used == 1.7);
    CHECK(res.value ==
          Catch::Approx(oracle::mmd_sq_double_sum(oracle::gaussian_kernel(1.7), x, y))
              .margin(1e-10));
}

TEST_CASE("mmd_sq symmetry and nonnegativity") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        const Matrix x = oracle::random_matrix(3, 4, rng);
        const Matrix y = oracle::random_matrix(4, 4, rng);
        const auto& kernels = test_kernels();
        const auto& spec = kernels[trial % kernels.size()].second;
        const double xy = nst::mmd_sq(spec, x, y).value;
        const double yx = nst::mmd_sq(spec, y, x).value;
        REQUIRE(std::abs(xy - yx) <= 1e-12);
        REQUIRE(xy >= -1e-9);
    }
}

TEST_CASE("linear mmd equals the squared mean-row difference") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix x = oracle::random_matrix(6, 5, rng);
        const Matrix y = oracle::random_matrix(3, 5, rng);
        std::vector<double> diff(5, 0.0);
        for (std::size_t c = 0; c < 5; ++c) {
            double mx = 0.0, my = 0.0;
            for (std::size_t r = 0; r < x.rows; ++r) mx += x.at(r, c);
            for (std::size_t r = 0; r < y.rows; ++r) my += y.at(r, c);
            diff[c] = mx / x.rows - my / y.rows;
        }
        double want = 0.0;
        for (double d : diff) want += d * d;
        CHECK(nst::mmd_sq(KernelSpec::linear(), x, y).value ==
              Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("mmd_sq_normalized zero cases and scale invariance") {
    std::mt19937_64 rng(37);
    const Matrix f = oracle::random_matrix(5, 6, rng);
    for (const auto& [name, spec] : test_kernels()) {
        INFO(name);
        CHECK(std::abs(nst::mmd_sq_normalized(spec, f, f).value) <= 1e-10);

        Matrix scaled = f;
        for (double& v : scaled.data) v *= 3.7;
        CHECK(std::abs(nst::mmd_sq_normalized(spec, f, scaled).value) <= 1e-10);
    }
}

TEST_CASE("poly mmd_sq_normalized equals the normalized-Gram distance") {
    std::mt19937_64 rng(41);
    const KernelSpec poly = KernelSpec::polynomial(2, 0.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix ft = oracle::random_matrix(6, 8, rng);
        const Matrix fs = oracle::random_matrix(4, 8, rng);
        const Matrix gt = oracle::gram(oracle::normalize_rows(ft), 1.0 / 6.0);
        const Matrix gs = oracle::gram(oracle::normalize_rows(fs), 1.0 / 4.0);
        double want = 0.0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const double d = gt.data[i] - gs.data[i];
            want += d * d;
        }
        CHECK(nst::mmd_sq_normalized(poly, ft, fs).value == Catch::Approx(want).margin(1e-9));
    }
}

TEST_CASE("mmd gradients agree with central differences") {
    std::mt19937_64 rng(43);
    for (const auto& [name, spec] : test_kernels()) {
        INFO(name);
        const Matrix x = oracle::random_matrix(4, 6, rng);
        Matrix y = oracle::random_matrix(4, 6, rng);
        const nst::MmdResult res = nst::mmd_sq(spec, x, y, true);
        // freeze the bandwidth for the finite-difference direction
        const KernelSpec eval_spec = spec.family == nst::KernelFamily::Gaussian
                                         ? KernelSpec::gaussian_fixed(*res.sigma_sq_used)
                                         : spec;
        double max_err = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double fd = oracle::central_diff(
                [&] { return nst::mmd_sq(eval_spec, x, y).value; }, y.data[i]);
            const double an = res.grad_y->data[i];
            max_err = std::max(max_err, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
        }
        CHECK(max_err < 1e-4);
    }
}

TEST_CASE("normalized mmd gradient chains through the row norm") {
    std::mt19937_64 rng(47);
    const Matrix ft = oracle::random_matrix(5, 6, rng);
    Matrix fs = oracle::random_matrix(4, 6, rng);
    for (const auto& [name, spec] : test_kernels()) {
        INFO(name);
        const nst::MmdResult res = nst::mmd_sq_normalized(spec, ft, fs, true);
        const KernelSpec eval_spec = spec.family == nst::KernelFamily::Gaussian
                                         ? KernelSpec::gaussian_fixed(*res.sigma_sq_used)
                                         : spec;
        double max_err = 0.0;
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const double fd = oracle::central_diff(
                [&] { return nst::mmd_sq_normalized(eval_spec, ft, fs).value; }, fs.data[i]);
            const double an = res.grad_y->data[i];
            max_err = std::max(max_err, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
        }
        CHECK(max_err < 1e-4);
    }
}

TEST_CASE("degenerate rows are mapped to zero with zero gradient") {
    Matrix ft(2, 3, {1, 2, 3, 0, 0, 0});
    Matrix fs(2, 3, {0, 0, 0, 4, 5, 6});
    const nst::MmdResult res = nst::mmd_sq_normalized(KernelSpec::linear(), ft, fs, true);
    CHECK(std::isfinite(res.value));
    for (std::size_t c = 0; c < 3; ++c) CHECK(res.grad_y->at(0, c) == 0.0);
}

TEST_CASE("mmd_sq dimension errors") {
    Matrix x(2, 3);
    Matrix y(2, 4);
    CHECK_THROWS_AS(nst::mmd_sq(KernelSpec::linear(), x, y), std::invalid_argument);
    CHECK_THROWS_AS(nst::mmd_sq(KernelSpec::linear(), Matrix(0, 3), x), std::invalid_argument);
}
