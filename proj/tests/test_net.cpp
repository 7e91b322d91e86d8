#include <cmath>

#include <catch_amalgamated.hpp>

#include "nst/checkpoint.hpp"
#include "nst/data.hpp"
#include "nst/experiment.hpp"
#include "nst/losses.hpp"
#include "nst/net.hpp"
#include "nst/sgd.hpp"
#include "oracles.hpp"

using nst::Batch4;
using nst::LayerSpec;
using nst::Matrix;
using nst::Network;

namespace {

// Independent straight-line re-implementation of conv3x3(pad 1) -> relu ->
// maxpool2 -> flatten -> dense for one sample.
std::vector<double> oracle_forward_sample(const Network& net, const Batch4& x, std::size_t s) {
    const std::size_t ic = x.c, h = x.h, w = x.w;
    const nst::LayerParams& conv = net.params[0];
    const std::size_t oc = conv.out_dim;
    std::vector<double> conv_out(oc * h * w, 0.0);
    for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                double acc = conv.b[o];
                for (std::size_t i = 0; i < ic; ++i)
                    for (int ky = -1; ky <= 1; ++ky)
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int iy = static_cast<int>(y) + ky;
                            const int ix = static_cast<int>(xx) + kx;
                            if (iy < 0 || iy >= static_cast<int>(h) || ix < 0 ||
                                ix >= static_cast<int>(w))
                                continue;
                            acc += conv.w[((o * ic + i) * 3 + (ky + 1)) * 3 + (kx + 1)] *
                                   x.at(s, i, iy, ix);
                        }
                conv_out[(o * h + y) * w + xx] = acc;
            }
    for (double& v : conv_out) v = std::max(v, 0.0);

    const std::size_t ph = h / 2, pw = w / 2;
    std::vector<double> pooled(oc * ph * pw);
    for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t y = 0; y < ph; ++y)
            for (std::size_t xx = 0; xx < pw; ++xx) {
                double m = conv_out[(o * h + 2 * y) * w + 2 * xx];
                for (int ky = 0; ky < 2; ++ky)
                    for (int kx = 0; kx < 2; ++kx)
                        m = std::max(m, conv_out[(o * h + 2 * y + ky) * w + 2 * xx + kx]);
                pooled[(o * ph + y) * pw + xx] = m;
            }

    const nst::LayerParams& dense = net.params[4];
    std::vector<double> out(dense.out_dim);
    for (std::size_t o = 0; o < dense.out_dim; ++o) {
        double acc = dense.b[o];
        for (std::size_t i = 0; i < dense.in_dim; ++i) acc += dense.w[o * dense.in_dim + i] * pooled[i];
        out[o] = acc;
    }
    return out;
}

}  // namespace

TEST_CASE("forward with zero parameters yields zero logits") {
    Network net = nst::make_network(
        2, 4, 4, {LayerSpec::conv(3), LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(5)});
    std::mt19937_64 rng(3);
    const Batch4 x = oracle::random_batch(2, 2, 4, 4, rng);
    const nst::ForwardResult fr = nst::forward(net, x);
    for (double v : fr.logits.data) CHECK(v == 0.0);
}

TEST_CASE("identity dense chain passes the input through") {
    Network net = nst::make_network(3, 1, 1, {LayerSpec::dense(3), LayerSpec::dense(3)});
    for (auto& p : net.params)
        for (std::size_t i = 0; i < 3; ++i) p.w[i * 3 + i] = 1.0;
    Batch4 x(2, 3, 1, 1, {1, 2, 3, -4, 5, 6});
    const nst::ForwardResult fr = nst::forward(net, x);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(fr.logits.data[i] == x.data[i]);
}

TEST_CASE("forward matches an independent scalar-loop oracle") {
    Network net = nst::make_network(2, 4, 4,
                                    {LayerSpec::conv(3), LayerSpec::relu(), LayerSpec::maxpool(),
                                     LayerSpec::flatten(), LayerSpec::dense(4)});
    nst::init_params(net, 99);
    std::mt19937_64 rng(7);
    const Batch4 x = oracle::random_batch(3, 2, 4, 4, rng);
    const nst::ForwardResult fr = nst::forward(net, x);
    for (std::size_t s = 0; s < 3; ++s) {
        const auto want = oracle_forward_sample(net, x, s);
        for (std::size_t o = 0; o < 4; ++o)
            CHECK(fr.logits.at(s, o) == Catch::Approx(want[o]).margin(1e-10));
    }
}

TEST_CASE("forward shape errors") {
    Network net = nst::make_network(2, 4, 4, {LayerSpec::conv(3)});
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(nst::forward(net, oracle::random_batch(1, 3, 4, 4, rng)),
                    std::invalid_argument);
    // conv output is spatial -> not a valid logits head
    CHECK_THROWS_AS(nst::forward(net, oracle::random_batch(1, 2, 4, 4, rng)),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        nst::make_network(2, 4, 4, {LayerSpec::dense(3)}),  // dense on non-flat input
        std::invalid_argument);
}

TEST_CASE("backward with zero upstream gradients is zero") {
    Network net = nst::make_network(2, 4, 4,
                                    {LayerSpec::conv(3), LayerSpec::relu(true),
                                     LayerSpec::flatten(), LayerSpec::dense(4)});
    nst::init_params(net, 13);
    std::mt19937_64 rng(13);
    const Batch4 x = oracle::random_batch(2, 2, 4, 4, rng);
    const nst::ForwardResult fr = nst::forward(net, x);
    const Matrix zero_logits(2, 4);
    Batch4 zero_tap(2, 3, 4, 4);
    const nst::Grads grads = nst::backward(net, fr, zero_logits, zero_tap);
    for (const auto& g : grads) {
        for (double v : g.w) CHECK(v == 0.0);
        for (double v : g.b) CHECK(v == 0.0);
    }
}

TEST_CASE("single dense layer reproduces the closed-form softmax-CE gradient") {
    Network net = nst::make_network(3, 1, 1, {LayerSpec::dense(4)});
    nst::init_params(net, 21);
    std::mt19937_64 rng(21);
    const Batch4 x = oracle::random_batch(5, 3, 1, 1, rng);
    const std::vector<std::size_t> labels = {0, 1, 2, 3, 0};

    const nst::ForwardResult fr = nst::forward(net, x);
    const nst::LossValue lv = nst::total_loss(fr.logits, labels, {});
    const nst::Grads grads = nst::backward(net, fr, *lv.grad_logits);

    // expected: (softmax - onehot)/batch through w_grad[o,i] = sum_b g[b,o] x[b,i]
    const std::size_t batch = 5;
    Matrix g_expect(batch, 4);
    for (std::size_t b = 0; b < batch; ++b) {
        double denom = 0.0;
        for (std::size_t c = 0; c < 4; ++c) denom += std::exp(fr.logits.at(b, c));
        for (std::size_t c = 0; c < 4; ++c)
            g_expect.at(b, c) = (std::exp(fr.logits.at(b, c)) / denom -
                                 (labels[b] == c ? 1.0 : 0.0)) /
                                static_cast<double>(batch);
    }
    for (std::size_t o = 0; o < 4; ++o) {
        double b_want = 0.0;
        for (std::size_t b = 0; b < batch; ++b) b_want += g_expect.at(b, o);
        CHECK(grads[0].b[o] == Catch::Approx(b_want).margin(1e-12));
        for (std::size_t i = 0; i < 3; ++i) {
            double w_want = 0.0;
            for (std::size_t b = 0; b < batch; ++b) w_want += g_expect.at(b, o) * x.at(b, i, 0, 0);
            CHECK(grads[0].w[o * 3 + i] == Catch::Approx(w_want).margin(1e-12));
        }
    }
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
    Network net = nst::make_network(2, 4, 4,
                                    {LayerSpec::conv(3), LayerSpec::relu(), LayerSpec::maxpool(),
                                     LayerSpec::flatten(), LayerSpec::dense(4)});
    nst::init_params(net, 31);
    std::mt19937_64 rng(31);
    const Batch4 x = oracle::random_batch(2, 2, 4, 4, rng);
    const std::vector<std::size_t> labels = {1, 3};

    const nst::ForwardResult fr = nst::forward(net, x);
    const nst::LossValue lv = nst::total_loss(fr.logits, labels, {});
    const nst::Grads grads = nst::backward(net, fr, *lv.grad_logits);

    auto eval = [&] {
        return nst::total_loss(nst::forward(net, x).logits, labels, {}, false).total;
    };
    // 20 randomly chosen parameters across all blocks
    std::vector<std::pair<std::vector<double>*, const std::vector<double>*>> blocks;
    for (std::size_t i = 0; i < net.params.size(); ++i)
        if (!net.params[i].w.empty()) {
            blocks.push_back({&net.params[i].w, &grads[i].w});
            blocks.push_back({&net.params[i].b, &grads[i].b});
        }
    std::uniform_int_distribution<std::size_t> pick_block(0, blocks.size() - 1);
    double max_err = 0.0;
    for (int t = 0; t < 20; ++t) {
        const std::size_t bi = pick_block(rng);
        std::uniform_int_distribution<std::size_t> pick(0, blocks[bi].first->size() - 1);
        const std::size_t k = pick(rng);
        const double fd = oracle::central_diff(eval, (*blocks[bi].first)[k]);
        const double an = (*blocks[bi].second)[k];
        max_err = std::max(max_err, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(max_err < 1e-4);
}

TEST_CASE("tap gradient injection reaches only the layers beneath the tap") {
    Network net = nst::make_network(2, 4, 4,
                                    {LayerSpec::conv(3), LayerSpec::relu(true),
                                     LayerSpec::flatten(), LayerSpec::dense(4)});
    nst::init_params(net, 37);
    std::mt19937_64 rng(37);
    const Batch4 x = oracle::random_batch(2, 2, 4, 4, rng, 0.1, 1.0);
    const nst::ForwardResult fr = nst::forward(net, x);

    Batch4 tap_grad(2, 3, 4, 4);
    for (double& v : tap_grad.data) v = 0.5;
    const nst::Grads grads = nst::backward(net, fr, Matrix(2, 4), tap_grad);

    double conv_norm = 0.0;
    for (double v : grads[0].w) conv_norm += std::abs(v);
    CHECK(conv_norm > 0.0);
    for (double v : grads[3].w) CHECK(v == 0.0);  // dense sits above the tap
}

TEST_CASE("sgd_step arithmetic") {
    nst::SgdConfig cfg;
    cfg.lr = 0.5;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;

    std::vector<double> p = {1.0, -2.0};
    std::vector<double> g = {0.25, 0.5};
    nst::SgdState state;
    nst::sgd_step_blocks({&p}, {&g}, cfg, state, 0);
    CHECK(p[0] == 1.0 - 0.5 * 0.25);
    CHECK(p[1] == -2.0 - 0.5 * 0.5);

    std::vector<double> zero = {0.0, 0.0};
    std::vector<double> q = {3.0, 4.0};
    nst::SgdState fresh;
    nst::sgd_step_blocks({&q}, {&zero}, cfg, fresh, 0);
    CHECK(q[0] == 3.0);
    CHECK(q[1] == 4.0);
}

TEST_CASE("learning-rate schedule") {
    nst::SgdConfig cfg;
    cfg.lr = 0.2;
    cfg.milestones = {2};
    cfg.lr_decay = 0.1;
    CHECK(nst::lr_at(cfg, 1) == 0.2);
    CHECK(nst::lr_at(cfg, 2) == Catch::Approx(0.02).margin(1e-15));

    cfg.milestones = {3, 2};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.milestones = {2, 3};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("init_params is seed-reproducible with He-scaled weights") {
    auto make = [] {
        return nst::make_network(16, 4, 4,
                                 {LayerSpec::conv(70), LayerSpec::relu(), LayerSpec::flatten(),
                                  LayerSpec::dense(2)});
    };
    Network a = make(), b = make(), c = make();
    nst::init_params(a, 123);
    nst::init_params(b, 123);
    nst::init_params(c, 124);
    CHECK(a.params[0].w == b.params[0].w);
    CHECK(a.params[3].w == b.params[3].w);
    CHECK(a.params[0].w != c.params[0].w);

    // empirical std over 70*16*9 = 10080 draws within 20% of sqrt(2/(9*16))
    double mean = 0.0;
    for (double v : a.params[0].w) mean += v;
    mean /= static_cast<double>(a.params[0].w.size());
    double var = 0.0;
    for (double v : a.params[0].w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(a.params[0].w.size());
    const double want = std::sqrt(2.0 / (9.0 * 16.0));
    CHECK(std::sqrt(var) > 0.8 * want);
    CHECK(std::sqrt(var) < 1.2 * want);
    for (double v : a.params[0].b) CHECK(v == 0.0);
}

TEST_CASE("checkpoint round trip") {
    Network net = nst::make_network(2, 4, 4,
                                    {LayerSpec::conv(3), LayerSpec::relu(true),
                                     LayerSpec::flatten(), LayerSpec::dense(4)});
    nst::init_params(net, 77);
    const std::string path = "test_roundtrip.ckpt";
    nst::save_checkpoint(net, path);
    const Network loaded = nst::load_checkpoint(path);

    REQUIRE(loaded.layers.size() == net.layers.size());
    CHECK(loaded.in_c == net.in_c);
    CHECK(loaded.tap_index() == net.tap_index());
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        CHECK(loaded.params[i].w == net.params[i].w);
        CHECK(loaded.params[i].b == net.params[i].b);
    }

    std::mt19937_64 rng(77);
    const Batch4 x = oracle::random_batch(2, 2, 4, 4, rng);
    const Matrix l1 = nst::forward(net, x).logits;
    const Matrix l2 = nst::forward(loaded, x).logits;
    CHECK(l1.data == l2.data);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects garbage") {
    {
        std::ofstream os("bad.ckpt", std::ios::binary);
        os << "NOTMAGIC and then some";
    }
    CHECK_THROWS_WITH(nst::load_checkpoint("bad.ckpt"), Catch::Matchers::ContainsSubstring("magic"));
    {
        std::ofstream os("trunc.ckpt", std::ios::binary);
        os << "NSTCKPT1";
    }
    CHECK_THROWS_WITH(nst::load_checkpoint("trunc.ckpt"),
                      Catch::Matchers::ContainsSubstring("truncated"));
    std::remove("bad.ckpt");
    std::remove("trunc.ckpt");
}

TEST_CASE("cross-entropy training halves the loss on separable data") {
    const nst::Dataset pool = nst::gen_blobs(2, 60, 4, 0.05, 5);
    auto [train, test] = nst::split_per_class(pool, 50);

    Network net = nst::make_network(4, 1, 1,
                                    {LayerSpec::dense(8), LayerSpec::relu(), LayerSpec::dense(2)});
    nst::TrainOptions opt;
    opt.sgd.lr = 0.1;
    opt.sgd.momentum = 0.9;
    opt.sgd.weight_decay = 0.0;
    opt.epochs = 50;
    opt.batch_size = 20;
    opt.seed = 9;
    const nst::RunRecord rec = nst::train_student(net, train, test, opt);
    CHECK(rec.train_loss.back() <= 0.5 * rec.train_loss.front());
}

TEST_CASE("training is bit-exact across repeated runs") {
    const nst::Dataset pool = nst::gen_blobs(3, 30, 6, 0.3, 11);
    auto [train, test] = nst::split_per_class(pool, 20);

    auto run = [&] {
        Network net = nst::make_network(
            6, 1, 1, {LayerSpec::dense(5), LayerSpec::relu(true), LayerSpec::dense(3)});
        nst::TrainOptions opt;
        opt.sgd.lr = 0.1;
        opt.epochs = 8;
        opt.batch_size = 16;
        opt.seed = 3;
        nst::train_student(net, train, test, opt);
        return net;
    };
    const Network a = run(), b = run();
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        CHECK(a.params[i].w == b.params[i].w);
        CHECK(a.params[i].b == b.params[i].b);
    }
}
