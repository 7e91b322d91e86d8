#include <cstdio>
#include <fstream>

#include <catch_amalgamated.hpp>

#include "nst/data.hpp"
#include "oracles.hpp"

using nst::Batch4;
using nst::Dataset;

namespace {

void put_be_u32(std::ostream& os, std::uint32_t v) {
    os.put(static_cast<char>((v >> 24) & 0xff));
    os.put(static_cast<char>((v >> 16) & 0xff));
    os.put(static_cast<char>((v >> 8) & 0xff));
    os.put(static_cast<char>(v & 0xff));
}

// hand-encoded IDX fixture writer (test-only)
void write_idx_fixture(const std::string& images_path, const std::string& labels_path,
                       const std::vector<std::vector<unsigned char>>& images,
                       const std::vector<unsigned char>& labels, std::size_t h, std::size_t w,
                       std::uint32_t image_magic = 0x00000803,
                       std::uint32_t label_magic = 0x00000801, bool truncate_pixels = false) {
    std::ofstream imgs(images_path, std::ios::binary);
    put_be_u32(imgs, image_magic);
    put_be_u32(imgs, static_cast<std::uint32_t>(images.size()));
    put_be_u32(imgs, static_cast<std::uint32_t>(h));
    put_be_u32(imgs, static_cast<std::uint32_t>(w));
    for (const auto& img : images)
        imgs.write(reinterpret_cast<const char*>(img.data()),
                   truncate_pixels ? static_cast<std::streamsize>(img.size() / 2)
                                   : static_cast<std::streamsize>(img.size()));
    std::ofstream lbls(labels_path, std::ios::binary);
    put_be_u32(lbls, label_magic);
    put_be_u32(lbls, static_cast<std::uint32_t>(labels.size()));
    lbls.write(reinterpret_cast<const char*>(labels.data()),
               static_cast<std::streamsize>(labels.size()));
}

}  // namespace

TEST_CASE("gen_blobs with zero spread lands every sample on its class mean") {
    const Dataset ds = nst::gen_blobs(3, 4, 5, 0.0, 42);
    ds.validate();
    REQUIRE(ds.images.n == 12);
    for (std::size_t i = 0; i < ds.images.n; ++i) {
        const double* x = ds.images.sample_ptr(i);
        for (std::size_t d = 0; d < 5; ++d)
            CHECK(x[d] == (d == ds.labels[i] ? 1.0 : 0.0));
    }
}

TEST_CASE("gen_blobs is seed-deterministic") {
    const Dataset a = nst::gen_blobs(4, 10, 6, 0.3, 7);
    const Dataset b = nst::gen_blobs(4, 10, 6, 0.3, 7);
    const Dataset c = nst::gen_blobs(4, 10, 6, 0.3, 8);
    CHECK(a.images.data == b.images.data);
    CHECK(a.labels == b.labels);
    CHECK(a.images.data != c.images.data);

    CHECK_THROWS_AS(nst::gen_blobs(1, 5, 4, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(nst::gen_blobs(5, 5, 4, 0.1, 1), std::invalid_argument);
}

TEST_CASE("nearest-centroid separates small-spread blobs across seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Dataset ds = nst::gen_blobs(2, 200, 8, 0.15, seed);
        // centroid rule: class of the nearest simplex vertex
        std::size_t correct = 0;
        for (std::size_t i = 0; i < ds.images.n; ++i) {
            const double* x = ds.images.sample_ptr(i);
            double best = -1e300;
            std::size_t arg = 0;
            for (std::size_t k = 0; k < 2; ++k)
                if (x[k] > best) {
                    best = x[k];
                    arg = k;
                }
            if (arg == ds.labels[i]) ++correct;
        }
        CHECK(static_cast<double>(correct) / ds.images.n > 0.99);
    }
}

TEST_CASE("split_per_class is index-disjoint and class-balanced") {
    const Dataset ds = nst::gen_blobs(3, 10, 5, 0.2, 3);
    auto [train, test] = nst::split_per_class(ds, 7);
    CHECK(train.images.n == 21);
    CHECK(test.images.n == 9);
    CHECK(train.split == nst::Split::Train);
    CHECK(test.split == nst::Split::Test);
    // first 7 per class go to train; samples are class-grouped on generation
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < 7; ++i)
            CHECK(std::equal(train.images.sample_ptr(k * 7 + i),
                             train.images.sample_ptr(k * 7 + i) + 5,
                             ds.images.sample_ptr(k * 10 + i)));
}

TEST_CASE("load_idx round-trips a hand-built fixture") {
    const std::vector<std::vector<unsigned char>> images = {{0, 64, 128, 255},
                                                            {10, 20, 30, 40}};
    write_idx_fixture("fix_images.idx", "fix_labels.idx", images, {3, 1}, 2, 2);
    const Dataset ds = nst::load_idx("fix_images.idx", "fix_labels.idx");
    REQUIRE(ds.images.n == 2);
    CHECK(ds.images.c == 1);
    CHECK(ds.images.h == 2);
    CHECK(ds.images.w == 2);
    CHECK(ds.labels == std::vector<std::size_t>{3, 1});
    CHECK(ds.num_classes == 4);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t p = 0; p < 4; ++p)
            CHECK(ds.images.data[i * 4 + p] == Catch::Approx(images[i][p] / 255.0).margin(1e-15));
    std::remove("fix_images.idx");
    std::remove("fix_labels.idx");
}

TEST_CASE("load_idx error kinds are distinct") {
    const std::vector<std::vector<unsigned char>> images = {{1, 2, 3, 4}};
    write_idx_fixture("bad_images.idx", "bad_labels.idx", images, {0}, 2, 2, 0x00000999);
    CHECK_THROWS_MATCHES(nst::load_idx("bad_images.idx", "bad_labels.idx"), nst::IdxError,
                         Catch::Matchers::Predicate<nst::IdxError>([](const nst::IdxError& e) {
                             return e.kind == nst::IdxError::Kind::BadMagic;
                         }));

    write_idx_fixture("mm_images.idx", "mm_labels.idx", images, {0, 1}, 2, 2);
    CHECK_THROWS_MATCHES(nst::load_idx("mm_images.idx", "mm_labels.idx"), nst::IdxError,
                         Catch::Matchers::Predicate<nst::IdxError>([](const nst::IdxError& e) {
                             return e.kind == nst::IdxError::Kind::CountMismatch;
                         }));

    write_idx_fixture("tr_images.idx", "tr_labels.idx", images, {0}, 2, 2, 0x00000803,
                      0x00000801, true);
    CHECK_THROWS_MATCHES(nst::load_idx("tr_images.idx", "tr_labels.idx"), nst::IdxError,
                         Catch::Matchers::Predicate<nst::IdxError>([](const nst::IdxError& e) {
                             return e.kind == nst::IdxError::Kind::Truncated;
                         }));
    for (const char* f : {"bad_images.idx", "bad_labels.idx", "mm_images.idx", "mm_labels.idx",
                          "tr_images.idx", "tr_labels.idx"})
        std::remove(f);
}

TEST_CASE("augment identity case") {
    std::mt19937_64 data_rng(3);
    const Batch4 x = oracle::random_batch(2, 1, 6, 6, data_rng, 0.0, 1.0);
    nst::AugmentSpec spec{0, 6, 0.0, 0};
    std::mt19937_64 rng(1);
    const Batch4 out = nst::augment(x, spec, rng);
    CHECK(out.data == x.data);
}

TEST_CASE("augment flips columns when hflip_prob is 1") {
    std::mt19937_64 data_rng(5);
    const Batch4 x = oracle::random_batch(1, 2, 4, 4, data_rng);
    nst::AugmentSpec spec{0, 4, 1.0, 0};
    std::mt19937_64 rng(2);
    const Batch4 out = nst::augment(x, spec, rng);
    for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t xx = 0; xx < 4; ++xx)
                CHECK(out.at(0, ch, y, xx) == x.at(0, ch, y, 3 - xx));
}

TEST_CASE("padded random crop only lets zeros in") {
    std::mt19937_64 data_rng(7);
    const Batch4 x = oracle::random_batch(4, 1, 8, 8, data_rng, 0.0, 1.0);
    nst::AugmentSpec spec{2, 8, 0.5, 0};
    std::mt19937_64 rng(3);
    const Batch4 out = nst::augment(x, spec, rng);
    CHECK(out.n == 4);
    CHECK(out.h == 8);
    CHECK(out.w == 8);
    double in_sum = 0.0, out_sum = 0.0;
    for (double v : x.data) in_sum += v;
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        out_sum += v;
    }
    CHECK(out_sum <= in_sum + 1e-12);

    nst::AugmentSpec bad{0, 10, 0.5, 0};
    CHECK_THROWS_AS(nst::augment(x, bad, rng), std::invalid_argument);
}

TEST_CASE("augment is deterministic for a fixed rng state") {
    std::mt19937_64 data_rng(11);
    const Batch4 x = oracle::random_batch(3, 1, 6, 6, data_rng);
    nst::AugmentSpec spec{2, 6, 0.5, 0};
    std::mt19937_64 r1(99), r2(99);
    CHECK(nst::augment(x, spec, r1).data == nst::augment(x, spec, r2).data);
}

TEST_CASE("channel stats normalize to zero mean and unit variance") {
    std::mt19937_64 rng(13);
    Dataset ds;
    ds.images = oracle::random_batch(20, 3, 4, 4, rng, -2.0, 5.0);
    ds.labels.assign(20, 0);
    ds.num_classes = 1;
    const nst::ChannelStats st = nst::channel_stats(ds);
    nst::normalize_in_place(ds, st);
    const nst::ChannelStats after = nst::channel_stats(ds);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        CHECK(std::abs(after.mean[ch]) < 1e-12);
        CHECK(after.std_dev[ch] == Catch::Approx(1.0).margin(1e-9));
    }
}
