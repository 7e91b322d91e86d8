#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nst/batch.hpp"

namespace nst {

enum class Split { Train, Test };

struct Dataset {
    Batch4 images;  // synthetic features are carried as n x dim x 1 x 1
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    Split split = Split::Train;

    void validate() const {
        if (labels.size() != images.n)
            throw std::invalid_argument("Dataset: one label per image required");
        for (std::size_t l : labels)
            if (l >= num_classes) throw std::invalid_argument("Dataset: label out of range");
    }
};

// Gaussian clusters centered on scaled standard-basis vectors (a regular
// simplex: every pair of class means is equidistant). Reproducible from seed.
inline Dataset gen_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                         double spread, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("gen_blobs: need at least 2 classes");
    if (dim < num_classes)
        throw std::invalid_argument("gen_blobs: dim must be >= num_classes for simplex means");
    Dataset ds;
    ds.num_classes = num_classes;
    ds.images = Batch4(num_classes * per_class, dim, 1, 1);
    ds.labels.resize(num_classes * per_class);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t idx = 0;
    for (std::size_t k = 0; k < num_classes; ++k)
        for (std::size_t s = 0; s < per_class; ++s, ++idx) {
            double* x = ds.images.sample_ptr(idx);
            if (spread > 0.0)
                for (std::size_t d = 0; d < dim; ++d) x[d] = spread * normal(rng);
            x[k] += 1.0;
            ds.labels[idx] = k;
        }
    return ds;
}

// First train_per_class samples of each class go to the train split, the
// rest to test; index-disjoint by construction.
inline std::pair<Dataset, Dataset> split_per_class(const Dataset& ds,
                                                   std::size_t train_per_class) {
    std::vector<std::size_t> train_idx, test_idx;
    std::vector<std::size_t> seen(ds.num_classes, 0);
    for (std::size_t i = 0; i < ds.images.n; ++i) {
        if (seen[ds.labels[i]]++ < train_per_class)
            train_idx.push_back(i);
        else
            test_idx.push_back(i);
    }
    auto take = [&](const std::vector<std::size_t>& idx, Split split) {
        Dataset out;
        out.num_classes = ds.num_classes;
        out.split = split;
        out.images = Batch4(idx.size(), ds.images.c, ds.images.h, ds.images.w);
        out.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double* src = ds.images.sample_ptr(idx[i]);
            std::copy(src, src + ds.images.sample_size(), out.images.sample_ptr(i));
            out.labels[i] = ds.labels[idx[i]];
        }
        return out;
    };
    return {take(train_idx, Split::Train), take(test_idx, Split::Test)};
}

// Presents flat per-sample features as c x h x w maps (c*h*w must equal the
// current sample size).
inline Dataset reshape_samples(const Dataset& ds, std::size_t c, std::size_t h, std::size_t w) {
    if (c * h * w != ds.images.sample_size())
        throw std::invalid_argument("reshape_samples: c*h*w must match sample size");
    Dataset out = ds;
    out.images = Batch4(ds.images.n, c, h, w, ds.images.data);
    return out;
}

// IDX parsing errors, kept distinguishable for callers.
struct IdxError : std::runtime_error {
    enum class Kind { BadMagic, Truncated, CountMismatch };
    Kind kind;
    IdxError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4))
        throw IdxError(IdxError::Kind::Truncated, "idx: truncated header in " + path);
    return (static_cast<std::uint32_t>(buf[0]) << 24) | (static_cast<std::uint32_t>(buf[1]) << 16) |
           (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Reads an IDX image/label file pair (big-endian dims, unsigned byte pixels)
// into an N x 1 x H x W batch with pixels scaled to [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IdxError(IdxError::Kind::Truncated, "idx: cannot open " + images_path);
    if (detail::read_be_u32(imgs, images_path) != kIdxImagesMagic)
        throw IdxError(IdxError::Kind::BadMagic, "idx: bad image magic in " + images_path);
    const std::uint32_t n = detail::read_be_u32(imgs, images_path);
    const std::uint32_t h = detail::read_be_u32(imgs, images_path);
    const std::uint32_t w = detail::read_be_u32(imgs, images_path);

    std::ifstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw IdxError(IdxError::Kind::Truncated, "idx: cannot open " + labels_path);
    if (detail::read_be_u32(lbls, labels_path) != kIdxLabelsMagic)
        throw IdxError(IdxError::Kind::BadMagic, "idx: bad label magic in " + labels_path);
    const std::uint32_t n_labels = detail::read_be_u32(lbls, labels_path);
    if (n != n_labels)
        throw IdxError(IdxError::Kind::CountMismatch,
                       "idx: image count " + std::to_string(n) + " != label count " +
                           std::to_string(n_labels));

    std::vector<unsigned char> pixel_buf(static_cast<std::size_t>(n) * h * w);
    if (!imgs.read(reinterpret_cast<char*>(pixel_buf.data()),
                   static_cast<std::streamsize>(pixel_buf.size())))
        throw IdxError(IdxError::Kind::Truncated, "idx: truncated pixel data in " + images_path);
    std::vector<unsigned char> label_buf(n);
    if (!lbls.read(reinterpret_cast<char*>(label_buf.data()), n))
        throw IdxError(IdxError::Kind::Truncated, "idx: truncated label data in " + labels_path);

    Dataset ds;
    ds.images = Batch4(n, 1, h, w);
    for (std::size_t i = 0; i < pixel_buf.size(); ++i)
        ds.images.data[i] = static_cast<double>(pixel_buf[i]) / 255.0;
    ds.labels.resize(n);
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = label_buf[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

struct AugmentSpec {
    std::size_t pad = 4;
    std::size_t crop = 32;
    double hflip_prob = 0.5;
    std::uint64_t seed = 0;
};

// Per sample: zero-pad, take a uniformly random crop of side spec.crop, and
// flip horizontally with probability hflip_prob. Deterministic given rng.
inline Batch4 augment(const Batch4& batch, const AugmentSpec& spec, std::mt19937_64& rng) {
    if (spec.crop > batch.h + 2 * spec.pad || spec.crop > batch.w + 2 * spec.pad)
        throw std::invalid_argument("augment: crop larger than padded input");
    if (spec.hflip_prob < 0.0 || spec.hflip_prob > 1.0)
        throw std::invalid_argument("augment: hflip_prob must be in [0, 1]");

    Batch4 out(batch.n, batch.c, spec.crop, spec.crop);
    std::uniform_int_distribution<std::size_t> dy(0, batch.h + 2 * spec.pad - spec.crop);
    std::uniform_int_distribution<std::size_t> dx(0, batch.w + 2 * spec.pad - spec.crop);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::size_t s = 0; s < batch.n; ++s) {
        const std::size_t oy = dy(rng);
        const std::size_t ox = dx(rng);
        const bool flip = coin(rng) < spec.hflip_prob;
        for (std::size_t ch = 0; ch < batch.c; ++ch)
            for (std::size_t y = 0; y < spec.crop; ++y)
                for (std::size_t x = 0; x < spec.crop; ++x) {
                    const std::ptrdiff_t sy =
                        static_cast<std::ptrdiff_t>(oy + y) - static_cast<std::ptrdiff_t>(spec.pad);
                    const std::size_t src_x = flip ? spec.crop - 1 - x : x;
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox + src_x) -
                                              static_cast<std::ptrdiff_t>(spec.pad);
                    double v = 0.0;
                    if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(batch.h) && sx >= 0 &&
                        sx < static_cast<std::ptrdiff_t>(batch.w))
                        v = batch.at(s, ch, static_cast<std::size_t>(sy),
                                     static_cast<std::size_t>(sx));
                    out.at(s, ch, y, x) = v;
                }
    }
    return out;
}

struct ChannelStats {
    std::vector<double> mean, std_dev;
};

// Per-channel mean/std over a dataset, meant to be computed on the train
// split and applied to both splits.
inline ChannelStats channel_stats(const Dataset& ds) {
    const std::size_t c = ds.images.c, per = ds.images.h * ds.images.w;
    ChannelStats st;
    st.mean.assign(c, 0.0);
    st.std_dev.assign(c, 0.0);
    const double count = static_cast<double>(ds.images.n * per);
    for (std::size_t s = 0; s < ds.images.n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* p = ds.images.sample_ptr(s) + ch * per;
            for (std::size_t i = 0; i < per; ++i) st.mean[ch] += p[i];
        }
    for (std::size_t ch = 0; ch < c; ++ch) st.mean[ch] /= count;
    for (std::size_t s = 0; s < ds.images.n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* p = ds.images.sample_ptr(s) + ch * per;
            for (std::size_t i = 0; i < per; ++i) {
                const double d = p[i] - st.mean[ch];
                st.std_dev[ch] += d * d;
            }
        }
    for (std::size_t ch = 0; ch < c; ++ch)
        st.std_dev[ch] = std::max(std::sqrt(st.std_dev[ch] / count), 1e-8);
    return st;
}

inline void normalize_in_place(Dataset& ds, const ChannelStats& st) {
    if (st.mean.size() != ds.images.c)
        throw std::invalid_argument("normalize: stats channel count mismatch");
    const std::size_t per = ds.images.h * ds.images.w;
    for (std::size_t s = 0; s < ds.images.n; ++s)
        for (std::size_t ch = 0; ch < ds.images.c; ++ch) {
            double* p = ds.images.sample_ptr(s) + ch * per;
            for (std::size_t i = 0; i < per; ++i) p[i] = (p[i] - st.mean[ch]) / st.std_dev[ch];
        }
}

}  // namespace nst
