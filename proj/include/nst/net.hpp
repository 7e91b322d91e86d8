#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nst/batch.hpp"
#include "nst/matrix.hpp"

namespace nst {

// Fixed layer menu: 3x3 stride-1 pad-1 convolutions, dense layers, ReLU,
// 2x2 stride-2 max pooling, flatten. Enough to build a wide teacher and a
// thin student without a general graph engine.
enum class LayerKind { Conv, Dense, ReLU, MaxPool2, Flatten };

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::size_t out = 0;  // out channels (Conv) or out features (Dense)
    bool tap = false;     // marks this layer's output as the transfer point

    static LayerSpec conv(std::size_t out_channels, bool tap = false) {
        return {LayerKind::Conv, out_channels, tap};
    }
    static LayerSpec dense(std::size_t out_features, bool tap = false) {
        return {LayerKind::Dense, out_features, tap};
    }
    static LayerSpec relu(bool tap = false) { return {LayerKind::ReLU, 0, tap}; }
    static LayerSpec maxpool(bool tap = false) { return {LayerKind::MaxPool2, 0, tap}; }
    static LayerSpec flatten(bool tap = false) { return {LayerKind::Flatten, 0, tap}; }
};

struct LayerParams {
    std::vector<double> w, b;
    std::size_t in_dim = 0, out_dim = 0;  // conv: channels; dense: features
};

struct Shape3 {
    std::size_t c = 0, h = 0, w = 0;
};

struct Network {
    std::size_t in_c = 0, in_h = 0, in_w = 0;
    std::vector<LayerSpec> layers;
    std::vector<LayerParams> params;  // parallel to layers, empty for parameterless kinds
    std::uint64_t rng_seed = 0;

    int tap_index() const {
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].tap) return static_cast<int>(i);
        return -1;
    }
};

// Output shape after each layer, starting from the network input shape.
// Throws on any statically detectable shape problem.
inline std::vector<Shape3> infer_shapes(const Network& net) {
    std::vector<Shape3> shapes;
    Shape3 s{net.in_c, net.in_h, net.in_w};
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                if (l.out == 0) throw std::invalid_argument("conv layer needs out channels");
                s.c = l.out;
                break;
            case LayerKind::Dense:
                if (l.out == 0) throw std::invalid_argument("dense layer needs out features");
                if (s.h != 1 || s.w != 1)
                    throw std::invalid_argument("dense layer needs flattened input (h=w=1)");
                s.c = l.out;
                break;
            case LayerKind::ReLU:
                break;
            case LayerKind::MaxPool2:
                if (s.h < 2 || s.w < 2)
                    throw std::invalid_argument("maxpool needs spatial dims >= 2");
                s.h /= 2;
                s.w /= 2;
                break;
            case LayerKind::Flatten:
                s = {s.c * s.h * s.w, 1, 1};
                break;
        }
        shapes.push_back(s);
    }
    return shapes;
}

inline Network make_network(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                            std::vector<LayerSpec> layers) {
    Network net;
    net.in_c = in_c;
    net.in_h = in_h;
    net.in_w = in_w;
    net.layers = std::move(layers);
    net.params.resize(net.layers.size());

    std::size_t taps = 0;
    for (const LayerSpec& l : net.layers) taps += l.tap ? 1 : 0;
    if (taps > 1) throw std::invalid_argument("make_network: at most one tap layer");

    const std::vector<Shape3> shapes = infer_shapes(net);
    Shape3 in{in_c, in_h, in_w};
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        LayerParams& p = net.params[i];
        if (l.kind == LayerKind::Conv) {
            p.in_dim = in.c;
            p.out_dim = l.out;
            p.w.assign(l.out * in.c * 9, 0.0);
            p.b.assign(l.out, 0.0);
        } else if (l.kind == LayerKind::Dense) {
            p.in_dim = in.c;
            p.out_dim = l.out;
            p.w.assign(l.out * in.c, 0.0);
            p.b.assign(l.out, 0.0);
        }
        in = shapes[i];
    }
    return net;
}

inline std::size_t param_count(const Network& net) {
    std::size_t n = 0;
    for (const auto& p : net.params) n += p.w.size() + p.b.size();
    return n;
}

// He-style fan-in scaled normal init for weights, zero biases, reproducible
// from the seed.
inline void init_params(Network& net, std::uint64_t seed) {
    net.rng_seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        LayerParams& p = net.params[i];
        if (p.w.empty()) continue;
        const std::size_t fan_in =
            net.layers[i].kind == LayerKind::Conv ? p.in_dim * 9 : p.in_dim;
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& w : p.w) w = std_dev * normal(rng);
        for (double& b : p.b) b = 0.0;
    }
}

struct ForwardResult {
    Matrix logits;
    Batch4 tap;                // empty (n == 0) when the net has no tap layer
    std::vector<Batch4> acts;  // acts[i] = input of layer i; acts.back() = final output
    std::vector<std::vector<std::size_t>> pool_argmax;  // per layer, flat input indices
};

namespace detail {

inline void conv3x3_forward(const Batch4& in, const LayerParams& p, Batch4& out) {
    const std::size_t n = in.n, ic = in.c, oc = p.out_dim, h = in.h, w = in.w;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    double acc = p.b[o];
                    for (std::size_t i = 0; i < ic; ++i)
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(y + ky) - 1;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(x + kx) - 1;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += p.w[((o * ic + i) * 3 + ky) * 3 + kx] *
                                       in.at(s, i, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix));
                            }
                        }
                    out.at(s, o, y, x) = acc;
                }
}

inline void conv3x3_backward(const Batch4& in, const LayerParams& p, const Batch4& gout,
                             LayerParams& grads, Batch4& gin) {
    const std::size_t n = in.n, ic = in.c, oc = p.out_dim, h = in.h, w = in.w;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double g = gout.at(s, o, y, x);
                    if (g == 0.0) continue;
                    grads.b[o] += g;
                    for (std::size_t i = 0; i < ic; ++i)
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(y + ky) - 1;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(x + kx) - 1;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                const std::size_t widx = ((o * ic + i) * 3 + ky) * 3 + kx;
                                grads.w[widx] += g * in.at(s, i, static_cast<std::size_t>(iy),
                                                           static_cast<std::size_t>(ix));
                                gin.at(s, i, static_cast<std::size_t>(iy),
                                       static_cast<std::size_t>(ix)) += g * p.w[widx];
                            }
                        }
                }
}

}  // namespace detail

// Runs the stack and keeps every intermediate activation (and max-pool
// argmax) so backward can be driven from the caches. The final activation
// must be flat (h = w = 1); its channels are the logits.
inline ForwardResult forward(const Network& net, const Batch4& x) {
    if (x.c != net.in_c || x.h != net.in_h || x.w != net.in_w)
        throw std::invalid_argument("forward: input shape does not match network");

    ForwardResult fr;
    fr.acts.reserve(net.layers.size() + 1);
    fr.pool_argmax.resize(net.layers.size());
    fr.acts.push_back(x);

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Batch4& a = fr.acts.back();
        const LayerSpec& l = net.layers[li];
        Batch4 out;
        switch (l.kind) {
            case LayerKind::Conv: {
                out = Batch4(a.n, l.out, a.h, a.w);
                detail::conv3x3_forward(a, net.params[li], out);
                break;
            }
            case LayerKind::Dense: {
                if (a.h != 1 || a.w != 1)
                    throw std::invalid_argument("forward: dense layer on non-flat input");
                const LayerParams& p = net.params[li];
                if (a.c != p.in_dim)
                    throw std::invalid_argument("forward: dense input feature mismatch");
                out = Batch4(a.n, l.out, 1, 1);
                for (std::size_t s = 0; s < a.n; ++s) {
                    const double* ain = a.sample_ptr(s);
                    double* aout = out.sample_ptr(s);
                    for (std::size_t o = 0; o < l.out; ++o)
                        aout[o] = p.b[o] + dot(p.w.data() + o * p.in_dim, ain, p.in_dim);
                }
                break;
            }
            case LayerKind::ReLU: {
                out = a;
                for (double& v : out.data) v = v > 0.0 ? v : 0.0;
                break;
            }
            case LayerKind::MaxPool2: {
                if (a.h < 2 || a.w < 2)
                    throw std::invalid_argument("forward: maxpool on too-small input");
                const std::size_t oh = a.h / 2, ow = a.w / 2;
                out = Batch4(a.n, a.c, oh, ow);
                auto& arg = fr.pool_argmax[li];
                arg.assign(a.n * a.c * oh * ow, 0);
                std::size_t oi = 0;
                for (std::size_t s = 0; s < a.n; ++s)
                    for (std::size_t ch = 0; ch < a.c; ++ch)
                        for (std::size_t y = 0; y < oh; ++y)
                            for (std::size_t x2 = 0; x2 < ow; ++x2, ++oi) {
                                // first max in scan order wins on ties
                                std::size_t best_idx = ((s * a.c + ch) * a.h + 2 * y) * a.w + 2 * x2;
                                double best = a.data[best_idx];
                                for (std::size_t ky = 0; ky < 2; ++ky)
                                    for (std::size_t kx = 0; kx < 2; ++kx) {
                                        const std::size_t iy = 2 * y + ky, ix = 2 * x2 + kx;
                                        const std::size_t flat =
                                            ((s * a.c + ch) * a.h + iy) * a.w + ix;
                                        if (a.data[flat] > best) {
                                            best = a.data[flat];
                                            best_idx = flat;
                                        }
                                    }
                                out.at(s, ch, y, x2) = best;
                                arg[oi] = best_idx;
                            }
                break;
            }
            case LayerKind::Flatten: {
                out = Batch4(a.n, a.c * a.h * a.w, 1, 1, a.data);
                break;
            }
        }
        fr.acts.push_back(std::move(out));
        if (l.tap) fr.tap = fr.acts.back();
    }

    const Batch4& last = fr.acts.back();
    if (last.h != 1 || last.w != 1)
        throw std::invalid_argument("forward: network must end in a flat layer");
    fr.logits = Matrix(last.n, last.c, last.data);
    return fr;
}

using Grads = std::vector<LayerParams>;

inline Grads zero_grads(const Network& net) {
    Grads g(net.params.size());
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        g[i].in_dim = net.params[i].in_dim;
        g[i].out_dim = net.params[i].out_dim;
        g[i].w.assign(net.params[i].w.size(), 0.0);
        g[i].b.assign(net.params[i].b.size(), 0.0);
    }
    return g;
}

// Backpropagates grad_logits (and, when given, grad_tap injected at the tap
// layer's output, accumulated with the upstream path) to all parameters.
inline Grads backward(const Network& net, const ForwardResult& fwd, const Matrix& grad_logits,
                      const std::optional<Batch4>& grad_tap = std::nullopt) {
    if (fwd.acts.size() != net.layers.size() + 1)
        throw std::invalid_argument("backward: caches do not match network");
    const Batch4& last = fwd.acts.back();
    if (grad_logits.rows != last.n || grad_logits.cols != last.c)
        throw std::invalid_argument("backward: grad_logits shape mismatch");

    Grads grads = zero_grads(net);
    Batch4 g(last.n, last.c, 1, 1, grad_logits.data);

    for (std::size_t ri = net.layers.size(); ri-- > 0;) {
        const LayerSpec& l = net.layers[ri];
        const Batch4& a_in = fwd.acts[ri];
        const Batch4& a_out = fwd.acts[ri + 1];
        if (!g.same_shape(a_out)) throw std::invalid_argument("backward: cache shape mismatch");

        if (l.tap && grad_tap) {
            if (!grad_tap->same_shape(a_out))
                throw std::invalid_argument("backward: grad_tap shape mismatch");
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += grad_tap->data[i];
        }

        Batch4 gin(a_in.n, a_in.c, a_in.h, a_in.w);
        switch (l.kind) {
            case LayerKind::Conv:
                detail::conv3x3_backward(a_in, net.params[ri], g, grads[ri], gin);
                break;
            case LayerKind::Dense: {
                const LayerParams& p = net.params[ri];
                for (std::size_t s = 0; s < a_in.n; ++s) {
                    const double* ain = a_in.sample_ptr(s);
                    const double* go = g.sample_ptr(s);
                    double* gi = gin.sample_ptr(s);
                    for (std::size_t o = 0; o < p.out_dim; ++o) {
                        const double gv = go[o];
                        if (gv == 0.0) continue;
                        grads[ri].b[o] += gv;
                        const double* wrow = p.w.data() + o * p.in_dim;
                        double* gwrow = grads[ri].w.data() + o * p.in_dim;
                        for (std::size_t i = 0; i < p.in_dim; ++i) {
                            gwrow[i] += gv * ain[i];
                            gi[i] += gv * wrow[i];
                        }
                    }
                }
                break;
            }
            case LayerKind::ReLU:
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    gin.data[i] = a_in.data[i] > 0.0 ? g.data[i] : 0.0;
                break;
            case LayerKind::MaxPool2: {
                const auto& arg = fwd.pool_argmax[ri];
                for (std::size_t i = 0; i < g.data.size(); ++i) gin.data[arg[i]] += g.data[i];
                break;
            }
            case LayerKind::Flatten:
                gin.data = g.data;
                break;
        }
        g = std::move(gin);
    }
    return grads;
}

}  // namespace nst
