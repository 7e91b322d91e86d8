#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nst/net.hpp"

namespace nst {

struct SgdConfig {
    double lr = 0.2;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<std::size_t> milestones;  // epochs at which lr is multiplied by lr_decay
    double lr_decay = 0.1;

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("SgdConfig: lr must be > 0");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("SgdConfig: momentum must be in [0, 1)");
        if (weight_decay < 0.0) throw std::invalid_argument("SgdConfig: weight_decay must be >= 0");
        for (std::size_t i = 1; i < milestones.size(); ++i)
            if (milestones[i] <= milestones[i - 1])
                throw std::invalid_argument("SgdConfig: milestones must be strictly increasing");
    }
};

inline double lr_at(const SgdConfig& cfg, std::size_t epoch) {
    double lr = cfg.lr;
    for (std::size_t m : cfg.milestones)
        if (m <= epoch) lr *= cfg.lr_decay;
    return lr;
}

// Momentum buffers for a list of parameter blocks.
struct SgdState {
    std::vector<std::vector<double>> velocity;
};

// Heavy-ball update on raw parameter blocks:
//   v <- momentum*v + grad + weight_decay*param;  param <- param - lr(epoch)*v
inline void sgd_step_blocks(std::vector<std::vector<double>*> params,
                            const std::vector<const std::vector<double>*>& grads,
                            const SgdConfig& cfg, SgdState& state, std::size_t epoch) {
    if (params.size() != grads.size())
        throw std::invalid_argument("sgd_step: param/grad block count mismatch");
    if (state.velocity.empty()) {
        state.velocity.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            state.velocity[i].assign(params[i]->size(), 0.0);
    }
    if (state.velocity.size() != params.size())
        throw std::invalid_argument("sgd_step: state does not match param blocks");

    const double lr = lr_at(cfg, epoch);
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& p = *params[i];
        const std::vector<double>& g = *grads[i];
        std::vector<double>& v = state.velocity[i];
        if (p.size() != g.size() || p.size() != v.size())
            throw std::invalid_argument("sgd_step: block size mismatch");
        for (std::size_t k = 0; k < p.size(); ++k) {
            v[k] = cfg.momentum * v[k] + g[k] + cfg.weight_decay * p[k];
            p[k] -= lr * v[k];
        }
        if (!all_finite(p)) throw std::runtime_error("sgd_step: parameters became non-finite");
    }
}

// Convenience wrapper for a Network plus its gradient set.
inline void sgd_step(Network& net, const Grads& grads, const SgdConfig& cfg, SgdState& state,
                     std::size_t epoch) {
    if (grads.size() != net.params.size())
        throw std::invalid_argument("sgd_step: grads do not match network");
    std::vector<std::vector<double>*> ps;
    std::vector<const std::vector<double>*> gs;
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        if (net.params[i].w.empty()) continue;
        ps.push_back(&net.params[i].w);
        gs.push_back(&grads[i].w);
        ps.push_back(&net.params[i].b);
        gs.push_back(&grads[i].b);
    }
    sgd_step_blocks(std::move(ps), gs, cfg, state, epoch);
}

}  // namespace nst
