#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "nst/net.hpp"

namespace nst {

// Versioned binary checkpoint. Layout (all integers and doubles little-endian):
//   magic "NSTCKPT1"
//   u32 layer_count, u32 in_c, u32 in_h, u32 in_w
//   per layer: u8 kind, u8 tap, u32 out_dim, u32 in_dim,
//              u64 w_len, f64 w[w_len], u64 b_len, f64 b[b_len]
inline constexpr char kCkptMagic[8] = {'N', 'S', 'T', 'C', 'K', 'P', 'T', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}
inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4))
        throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8))
        throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace detail

inline void save_checkpoint(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    os.write(kCkptMagic, 8);
    detail::put_u32(os, static_cast<std::uint32_t>(net.layers.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(net.in_c));
    detail::put_u32(os, static_cast<std::uint32_t>(net.in_h));
    detail::put_u32(os, static_cast<std::uint32_t>(net.in_w));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        const LayerParams& p = net.params[i];
        os.put(static_cast<char>(l.kind));
        os.put(l.tap ? 1 : 0);
        detail::put_u32(os, static_cast<std::uint32_t>(p.out_dim));
        detail::put_u32(os, static_cast<std::uint32_t>(p.in_dim));
        detail::put_u64(os, p.w.size());
        for (double v : p.w) detail::put_f64(os, v);
        detail::put_u64(os, p.b.size());
        for (double v : p.b) detail::put_f64(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Network load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");

    const std::uint32_t layer_count = detail::get_u32(is);
    Network net;
    net.in_c = detail::get_u32(is);
    net.in_h = detail::get_u32(is);
    net.in_w = detail::get_u32(is);
    net.layers.resize(layer_count);
    net.params.resize(layer_count);
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        int kind = is.get();
        int tap = is.get();
        if (kind < 0 || tap < 0) throw std::runtime_error("checkpoint: truncated file");
        if (kind > static_cast<int>(LayerKind::Flatten))
            throw std::runtime_error("checkpoint: unknown layer kind");
        net.layers[i].kind = static_cast<LayerKind>(kind);
        net.layers[i].tap = tap != 0;
        LayerParams& p = net.params[i];
        p.out_dim = detail::get_u32(is);
        p.in_dim = detail::get_u32(is);
        net.layers[i].out = p.out_dim;
        p.w.resize(detail::get_u64(is));
        for (double& v : p.w) v = detail::get_f64(is);
        p.b.resize(detail::get_u64(is));
        for (double& v : p.b) v = detail::get_f64(is);
    }
    // validates layer arithmetic against the recorded input shape
    infer_shapes(net);
    return net;
}

}  // namespace nst
