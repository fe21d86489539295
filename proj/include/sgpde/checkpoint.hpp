#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "core.hpp"
#include "io.hpp"
#include "neural.hpp"

// Network checkpoint format (little-endian throughout):
//   bytes 0..5   magic "SGPDE1"
//   repeated     u32 out, u32 in, f64 W[out*in] row-major, f64 b[out]
//   last byte    u8 activation tag
// Layer records are read until exactly one byte remains in the file.

namespace sgpde {

namespace detail {

inline bool little_endian_host() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

template <typename T>
inline void put_le(std::string& buf, T v) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if (!little_endian_host())
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    buf.append(reinterpret_cast<const char*>(raw), sizeof(T));
}

template <typename T>
inline T get_le(const std::string& buf, std::size_t& pos) {
    if (pos + sizeof(T) > buf.size()) throw config_error("checkpoint truncated");
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, buf.data() + pos, sizeof(T));
    if (!little_endian_host())
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    pos += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
}

}  // namespace detail

inline constexpr char checkpoint_magic[] = "SGPDE1";  // 6 bytes on disk, no NUL

inline void save_checkpoint(const std::string& path, const NetworkParams& net) {
    require(!net.layers.empty(), "cannot save an empty network");
    std::string buf;
    buf.reserve(7 + net.parameter_count() * sizeof(double) + net.layers.size() * 8);
    buf.append(checkpoint_magic, 6);
    for (const auto& l : net.layers) {
        detail::put_le<std::uint32_t>(buf, std::uint32_t(l.W.rows()));
        detail::put_le<std::uint32_t>(buf, std::uint32_t(l.W.cols()));
        for (long i = 0; i < l.W.rows(); ++i)
            for (long j = 0; j < l.W.cols(); ++j) detail::put_le<double>(buf, l.W(i, j));
        for (long i = 0; i < l.b.size(); ++i) detail::put_le<double>(buf, l.b(i));
    }
    buf.push_back(char(static_cast<std::uint8_t>(net.hidden_activation)));
    write_file_atomic(path, buf);
}

inline NetworkParams load_checkpoint(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 7 || std::memcmp(buf.data(), checkpoint_magic, 6) != 0)
        throw config_error("not a network checkpoint: " + path);
    std::size_t pos = 6;
    NetworkParams net;
    while (pos + 1 < buf.size()) {
        const auto out = detail::get_le<std::uint32_t>(buf, pos);
        const auto in = detail::get_le<std::uint32_t>(buf, pos);
        if (out == 0 || in == 0) throw config_error("checkpoint has a zero-sized layer");
        if (pos + std::size_t(out) * in * 8 + std::size_t(out) * 8 + 1 > buf.size())
            throw config_error("checkpoint truncated");
        DenseLayer l;
        l.W.resize(out, in);
        for (std::uint32_t i = 0; i < out; ++i)
            for (std::uint32_t j = 0; j < in; ++j) l.W(i, j) = detail::get_le<double>(buf, pos);
        l.b.resize(out);
        for (std::uint32_t i = 0; i < out; ++i) l.b(i) = detail::get_le<double>(buf, pos);
        if (!net.layers.empty() && net.layers.back().W.rows() != long(in))
            throw config_error("checkpoint layer widths do not chain");
        net.layers.push_back(std::move(l));
    }
    if (pos + 1 != buf.size()) throw config_error("checkpoint truncated");
    const auto tag = std::uint8_t(buf[pos]);
    if (tag > 3) throw config_error("checkpoint has an unknown activation tag");
    net.hidden_activation = static_cast<Activation>(tag);
    if (net.layers.empty()) throw config_error("checkpoint holds no layers");
    return net;
}

}  // namespace sgpde
