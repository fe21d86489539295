#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>

#include "core.hpp"
#include "simd.hpp"

namespace sgpde {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Split-stream PCG32 generator. A stream is fully identified by (seed, sid):
// equal identities replay the same sequence, and derive() maps any tag path,
// e.g. (epoch, trajectory, node), to an independent substream. This is what
// makes runs reproducible independently of scheduling or thread count.
//
// Normal draws come from an internal block buffer refilled 32 Box-Muller
// pairs at a time, so the values a stream produces depend only on how many
// normals have been consumed — never on whether they were drawn one at a
// time or in bulk.
class RngStream {
  public:
    RngStream() : RngStream(0, 0) {}
    explicit RngStream(std::uint64_t seed, std::uint64_t sid = 0)
        : seed_(seed), sid_(sid) {
        const std::uint64_t init = detail::mix64(seed ^ detail::mix64(sid));
        inc_ = (detail::mix64(sid + 0x632be59bd9b4e019ULL + seed) << 1u) | 1u;
        state_ = 0;
        next_u32();
        state_ += init;
        next_u32();
    }

    RngStream derive(std::uint64_t tag) const {
        return RngStream(seed_, detail::mix64(sid_ * 0xd1342543de82ef95ULL + tag));
    }
    RngStream derive(std::uint64_t a, std::uint64_t b) const { return derive(a).derive(b); }

    std::uint64_t seed() const { return seed_; }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // uniform on [0, 1), 53 random bits
    double uniform01() {
        const std::uint64_t hi = next_u32() >> 6;   // 26 bits
        const std::uint64_t lo = next_u32() >> 5;   // 27 bits
        return double((hi << 27) | lo) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    double normal() {
        if (pos_ == kBlock) refill();
        return buf_[std::size_t(pos_++)];
    }

    void fill_normal(double* dst, std::size_t n, double sd = 1.0) {
        std::size_t i = 0;
        while (i < n) {
            if (pos_ == kBlock) refill();
            const std::size_t take = std::min(std::size_t(kBlock - pos_), n - i);
            if (sd == 1.0) {
                std::memcpy(dst + i, buf_.data() + pos_, take * sizeof(double));
            } else {
                for (std::size_t k = 0; k < take; ++k) dst[i + k] = sd * buf_[std::size_t(pos_) + k];
            }
            pos_ += int(take);
            i += take;
        }
    }

    void fill_normal(Vec& v, double sd = 1.0) { fill_normal(v.data(), std::size_t(v.size()), sd); }

  private:
    static constexpr int kBlock = 64;  // 32 Box-Muller pairs per refill

    void refill() {
        constexpr std::size_t pairs = std::size_t(kBlock) / 2;
        double u1[pairs], ang[pairs], lg[pairs], c[pairs], s[pairs];
        for (std::size_t p = 0; p < pairs; ++p) {
            // u1 in (0, 1] so the log is finite; ang uniform on [0, 2*pi)
            u1[p] = double((std::uint64_t(next_u32() >> 6) << 27) | (next_u32() >> 5)) * 0x1.0p-53
                    + 0x1.0p-54;
            ang[p] = uniform01() * (2.0 * std::numbers::pi);
        }
        simd::vlog(u1, lg, pairs);
        simd::vcos(ang, c, pairs);
        simd::vsin(ang, s, pairs);
        for (std::size_t p = 0; p < pairs; ++p) {
            const double r = std::sqrt(-2.0 * lg[p]);
            buf_[2 * p] = r * c[p];
            buf_[2 * p + 1] = r * s[p];
        }
        pos_ = 0;
    }

    std::uint64_t seed_, sid_;
    std::uint64_t state_ = 0, inc_ = 1;
    std::array<double, kBlock> buf_{};
    int pos_ = kBlock;
};

}  // namespace sgpde
