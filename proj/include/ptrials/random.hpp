#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace ptrials {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is fixed by a 64-bit key (the run seed) and a 64-bit stream id
/// (platform or replicate index). Draws within a stream advance the low half
/// of the counter, so stream i never depends on how many draws stream j made.
/// Satisfies UniformRandomBitGenerator.
class Philox4x32 {
public:
    using result_type = std::uint32_t;

    Philox4x32(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (index_ == 4) {
            block_ = generate(counter_++);
            index_ = 0;
        }
        return block_[index_++];
    }

    /// Uniform double in the open interval (0, 1) with 53 random bits.
    double uniform_open() {
        const std::uint64_t hi = (*this)() >> 5;  // 27 bits
        const std::uint64_t lo = (*this)() >> 6;  // 26 bits
        const std::uint64_t bits = (hi << 26) | lo;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    /// The raw 10-round bijection.
    static Block philox_block(Block ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    Block generate(std::uint64_t counter) const {
        return philox_block({static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                             static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                            key_);
    }

    static constexpr std::uint32_t kMul0 = 0xD2511F53;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

    Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Block block_{};
    int index_ = 4;
};

/// Standard normal variates by the Box-Muller transform.
///
/// Implemented here rather than via std::normal_distribution so that output is
/// identical across standard library implementations.
class NormalSampler {
public:
    template <class Engine>
    double operator()(Engine& engine) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = engine.uniform_open();
        const double u2 = engine.uniform_open();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Convenience bundle: one independent normal stream.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream) : engine_(seed, stream) {}

    double operator()() { return normal_(engine_); }
    double uniform() { return engine_.uniform_open(); }

private:
    Philox4x32 engine_;
    NormalSampler normal_;
};

}  // namespace ptrials
