#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace dynbid {

/// Identifies one independent random stream: (master seed, run index, episode
/// index). Streams for distinct keys never overlap, so episodes can be simulated
/// in any order or on any thread and still reproduce bit for bit.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint32_t run = 0;
    std::uint32_t episode = 0;
};

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11), exposed as a
/// UniformRandomBitGenerator producing 32-bit words.
class Philox4x32 {
public:
    using result_type = std::uint32_t;

    static constexpr const char* kName = "philox4x32-10";

    explicit Philox4x32(StreamKey key = {}) noexcept
        : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
          counter_{0, 0, key.episode, key.run} {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (index_ == 4) {
            block_ = generate(counter_, key_);
            if (++counter_[0] == 0) ++counter_[1];
            index_ = 0;
        }
        return block_[index_++];
    }

    /// Uniform double in (0, 1) built from 53 random bits.
    double uniform() noexcept {
        const std::uint64_t hi = operator()();
        const std::uint64_t lo = operator()();
        const std::uint64_t bits = ((hi << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    /// The raw block function, exposed for known-answer tests.
    static std::array<std::uint32_t, 4> generate(std::array<std::uint32_t, 4> ctr,
                                                 std::array<std::uint32_t, 2> key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> counter_;
    std::array<std::uint32_t, 4> block_{};
    int index_ = 4;
};

using RandomStream = Philox4x32;

}  // namespace dynbid
