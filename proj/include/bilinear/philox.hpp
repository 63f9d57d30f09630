#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11) and the
// Brownian-increment stream built on it. Every draw is a pure function of
// (key, counter), so paths can be generated in any order or concurrently.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

namespace bilinear {

struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter generate(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
            const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
            const auto hi0 = std::uint32_t(p0 >> 32);
            const auto lo0 = std::uint32_t(p0);
            const auto hi1 = std::uint32_t(p1 >> 32);
            const auto lo1 = std::uint32_t(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

/// Standard-normal draws keyed by (seed, path index, step).
class BrownianStream {
  public:
    BrownianStream(std::uint64_t base_seed, std::uint64_t path_index)
        : key_{std::uint32_t(base_seed), std::uint32_t(base_seed >> 32)},
          path_lo_(std::uint32_t(path_index)),
          path_hi_(std::uint32_t(path_index >> 32)) {}

    /// Fills `out` with N(0,1) draws for the given step. Each 128-bit block
    /// yields two normals via Box-Muller on two 53-bit uniforms.
    void normals(std::uint32_t step, Eigen::Ref<Eigen::VectorXd> out) const {
        const auto m = out.size();
        for (Eigen::Index k = 0; k < m; k += 2) {
            const auto block = std::uint32_t(k / 2);
            const Philox4x32::Counter ctr{step, block, path_lo_, path_hi_};
            const auto r = Philox4x32::generate(ctr, key_);
            const double u1 = to_open_unit(r[0], r[1]);
            const double u2 = to_unit(r[2], r[3]);
            const double radius = std::sqrt(-2.0 * std::log(u1));
            const double angle = 2.0 * std::numbers::pi * u2;
            out(k) = radius * std::cos(angle);
            if (k + 1 < m)
                out(k + 1) = radius * std::sin(angle);
        }
    }

  private:
    // (0, 1]
    static double to_open_unit(std::uint32_t a, std::uint32_t b) {
        const std::uint64_t bits = ((std::uint64_t(a) << 32) | b) >> 11;
        return (double(bits) + 1.0) * 0x1.0p-53;
    }
    // [0, 1)
    static double to_unit(std::uint32_t a, std::uint32_t b) {
        const std::uint64_t bits = ((std::uint64_t(a) << 32) | b) >> 11;
        return double(bits) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint32_t path_lo_;
    std::uint32_t path_hi_;
};

} // namespace bilinear
