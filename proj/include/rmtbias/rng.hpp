// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "rmtbias/errors.hpp"

namespace rmtbias {

// Philox4x32-10 counter-based generator (Salmon et al. constants).
//
// The key is (seed, trial index) and the counter is the draw index, so every
// trial owns an independent substream that can be generated from scratch on
// any worker. This is what makes Monte-Carlo output identical for any level
// of parallelism: the stream a trial sees never depends on which thread runs
// it or in which order trials are scheduled.
class PhiloxRng {
public:
    PhiloxRng(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
               static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
          counter_(0), slot_(4), cached_normal_(0.0), has_cached_normal_(false) {}

    std::uint32_t next_u32() {
        if (slot_ == 4) {
            block_ = generate(counter_++);
            slot_ = 0;
        }
        return block_[slot_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0,1], safe as a log() argument.
    double uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal, Box-Muller; the paired value is cached.
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double t = 6.283185307179586 * uniform();
        cached_normal_ = r * std::sin(t);
        has_cached_normal_ = true;
        return r * std::cos(t);
    }

    // Gamma(shape, 1) by Marsaglia-Tsang squeeze; shapes below one go through
    // the standard boost Gamma(shape+1) * U^(1/shape).
    double gamma(double shape) {
        if (!(shape > 0.0)) throw config_error("gamma shape must be positive");
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

private:
    static std::uint64_t mulhilo(std::uint32_t a, std::uint32_t b) {
        return static_cast<std::uint64_t>(a) * b;
    }

    std::array<std::uint32_t, 4> generate(std::uint64_t ctr) const {
        std::uint32_t c0 = static_cast<std::uint32_t>(ctr);
        std::uint32_t c1 = static_cast<std::uint32_t>(ctr >> 32);
        std::uint32_t c2 = key_[2];
        std::uint32_t c3 = key_[3];
        std::uint32_t k0 = key_[0];
        std::uint32_t k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = mulhilo(0xD2511F53u, c0);
            const std::uint64_t p1 = mulhilo(0xCD9E8D57u, c2);
            const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
            const std::uint32_t n1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
            const std::uint32_t n3 = static_cast<std::uint32_t>(p0);
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return {c0, c1, c2, c3};
    }

    std::array<std::uint32_t, 4> key_;
    std::uint64_t counter_;
    std::array<std::uint32_t, 4> block_;
    int slot_;
    double cached_normal_;
    bool has_cached_normal_;
};

} // namespace rmtbias
