/*
 Copyright 2026 The mfbm Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// Every draw is a pure function of (key, counter), so any path or dimension
// can be regenerated independently of the others.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mfbm::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kW1 = 0xBB67AE85u;
inline constexpr std::uint32_t kM0 = 0xD2511F53u;
inline constexpr std::uint32_t kM1 = 0xCD9E8D57u;

constexpr void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

constexpr Counter round(const Counter& c, const Key& k) {
    std::uint32_t hi0 = 0, lo0 = 0, hi1 = 0, lo1 = 0;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

constexpr Counter philox4x32(Counter c, Key k) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            k[0] += detail::kW0;
            k[1] += detail::kW1;
        }
        c = detail::round(c, k);
    }
    return c;
}

/// SplitMix64 finalizer; folds a seed and stream ids into a 64-bit key.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Uniform in (0, 1) from 53 random bits; never returns 0.
constexpr double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Independent standard normal substream identified by (seed, stream, lane).
/// Draw i is a pure function of those ids and i.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t lane) {
        const std::uint64_t k = mix64(seed ^ mix64(stream ^ mix64(lane + 0x632BE59BD9B4E019ull)));
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
        lane_ = lane;
    }

    /// Fills out[i] with draw (offset + i).
    void fill(std::span<double> out, std::uint64_t offset = 0) const {
        std::size_t i = 0;
        // Each Philox block yields two normals via Box-Muller.
        if (offset % 2 == 1 && !out.empty()) {
            out[i++] = pair(offset / 2)[1];
            ++offset;
        }
        for (; i + 1 < out.size(); i += 2, offset += 2) {
            const auto z = pair(offset / 2);
            out[i] = z[0];
            out[i + 1] = z[1];
        }
        if (i < out.size()) out[i] = pair(offset / 2)[0];
    }

    double at(std::uint64_t index) const { return pair(index / 2)[index % 2]; }

private:
    std::array<double, 2> pair(std::uint64_t block) const {
        const Counter c{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                        static_cast<std::uint32_t>(lane_), static_cast<std::uint32_t>(lane_ >> 32)};
        const Counter r = philox4x32(c, key_);
        const double u1 = to_unit(r[0], r[1]);
        const double u2 = to_unit(r[2], r[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        return {rad * std::cos(ang), rad * std::sin(ang)};
    }

    Key key_{};
    std::uint64_t lane_ = 0;
};

}  // namespace mfbm::rng
