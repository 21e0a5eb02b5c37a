/*
 * Copyright 2026 The FedRec Arena Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDREC_ARENA_RNG_HPP
#define FEDREC_ARENA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace fedrec {

/*
 * Seeded random stream. The engine is std::mt19937_64, whose output sequence
 * is fixed by the standard. The conversions to doubles, bounded integers and
 * normals are done here rather than through <random> distributions, whose
 * algorithms are implementation-defined and differ between standard
 * libraries.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform on {0, ..., n-1}; n must be positive. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return x % n;
    }

    /// Standard normal via the Box-Muller transform (cached second draw is not kept).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) {
            u1 = uniform01();
        }
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Purposes of the substreams cut from a master seed.
enum class Stream : std::uint64_t {
    ItemInit = 1,
    UserInit = 2,
    Pairs = 3,
    Participation = 4,
    FakeProfiles = 5,
    FakeNoise = 6,
    Synthetic = 7,
};

/*
 * Substream seed for (master, purpose, a, b). Every random decision in the
 * simulator draws from a stream keyed by what it is for (e.g. pair sampling
 * of user u in round l uses (Pairs, l, u)), so results do not depend on the
 * order in which workers execute.
 */
constexpr std::uint64_t derive_seed(std::uint64_t master, Stream purpose, std::uint64_t a = 0,
                                    std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_stream(std::uint64_t master, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(derive_seed(master, purpose, a, b));
}

}  // namespace fedrec

#endif  // FEDREC_ARENA_RNG_HPP
