#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "menupred/errors.hpp"

namespace menupred {

/// 64-bit FNV-1a. Used for deriving stream ids from strings and for the
/// cheap content digests recorded in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Counter-based splittable random stream.
///
/// The generator is fixed so that datasets and checkpoints produced with a
/// given seed are portable across builds and platforms:
///
///   key(seed)            = mix(seed + PHI)
///   key(seed, stream)    = mix(key(seed) ^ mix(stream + PHI))
///   draw at position p   = mix(key + p * PHI)
///
/// where mix() is the SplitMix64 finalizer and PHI = 0x9e3779b97f4a7c15.
/// Identical (seed, position) always yields the identical value, and
/// streams derived with distinct stream ids never share state.
class RngStream {
   public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), key_(mix(seed + kPhi)) {}

    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), key_(mix(mix(seed + kPhi) ^ mix(stream_id + kPhi))) {}

    /// Independent stream derived from this stream's key and `stream_id`.
    RngStream split(std::uint64_t stream_id) const {
        RngStream out(*this);
        out.key_ = mix(key_ ^ mix(stream_id + kPhi));
        out.pos_ = 0;
        return out;
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return pos_; }

    std::uint64_t next_u64() { return mix(key_ + (++pos_) * kPhi); }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; consumes exactly two draws per call.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw DomainError("RngStream::below: n must be >= 1");
        for (;;) {
            std::uint64_t x = next_u64();
            unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
            std::uint64_t lo = static_cast<std::uint64_t>(m);
            if (lo < n) {
                std::uint64_t threshold = (0 - n) % n;
                if (lo < threshold) continue;
            }
            return static_cast<std::uint64_t>(m >> 64);
        }
    }

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

   private:
    static constexpr std::uint64_t kPhi = 0x9e3779b97f4a7c15ull;
    static constexpr double kPi = 3.141592653589793238462643383279502884;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t pos_ = 0;
};

}  // namespace menupred
