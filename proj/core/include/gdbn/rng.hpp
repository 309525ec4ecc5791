#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gdbn {

/// Deterministic random stream. All randomness in the project funnels through
/// a single 64-bit run seed split into named sub-streams ("tam", "noise",
/// "init", "sampling", "shuffle", ...), so that identical (config, seed)
/// reproduces bit-identical results regardless of call-site ordering.
///
/// The generator is xoshiro-free on purpose: a splitmix64 state walk with
/// explicit double conversion keeps the byte stream independent of the
/// standard library's distribution implementations.
class RngStream {
public:
    RngStream() : state_(0x9e3779b97f4a7c15ull) {}
    explicit RngStream(uint64_t seed) : state_(seed) { next_u64(); }
    RngStream(uint64_t seed, std::string_view stream_name);

    uint64_t next_u64();

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (one value per call, pair cached).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Uniform integer in [0, n), n > 0.
    uint64_t next_below(uint64_t n);

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

/// FNV-1a hash of a byte string; used for stream naming and file digests.
uint64_t fnv1a64(std::string_view bytes);

}  // namespace gdbn
