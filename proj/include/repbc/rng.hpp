#pragma once

// Portable pseudo-random streams.
//
// The standard <random> distributions are implementation-defined, so the same
// seed can produce different numbers under libstdc++ and libc++. Everything
// here is built only on std::mt19937_64 (whose output sequence is fixed by the
// standard) plus explicit transforms, so datasets and trained models are
// bit-identical across platforms with IEEE doubles.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace repbc {

/// 64-bit mixing step from splitmix64.
std::uint64_t mix64(std::uint64_t x);

/// Derive an independent stream seed from a parent seed, a purpose tag and an
/// index. Adding new tags never perturbs the streams of existing ones.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), unbiased.
    std::size_t uniform_index(std::size_t n);

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape, 1) via Marsaglia-Tsang.
    double gamma(double shape);

    std::vector<double> dirichlet(std::span<const double> alpha);
    std::vector<double> dirichlet(std::size_t k, double alpha);

    /// Sample an index from an (unnormalized, non-negative) weight vector.
    std::size_t categorical(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace repbc
