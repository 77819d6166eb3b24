#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sbn/errors.hpp"

namespace sbn {

/// Seeded random source used by every stochastic component.
///
/// The engine is std::mt19937_64 (its output stream is fixed by the
/// standard). Uniform doubles use explicit 53-bit extraction and gaussians
/// use Box-Muller, so no implementation-defined distribution code is
/// involved and the byte-level stream depends only on the seed. The
/// kAlgorithm identifier is recorded in run manifests so metrics can be
/// replayed by any implementation of the same scheme.
class Rng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64/canonical53/box-muller";

    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (pairs cached).
    double gaussian();
    /// Index drawn from an explicit probability vector (inverse CDF).
    std::size_t categorical(std::span<const double> probs);
    /// Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n);

    std::vector<double> gaussian_vector(std::size_t n);

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Stateless mix used to derive stream seeds (e.g. per epoch, per worker)
/// from a base seed without correlating the streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace sbn
