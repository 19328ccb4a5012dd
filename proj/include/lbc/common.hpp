#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lbc {

// All recoverable failures in the library surface as this exception; the CLI
// turns it into a diagnostic and a nonzero exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Seed for a named sub-stream of a global seed (erm, kmeans, sampler, synth...).
// splitmix64 over the seed mixed with an FNV-1a hash of the name.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
    return Rng(derive_seed(seed, stream));
}

// Round-trip exact decimal rendering of a double.
std::string format_real(double v);

}  // namespace lbc
