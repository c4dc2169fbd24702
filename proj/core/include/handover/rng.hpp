#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace handover {

using Rng = std::mt19937_64;

// Stable 64-bit sub-seed for a named component. FNV-1a over the name, mixed
// with the root seed through splitmix64, so the mapping never depends on the
// standard library's std::hash.
std::uint64_t derive_seed(std::uint64_t root, std::string_view component);
std::uint64_t derive_seed(std::uint64_t root, std::string_view component, std::uint64_t index);

std::uint64_t splitmix64(std::uint64_t x);

// Box-Muller standard normal. std::normal_distribution is implementation
// defined; this keeps corpora identical across standard libraries.
double standard_normal(Rng& rng);
double uniform(Rng& rng, double lo, double hi);

}  // namespace handover
