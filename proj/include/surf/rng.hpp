#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace surf {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s);

// Hierarchical seed derivation: master seed -> per-purpose -> per-index.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0) {
  return Rng(derive_seed(master, purpose, index));
}

}  // namespace surf
