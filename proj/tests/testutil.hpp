#pragma once

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "merodim/sphere.hpp"

#include <random>

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed = 987654321ULL) { return std::mt19937_64(seed); }

inline merodim::Complex random_point(std::mt19937_64& gen, double span = 3.0) {
    std::uniform_real_distribution<double> u(-span, span);
    return merodim::Complex(u(gen), u(gen));
}

}  // namespace testutil
