#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "framediff/tensor.hpp"

namespace fd {

using Rng = std::mt19937_64;

// splitmix64; used to derive independent per-record / per-worker streams from
// (seed, stream index) without correlation between neighboring indices.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(uint64_t seed, uint64_t stream = 0) { return Rng(mix_seed(seed, stream)); }

template <typename T>
Tensor<T> randn(Rng& rng, std::vector<int> shape, T stddev = T(1)) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& x : t.v) x = static_cast<T>(dist(rng) * static_cast<double>(stddev));
    return t;
}

inline std::string rng_state_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

inline void rng_set_state(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
}

}  // namespace fd
