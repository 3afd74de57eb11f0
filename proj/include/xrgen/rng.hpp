#pragma once

#include <cstdint>
#include <random>

#include "xrgen/tensor.hpp"

namespace xrgen {

// Seeded random source. Every stochastic operation in the library takes one of
// these explicitly; there is no ambient randomness.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double normal() { return normal_(eng_); }
    double uniform() { return unif_(eng_); }  // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t next_u64() { return eng_(); }

    std::mt19937_64& engine() { return eng_; }

  private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

// splitmix64 step; used to derive independent child seeds from a base seed
// (per phantom, per image, per epoch) so parallel work stays reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x632be59bd9b4e019ull));
}

inline void fill_standard_normal(ImageTensor& t, Rng& rng) {
    for (double& v : t.values) v = rng.normal();
}

}  // namespace xrgen
