#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace vat {

// Deterministic random source. Distributions are hand-rolled on top of
// mt19937_64 so that sequences are identical across standard libraries;
// std::uniform_real_distribution and friends are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; second value cached.
    double normal();

    // Uniform integer in [0, n); unbiased via rejection.
    std::uint64_t uniform_index(std::uint64_t n);

    // Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from (base seed, stream index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// The named streams one training run consumes. Partitioning them keeps
// baseline and lambda=0 runs trajectory-comparable: a run that never touches
// the aux or discriminator paths leaves those streams untouched.
struct RngStreams {
    Rng shuffle;
    Rng aux;
    Rng init;
    Rng augment_tr;
    Rng augment_aux;

    explicit RngStreams(std::uint64_t seed)
        : shuffle(derive_seed(seed, 0)),
          aux(derive_seed(seed, 1)),
          init(derive_seed(seed, 2)),
          augment_tr(derive_seed(seed, 3)),
          augment_aux(derive_seed(seed, 4)) {}
};

}  // namespace vat
