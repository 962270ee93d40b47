#pragma once

#include <cstdint>
#include <string_view>
#include <random>
#include <vector>

namespace vcmi {

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);

// Deterministic random source. std::mt19937_64 is bit-portable across
// implementations; the distribution transforms live here because the
// std::* distributions are not, and identical seeds must yield
// bit-identical streams everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t seed() const { return seed_; }
    uint64_t next_u64();

    // Uniform on [0,1), 53-bit resolution.
    double uniform();
    // Uniform on the open interval (0,1).
    double uniform_open();
    // Standard normal via Box-Muller with a cached spare.
    double normal();
    // Gamma(alpha, 1), alpha > 0, Marsaglia-Tsang squeeze.
    double gamma(double alpha);
    double chi_square(double nu);
    // Uniform integer in [0, n), n > 0.
    int uniform_int(int n);

    void fill_normal(double* dst, int n);
    void fill_uniform_open(double* dst, int n);

    // Fisher-Yates; std::shuffle's draw sequence is implementation-defined.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[static_cast<size_t>(j)]);
        }
    }

    // Independent stream derived from the construction seed and a tag.
    // Stable under reordering of draws on the parent.
    Rng child(std::string_view tag) const;

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vcmi
