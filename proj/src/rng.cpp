#include "vcmi/rng.hpp"

#include <cmath>

#include "vcmi/errors.hpp"

namespace vcmi {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
    for (;;) {
        double u = uniform();
        if (u > 0.0) return u;
    }
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::gamma(double alpha) {
    if (!(alpha > 0.0)) throw DomainError("gamma: alpha must be positive");
    if (alpha < 1.0) {
        // Boost to alpha+1 and scale back by u^(1/alpha).
        double u = uniform_open();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform_open();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::chi_square(double nu) { return 2.0 * gamma(0.5 * nu); }

int Rng::uniform_int(int n) {
    if (n <= 0) throw DomainError("uniform_int: n must be positive");
    uint64_t bound = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    for (;;) {
        uint64_t x = next_u64();
        if (x < limit) return static_cast<int>(x % bound);
    }
}

void Rng::fill_normal(double* dst, int n) {
    for (int i = 0; i < n; ++i) dst[i] = normal();
}

void Rng::fill_uniform_open(double* dst, int n) {
    for (int i = 0; i < n; ++i) dst[i] = uniform_open();
}

Rng Rng::child(std::string_view tag) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(tag)));
}

}  // namespace vcmi
