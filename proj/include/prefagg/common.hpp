#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace prefagg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Logistic function, stable for the whole double range (tanh saturates
// cleanly instead of overflowing exp).
inline double stable_sigmoid(double t) {
    return 0.5 * (1.0 + std::tanh(0.5 * t));
}

// sigma'(t) = sigma(t) * (1 - sigma(t)), evaluated without cancellation.
inline double sigmoid_deriv(double t) {
    const double s = stable_sigmoid(t);
    return s * (1.0 - s);
}

// log(1 + e^t) without overflow.
inline double softplus(double t) {
    const double a = t > 0.0 ? t : 0.0;
    return a + std::log1p(std::exp(-std::abs(t)));
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("logit: argument must lie strictly inside (0,1)");
    }
    return std::log(p) - std::log1p(-p);
}

inline double rad2deg(double r) { return r * 180.0 / M_PI; }
inline double deg2rad(double d) { return d * M_PI / 180.0; }

// splitmix64 finalizer; used to derive independent stream seeds from a base
// seed plus arbitrary integer coordinates (sweep point, replicate, ...).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t p : parts) h = splitmix64(h ^ p);
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v);

// Seeded random source. The distribution transforms are implemented here
// (rather than via std:: distributions, whose output is implementation
// defined) so that identical seeds give identical streams everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed ^ 0xA5A5A5A5DEADBEEFULL)) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform on [0, 1) with 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller, second value cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    // uniform integer in [0, n)
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return static_cast<int>(v % un);
    }

    Vector normal_vector(int d) {
        Vector v(d);
        for (int i = 0; i < d; ++i) v[i] = normal();
        return v;
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Fixed-order pairwise summation; deterministic and accurate for the long
// reductions used by the loss functions.
double pairwise_sum(const double* data, std::size_t n);
double pairwise_sum(const std::vector<double>& v);

// Shortest round-trip decimal for a double (up to 17 significant digits).
std::string format_double(double v);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace prefagg
