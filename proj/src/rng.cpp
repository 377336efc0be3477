#include "dc/rng.hpp"

#include "dc/error.hpp"

namespace dc {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis)
{
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed, std::string name)
    : seed_(seed), name_(std::move(name)), engine_(splitmix64(seed))
{
}

Rng Rng::split(std::string_view child) const
{
    std::uint64_t s = splitmix64(seed_ ^ fnv1a64(child));
    return Rng(s, name_ + "/" + std::string(child));
}

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::below(std::size_t n)
{
    if (n == 0) {
        throw InputError("Rng::below: empty range");
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

std::size_t Rng::categorical(std::span<const double> weights)
{
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    if (weights.empty() || !(total > 0.0)) {
        throw InputError("Rng::categorical: weights must have positive mass");
    }
    double u = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) {
            continue;
        }
        acc += weights[i];
        last_positive = i;
        if (u < acc) {
            return i;
        }
    }
    return last_positive;
}

} // namespace dc
