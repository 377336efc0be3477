#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dc {

// Seeded, named, splittable random generator.
//
// A child stream obtained through split() depends only on the parent's seed
// and the child name, never on how many numbers the parent has drawn. All
// stochastic code takes an Rng& explicitly; there is no global generator.
// Distributions are implemented here (not via <random> distributions) so
// that streams are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::string name = "root");

    [[nodiscard]] Rng split(std::string_view child) const;

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer on [0, n).
    std::size_t below(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }
    // Draws an index with probability proportional to weights[i].
    std::size_t categorical(std::span<const double> weights);

    template <class T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] const std::string& name() const { return name_; }

private:
    std::uint64_t seed_;
    std::string name_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

} // namespace dc
