#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dc/rng.hpp"

namespace dc {

// First-order Markov chain over word indices [0, states).
class MarkovSource {
public:
    MarkovSource(std::vector<double> initial, std::vector<std::vector<double>> transitions);

    // From every state, `preferred` successors drawn (without replacement)
    // from `targets` share `preferred_mass`; the remaining mass is spread
    // uniformly over all states. Sequences start uniformly within `starts`.
    static MarkovSource structured(std::size_t states, std::span<const std::size_t> targets,
                                   std::span<const std::size_t> starts, std::size_t preferred,
                                   double preferred_mass, Rng rng);

    // (1 - weight) * a + weight * b, rowwise.
    static MarkovSource mix(const MarkovSource& a, const MarkovSource& b, double weight);

    [[nodiscard]] std::size_t states() const { return initial_.size(); }
    [[nodiscard]] const std::vector<double>& initial() const { return initial_; }
    [[nodiscard]] const std::vector<double>& row(std::size_t from) const { return transitions_.at(from); }
    // Successors whose probability exceeds the uniform background.
    [[nodiscard]] std::vector<std::size_t> preferred(std::size_t from) const;

    [[nodiscard]] std::vector<std::size_t> sample(std::size_t length, Rng& rng) const;

private:
    std::vector<double> initial_;
    std::vector<std::vector<double>> transitions_;
};

// Layout of the synthetic "history": each style class owns a block of words
// and prefers transitions inside it; drifted eras move transition mass
// towards a block of shared words whose preferred successors are disjoint
// from every class block.
struct SyntheticEraConfig {
    std::size_t num_classes = 3;
    std::size_t words_per_class = 6;
    std::size_t shared_words = 6;
    std::size_t seq_len = 12;
    std::size_t artifacts_per_class = 40;
    std::size_t preferred_successors = 2;
    double preferred_mass = 0.85;

    void validate() const;
    [[nodiscard]] std::size_t vocabulary_size() const { return num_classes * words_per_class + shared_words; }
};

struct SyntheticCorpus {
    double drift = 0.0;
    std::vector<std::string> texts;
    std::vector<std::size_t> labels;   // style class of each text
};

std::vector<std::string> synthetic_words(const SyntheticEraConfig& cfg);
std::string synthetic_class_name(std::size_t c);

// Source for class c at drift 0 and at drift 1.
MarkovSource class_source(const SyntheticEraConfig& cfg, std::size_t c, std::uint64_t seed);
MarkovSource drift_target(const SyntheticEraConfig& cfg, std::size_t c, std::uint64_t seed);
MarkovSource era_source(const SyntheticEraConfig& cfg, std::size_t c, double drift, std::uint64_t seed);

// One corpus per drift level (at least two levels, each in [0, 1]).
// Drift 0 reproduces the context distribution; drift 1 uses only the
// drift targets.
std::vector<SyntheticCorpus> make_synthetic_eras(std::uint64_t seed, std::span<const double> drift_levels,
                                                 const SyntheticEraConfig& cfg = {});

} // namespace dc
