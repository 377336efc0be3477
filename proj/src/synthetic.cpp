#include "dc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "dc/error.hpp"

namespace dc {

MarkovSource::MarkovSource(std::vector<double> initial, std::vector<std::vector<double>> transitions)
    : initial_(std::move(initial)), transitions_(std::move(transitions))
{
    if (initial_.empty() || transitions_.size() != initial_.size()) {
        throw InputError("MarkovSource: transition matrix must be square and match the initial distribution");
    }
    for (const auto& r : transitions_) {
        if (r.size() != initial_.size()) {
            throw InputError("MarkovSource: ragged transition matrix");
        }
    }
}

MarkovSource MarkovSource::structured(std::size_t states, std::span<const std::size_t> targets,
                                      std::span<const std::size_t> starts, std::size_t preferred,
                                      double preferred_mass, Rng rng)
{
    if (preferred == 0 || preferred > targets.size() || starts.empty()) {
        throw InputError("MarkovSource::structured: need 1..|targets| preferred successors and a start set");
    }
    std::vector<double> initial(states, 0.0);
    for (auto s : starts) {
        initial.at(s) += 1.0 / static_cast<double>(starts.size());
    }
    const double background = (1.0 - preferred_mass) / static_cast<double>(states);
    std::vector<std::vector<double>> rows(states, std::vector<double>(states, background));
    for (std::size_t from = 0; from < states; ++from) {
        std::vector<std::size_t> pool(targets.begin(), targets.end());
        Rng row_rng = rng.split(fmt::format("row{}", from));
        row_rng.shuffle(pool);
        for (std::size_t k = 0; k < preferred; ++k) {
            rows[from][pool[k]] += preferred_mass / static_cast<double>(preferred);
        }
    }
    return MarkovSource(std::move(initial), std::move(rows));
}

MarkovSource MarkovSource::mix(const MarkovSource& a, const MarkovSource& b, double weight)
{
    if (a.states() != b.states()) {
        throw InputError("MarkovSource::mix: state counts differ");
    }
    auto blend = [weight](const std::vector<double>& x, const std::vector<double>& y) {
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] = (1.0 - weight) * x[i] + weight * y[i];
        }
        return out;
    };
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < a.states(); ++i) {
        rows.push_back(blend(a.row(i), b.row(i)));
    }
    return MarkovSource(blend(a.initial(), b.initial()), std::move(rows));
}

std::vector<std::size_t> MarkovSource::preferred(std::size_t from) const
{
    const auto& r = row(from);
    const double floor = *std::min_element(r.begin(), r.end());
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j] > floor + 1e-12) {
            out.push_back(j);
        }
    }
    return out;
}

std::vector<std::size_t> MarkovSource::sample(std::size_t length, Rng& rng) const
{
    std::vector<std::size_t> out;
    out.reserve(length);
    if (length == 0) {
        return out;
    }
    out.push_back(rng.categorical(initial_));
    while (out.size() < length) {
        out.push_back(rng.categorical(transitions_[out.back()]));
    }
    return out;
}

// ---------------------------------------------------------------------------

void SyntheticEraConfig::validate() const
{
    if (num_classes < 1 || words_per_class < preferred_successors || shared_words < preferred_successors ||
        seq_len < 1 || artifacts_per_class < 1 || preferred_successors < 1) {
        throw InputError("SyntheticEraConfig: sizes must be positive and blocks must hold the preferred successors");
    }
    if (!(preferred_mass > 0.0 && preferred_mass < 1.0)) {
        throw InputError("SyntheticEraConfig: preferred_mass must lie in (0, 1)");
    }
}

std::vector<std::string> synthetic_words(const SyntheticEraConfig& cfg)
{
    std::vector<std::string> words;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        for (std::size_t j = 0; j < cfg.words_per_class; ++j) {
            words.push_back(fmt::format("c{}w{}", c, j));
        }
    }
    for (std::size_t j = 0; j < cfg.shared_words; ++j) {
        words.push_back(fmt::format("sw{}", j));
    }
    return words;
}

std::string synthetic_class_name(std::size_t c) { return fmt::format("style{}", c); }

namespace {

std::vector<std::size_t> block(std::size_t begin, std::size_t count)
{
    std::vector<std::size_t> out(count);
    std::iota(out.begin(), out.end(), begin);
    return out;
}

} // namespace

MarkovSource class_source(const SyntheticEraConfig& cfg, std::size_t c, std::uint64_t seed)
{
    cfg.validate();
    const auto words = block(c * cfg.words_per_class, cfg.words_per_class);
    return MarkovSource::structured(cfg.vocabulary_size(), words, words, cfg.preferred_successors, cfg.preferred_mass,
                                    Rng(seed).split(fmt::format("class{}", c)));
}

MarkovSource drift_target(const SyntheticEraConfig& cfg, std::size_t c, std::uint64_t seed)
{
    cfg.validate();
    (void)c;  // the drift target is shared by every class
    const auto shared = block(cfg.num_classes * cfg.words_per_class, cfg.shared_words);
    return MarkovSource::structured(cfg.vocabulary_size(), shared, shared, cfg.preferred_successors,
                                    cfg.preferred_mass, Rng(seed).split("drift-target"));
}

MarkovSource era_source(const SyntheticEraConfig& cfg, std::size_t c, double drift, std::uint64_t seed)
{
    if (!(drift >= 0.0 && drift <= 1.0)) {
        throw InputError(fmt::format("drift level {} outside [0, 1]", drift));
    }
    return MarkovSource::mix(class_source(cfg, c, seed), drift_target(cfg, c, seed), drift);
}

std::vector<SyntheticCorpus> make_synthetic_eras(std::uint64_t seed, std::span<const double> drift_levels,
                                                 const SyntheticEraConfig& cfg)
{
    cfg.validate();
    if (drift_levels.size() < 2) {
        throw InputError("make_synthetic_eras: at least two drift levels are required");
    }
    for (double d : drift_levels) {
        if (!(d >= 0.0 && d <= 1.0)) {
            throw InputError(fmt::format("make_synthetic_eras: drift level {} outside [0, 1]", d));
        }
    }
    const auto words = synthetic_words(cfg);
    Rng root(seed, "synthetic-eras");
    std::vector<SyntheticCorpus> out;
    for (std::size_t e = 0; e < drift_levels.size(); ++e) {
        SyntheticCorpus corpus;
        corpus.drift = drift_levels[e];
        for (std::size_t c = 0; c < cfg.num_classes; ++c) {
            const auto source = era_source(cfg, c, corpus.drift, seed);
            Rng rng = root.split(fmt::format("era{}/class{}", e, c));
            for (std::size_t k = 0; k < cfg.artifacts_per_class; ++k) {
                std::string text;
                for (auto w : source.sample(cfg.seq_len, rng)) {
                    if (!text.empty()) {
                        text.push_back(' ');
                    }
                    text += words[w];
                }
                corpus.texts.push_back(std::move(text));
                corpus.labels.push_back(c);
            }
        }
        out.push_back(std::move(corpus));
    }
    return out;
}

} // namespace dc
