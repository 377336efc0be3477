#pragma once

#include <span>
#include <vector>

#include "dc/corpus.hpp"
#include "dc/lm.hpp"

namespace dc {

struct OovSubstitution {
    std::size_t position = 0;
    TokenId replacement = token::unk;
    double cosine = 0.0;
};

struct OovResult {
    Artifact artifact;
    std::vector<OovSubstitution> substitutions;
};

// Row of `table` with the largest cosine similarity to `query`, reserved ids
// excluded. Ties go to the lowest id.
TokenId nearest_by_cosine(std::span<const double> query, const Tensor& table, double* similarity = nullptr);

// Replaces every UNK token left to right. At an UNK position the language
// model's next-token distribution (given the already-substituted prefix)
// weights the rows of its embedding table; the in-vocabulary token nearest
// to that expected embedding by cosine similarity is substituted.
OovResult oov_substitute(const Artifact& artifact, const LanguageModel& g_s, const Vocabulary& vocab);

} // namespace dc
