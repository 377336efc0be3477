#include "dc/oov.hpp"

#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "dc/error.hpp"

namespace dc {

TokenId nearest_by_cosine(std::span<const double> query, const Tensor& table, double* similarity)
{
    const std::size_t rows = table.dim(0), width = table.dim(1);
    if (query.size() != width) {
        throw ShapeError(fmt::format("nearest_by_cosine: query of width {} vs table {}", query.size(), to_string(table.shape())));
    }
    double qn = 0.0;
    for (double q : query) {
        qn += q * q;
    }
    qn = std::sqrt(qn);
    TokenId best = token::unk;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t r = static_cast<std::size_t>(token::reserved_count); r < rows; ++r) {
        double dot = 0.0, rn = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            const double e = table.at(r, j);
            dot += e * query[j];
            rn += e * e;
        }
        const double denom = qn * std::sqrt(rn);
        const double sim = denom > 0.0 ? dot / denom : 0.0;
        if (sim > best_sim) {
            best_sim = sim;
            best = static_cast<TokenId>(r);
        }
    }
    if (best == token::unk) {
        throw InputError("nearest_by_cosine: vocabulary has no non-reserved tokens");
    }
    if (similarity != nullptr) {
        *similarity = best_sim;
    }
    return best;
}

OovResult oov_substitute(const Artifact& artifact, const LanguageModel& g_s, const Vocabulary& vocab)
{
    if (vocab.size() != g_s.config().vocab_size) {
        throw IncompatibleError(fmt::format("oov_substitute: vocabulary has {} tokens, model expects {}", vocab.size(),
                                            g_s.config().vocab_size));
    }
    if (g_s.vocab_fingerprint() != 0 && g_s.vocab_fingerprint() != vocab.fingerprint()) {
        throw IncompatibleError("oov_substitute: language model was trained on a different vocabulary");
    }
    OovResult result{artifact, {}};
    auto& tokens = result.artifact.tokens;
    const Tensor& table = g_s.parameters().get("embedding").tensor;
    const std::size_t width = table.dim(1);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] != token::unk) {
            continue;
        }
        // Empty prefix is fine: the model conditions on BOS alone.
        const auto dist = g_s.next_dist(std::span<const TokenId>(tokens.data(), t));
        std::vector<double> expected(width, 0.0);
        for (std::size_t v = 0; v < dist.size(); ++v) {
            for (std::size_t j = 0; j < width; ++j) {
                expected[j] += dist[v] * table.at(v, j);
            }
        }
        OovSubstitution sub;
        sub.position = t;
        sub.replacement = nearest_by_cosine(expected, table, &sub.cosine);
        tokens[t] = sub.replacement;
        result.substitutions.push_back(sub);
    }
    return result;
}

} // namespace dc
