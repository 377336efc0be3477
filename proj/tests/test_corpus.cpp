#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dc/error.hpp"
#include "dc/oov.hpp"
#include "dc/synthetic.hpp"

using namespace dc;

namespace {

const std::filesystem::path kData = DC_TEST_DATA;

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> fixture_docs()
{
    return {tokenize(slurp(kData / "fixture" / "doc1.txt")), tokenize(slurp(kData / "fixture" / "doc2.txt"))};
}

// Vocabulary of the reserved ids plus the given words, each seen once.
Vocabulary words_vocab(const std::vector<std::string>& words)
{
    return Vocabulary::build(std::vector<std::vector<std::string>>{words}, 1);
}

// Language model whose next-token distribution is `dist` at every position.
LanguageModel fixed_dist_lm(const std::vector<double>& dist, const std::vector<std::vector<double>>& emb)
{
    LmConfig cfg;
    cfg.vocab_size = dist.size();
    cfg.embed_dim = emb.front().size();
    cfg.context_len = 4;
    cfg.lstm_units = 2;
    Rng rng(1);
    LanguageModel lm(cfg, rng);
    lm.parameters().get("dense/weight").tensor.fill(0.0);
    auto& bias = lm.parameters().get("dense/bias").tensor;
    for (std::size_t v = 0; v < dist.size(); ++v) {
        bias[v] = dist[v] > 0.0 ? std::log(dist[v]) : -1e4;
    }
    auto& table = lm.parameters().get("embedding").tensor;
    for (std::size_t v = 0; v < emb.size(); ++v) {
        for (std::size_t j = 0; j < emb[v].size(); ++j) {
            table.at(v, j) = emb[v][j];
        }
    }
    return lm;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b)
{
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / std::sqrt(na * nb);
}

} // namespace

TEST_CASE("tokenize splits punctuation, lowercases and keeps line breaks")
{
    using V = std::vector<std::string>;
    CHECK(tokenize("I sing, I sing") == V{"i", "sing", ",", "i", "sing"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("   \n  ").empty());
    CHECK(tokenize("Hope is\nthe thing") == V{"hope", "is", "<nl>", "the", "thing"});
    CHECK(tokenize("don't--stop") == V{"don't", "-", "-", "stop"});
}

TEST_CASE("detokenize then tokenize is the identity on normalized text")
{
    const char* normalized[] = {"i sing , i sing", "hope is\nthe thing", "a\n\nb", "the end ."};
    for (const char* text : normalized) {
        const auto toks = tokenize(text);
        CHECK(detokenize(toks) == text);
        CHECK(tokenize(detokenize(toks)) == toks);
    }
    // Random token streams over words, punctuation and newlines.
    const std::vector<std::string> alphabet{"o", "captain", "my", ",", "!", ";", "<nl>", "heart's", "2"};
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> toks;
        const auto n = 1 + rng.below(15);
        for (std::size_t i = 0; i < n; ++i) {
            toks.push_back(alphabet[rng.below(alphabet.size())]);
        }
        while (!toks.empty() && toks.front() == "<nl>") {
            toks.erase(toks.begin());
        }
        while (!toks.empty() && toks.back() == "<nl>") {
            toks.pop_back();
        }
        const auto text = detokenize(toks);
        CHECK(tokenize(text) == toks);
        CHECK(detokenize(tokenize(text)) == text);
    }
}

TEST_CASE("vocabulary of the fixture corpus matches the golden file")
{
    const auto vocab = Vocabulary::build(fixture_docs(), 1);
    std::ostringstream out;
    vocab.write_tsv(out);
    CHECK(out.str() == slurp(kData / "fixture_vocab.tsv"));

    std::istringstream in(out.str());
    const auto back = Vocabulary::read_tsv(in);
    CHECK(back.fingerprint() == vocab.fingerprint());
    CHECK(back.size() == 14);
}

TEST_CASE("min_count boundaries")
{
    const auto docs = fixture_docs();
    CHECK(Vocabulary::build(docs, 1).size() == 4 + 10);
    CHECK(Vocabulary::build(docs, 2).size() == 4 + 6);
    CHECK(Vocabulary::build(docs, 3).size() == 4 + 2);
    const auto reserved_only = Vocabulary::build(docs, 4);
    CHECK(reserved_only.size() == token::reserved_count);
    CHECK(reserved_only.id("the") == token::unk);
    CHECK_THROWS_AS(Vocabulary::build(docs, 0), InputError);
    CHECK_THROWS_AS(Vocabulary::build(std::vector<std::vector<std::string>>{}, 1), InputError);
}

TEST_CASE("encode and decode are inverse on in-vocabulary sequences")
{
    const auto vocab = Vocabulary::build(fixture_docs(), 1);
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<TokenId> ids;
        const auto n = rng.below(12);
        for (std::size_t i = 0; i < n; ++i) {
            ids.push_back(static_cast<TokenId>(token::reserved_count + rng.below(vocab.size() - token::reserved_count)));
        }
        const auto words = vocab.decode(ids);
        CHECK(vocab.encode(words) == ids);
    }
    const std::vector<std::string> unknown{"the", "zebra"};
    CHECK(vocab.encode(unknown) == std::vector<TokenId>{5, token::unk});
}

TEST_CASE("word-vector files fill matching rows")
{
    const auto path = std::filesystem::temp_directory_path() / "dc_test_vectors.txt";
    {
        std::ofstream out(path);
        out << "cat 1 2\nzebra 5 5\nthe 0.5 -1\n";
    }
    auto vocab = Vocabulary::build(fixture_docs(), 1);
    CHECK(vocab.load_embeddings(path, 2) == 2);
    const auto& table = *vocab.embeddings();
    CHECK(table.at(7, 0) == 1.0);
    CHECK(table.at(7, 1) == 2.0);
    CHECK(table.at(5, 1) == -1.0);
    CHECK(table.at(8, 0) == 0.0);
    CHECK(vocab.embedding_rows_loaded()[7]);
    CHECK_FALSE(vocab.embedding_rows_loaded()[8]);
    CHECK_THROWS_AS(vocab.load_embeddings(path, 3), InputError);
    std::filesystem::remove(path);
}

TEST_CASE("split assignment is a pure function of id, seed and ratios")
{
    const SplitRatios ratios;
    std::map<Split, int> counts;
    for (int i = 0; i < 5000; ++i) {
        const auto id = "poem-" + std::to_string(i);
        const auto s = assign_split(id, 42, ratios);
        CHECK(assign_split(id, 42, ratios) == s);
        ++counts[s];
    }
    CHECK(std::abs(counts[Split::train] / 5000.0 - 0.8) < 0.03);
    CHECK(std::abs(counts[Split::valid] / 5000.0 - 0.1) < 0.03);
    CHECK(std::abs(counts[Split::test] / 5000.0 - 0.1) < 0.03);
    CHECK_THROWS_AS((SplitRatios{0.5, 0.2, 0.2}.validate()), InputError);
}

TEST_CASE("dataset validation requires every class in train")
{
    ContextDataset ds;
    ds.class_names = {"odes", "sonnets"};
    Artifact a{"a", "", {4}, 0, "", 0};
    Artifact b{"b", "", {4}, 1, "", 0};
    ds.artifacts = {a, b};
    ds.splits = {Split::train, Split::valid};
    CHECK_THROWS_AS(ds.validate(), InputError);
    ds.splits = {Split::train, Split::train};
    CHECK_NOTHROW(ds.validate());
    CHECK(ds.split(Split::train).size() == 2);
    CHECK(ds.split(Split::test).empty());
}

TEST_CASE("manifest round trip")
{
    const auto path = std::filesystem::temp_directory_path() / "dc_test_manifest.jsonl";
    const std::vector<ManifestEntry> entries{{"p1", "a.txt", "odes", "context"}, {"p2", "b.txt", "", ""}};
    write_manifest(path, entries);
    const auto back = read_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].class_name == "odes");
    CHECK(back[1].path == "b.txt");
    {
        std::ofstream out(path);
        out << "{\"id\": \"x\"}\n";
    }
    CHECK_THROWS_AS(read_manifest(path), InputError);
    std::filesystem::remove(path);
}

TEST_CASE("oov substitution without UNK is the identity")
{
    const auto vocab = words_vocab({"w0", "w1", "w2", "w3", "w4"});
    const auto lm = fixed_dist_lm(std::vector<double>(9, 1.0 / 9), std::vector<std::vector<double>>(9, {1.0, 0.0}));
    Artifact a{"x", "w0 w1", {4, 5}, std::nullopt, "", vocab.fingerprint()};
    const auto r = oov_substitute(a, lm, vocab);
    CHECK(r.artifact.tokens == a.tokens);
    CHECK(r.substitutions.empty());
}

TEST_CASE("one-hot prediction substitutes exactly the predicted token")
{
    const auto vocab = words_vocab({"w0", "w1", "w2", "w3", "w4"});
    std::vector<double> dist(9, 0.0);
    dist[6] = 1.0;
    std::vector<std::vector<double>> emb(9);
    Rng rng(4);
    for (auto& row : emb) {
        row = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    }
    const auto lm = fixed_dist_lm(dist, emb);
    Artifact a{"x", "", {token::unk, 4, token::unk}, std::nullopt, "", 0};
    const auto r = oov_substitute(a, lm, vocab);
    CHECK(r.artifact.tokens == std::vector<TokenId>{6, 4, 6});
    CHECK(r.substitutions.size() == 2);
    CHECK(r.substitutions[0].position == 0);
}

TEST_CASE("oov substitution agrees with exhaustive cosine search")
{
    const auto vocab = words_vocab({"w0", "w1", "w2", "w3", "w4"});
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> dist(9);
        double z = 0.0;
        for (auto& p : dist) {
            p = rng.uniform(0.01, 1.0);
            z += p;
        }
        for (auto& p : dist) {
            p /= z;
        }
        std::vector<std::vector<double>> emb(9);
        for (auto& row : emb) {
            row = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        }
        const auto lm = fixed_dist_lm(dist, emb);
        // The model's own distribution (bias logits) is what weights the rows.
        const auto p = lm.next_dist({});
        std::vector<double> expected(3, 0.0);
        for (std::size_t v = 0; v < 9; ++v) {
            for (std::size_t j = 0; j < 3; ++j) {
                expected[j] += p[v] * emb[v][j];
            }
        }
        TokenId best = -1;
        double best_sim = -2.0;
        for (std::size_t v = token::reserved_count; v < 9; ++v) {
            const double s = cosine(expected, emb[v]);
            if (s > best_sim) {
                best_sim = s;
                best = static_cast<TokenId>(v);
            }
        }
        Artifact a{"x", "", {token::unk}, std::nullopt, "", 0};
        const auto r = oov_substitute(a, lm, vocab);
        CHECK(r.artifact.tokens.front() == best);
        CHECK(std::abs(r.substitutions.front().cosine - best_sim) < 1e-12);
        CHECK_FALSE(token::is_reserved(r.artifact.tokens.front()));
    }
}

TEST_CASE("oov substitution leaves no UNK and keeps the length")
{
    const auto vocab = words_vocab({"w0", "w1", "w2", "w3", "w4"});
    Rng init(5);
    LmConfig cfg{9, 3, 4, 3, 0.2};
    LanguageModel lm(cfg, init);
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        Artifact a;
        const auto n = 1 + rng.below(10);
        for (std::size_t i = 0; i < n; ++i) {
            a.tokens.push_back(rng.bernoulli(0.4) ? token::unk : static_cast<TokenId>(4 + rng.below(5)));
        }
        const auto r = oov_substitute(a, lm, vocab);
        CHECK(r.artifact.tokens.size() == n);
        CHECK(std::count(r.artifact.tokens.begin(), r.artifact.tokens.end(), token::unk) == 0);
    }
}

TEST_CASE("oov substitution rejects a model from another vocabulary")
{
    const auto vocab = words_vocab({"w0", "w1", "w2", "w3", "w4"});
    Rng init(5);
    LanguageModel small(LmConfig{8, 3, 4, 3, 0.2}, init);
    Artifact a{"x", "", {token::unk}, std::nullopt, "", 0};
    CHECK_THROWS_AS(oov_substitute(a, small, vocab), IncompatibleError);
    LanguageModel other(LmConfig{9, 3, 4, 3, 0.2}, init);
    other.set_vocab_fingerprint(vocab.fingerprint() ^ 1);
    CHECK_THROWS_AS(oov_substitute(a, other, vocab), IncompatibleError);
}

TEST_CASE("synthetic eras at drift 0 reproduce the context source")
{
    SyntheticEraConfig cfg;
    cfg.num_classes = 1;
    cfg.seq_len = 50;
    cfg.artifacts_per_class = 1000;
    const std::vector<double> drifts{0.0, 1.0};
    const auto eras = make_synthetic_eras(17, drifts, cfg);
    const auto source = class_source(cfg, 0, 17);
    const auto words = synthetic_words(cfg);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < words.size(); ++i) {
        index[words[i]] = i;
    }
    const std::size_t S = words.size();
    std::vector<std::vector<double>> counts(S, std::vector<double>(S, 0.0));
    std::size_t tokens = 0;
    for (const auto& text : eras[0].texts) {
        std::istringstream in(text);
        std::string w;
        std::size_t prev = S;
        while (in >> w) {
            ++tokens;
            const auto cur = index.at(w);
            if (prev < S) {
                counts[prev][cur] += 1.0;
            }
            prev = cur;
        }
    }
    CHECK(tokens == 50000);
    // KL(empirical bigram || source bigram), weighting rows by their empirical mass.
    double total = 0.0;
    for (const auto& r : counts) {
        for (double c : r) {
            total += c;
        }
    }
    double kl = 0.0;
    for (std::size_t a = 0; a < S; ++a) {
        double row_total = 0.0;
        for (double c : counts[a]) {
            row_total += c;
        }
        for (std::size_t b = 0; b < S; ++b) {
            if (counts[a][b] > 0.0) {
                const double cond = counts[a][b] / row_total;
                kl += (counts[a][b] / total) * std::log(cond / source.row(a)[b]);
            }
        }
    }
    CHECK(kl >= 0.0);
    CHECK(kl < 0.05);
}

TEST_CASE("synthetic eras: construction, determinism and validation")
{
    SyntheticEraConfig cfg;
    const std::vector<double> drifts{0.0, 0.4, 0.8};
    const auto a = make_synthetic_eras(5, drifts, cfg);
    const auto b = make_synthetic_eras(5, drifts, cfg);
    REQUIRE(a.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a[e].texts == b[e].texts);
        CHECK(a[e].labels == b[e].labels);
        CHECK(a[e].texts.size() == cfg.num_classes * cfg.artifacts_per_class);
    }
    CHECK(make_synthetic_eras(6, drifts, cfg)[0].texts != a[0].texts);

    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        const auto context = era_source(cfg, c, 0.0, 5);
        const auto drifted = era_source(cfg, c, 1.0, 5);
        const auto middle = era_source(cfg, c, 0.4, 5);
        for (std::size_t s = 0; s < cfg.vocabulary_size(); ++s) {
            const auto pc = context.preferred(s);
            const auto pd = drifted.preferred(s);
            CHECK(pc.size() == cfg.preferred_successors);
            CHECK(pd.size() == cfg.preferred_successors);
            for (auto x : pc) {
                CHECK(std::find(pd.begin(), pd.end(), x) == pd.end());
            }
            double z = 0.0;
            for (double p : middle.row(s)) {
                z += p;
            }
            CHECK(std::abs(z - 1.0) < 1e-12);
        }
    }

    const std::vector<double> one{0.0};
    const std::vector<double> out_of_range{0.0, 1.5};
    const std::vector<double> negative{-0.1, 0.5};
    CHECK_THROWS_AS(make_synthetic_eras(1, one, cfg), InputError);
    CHECK_THROWS_AS(make_synthetic_eras(1, out_of_range, cfg), InputError);
    CHECK_THROWS_AS(make_synthetic_eras(1, negative, cfg), InputError);
}
