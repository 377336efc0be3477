#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "dc/cnn.hpp"
#include "dc/error.hpp"
#include "dc/gradcheck.hpp"
#include "dc/lm.hpp"

using namespace dc;

namespace {

LmConfig tiny_lm(std::size_t vocab = 8)
{
    LmConfig c;
    c.vocab_size = vocab;
    c.embed_dim = 4;
    c.context_len = 5;
    c.lstm_units = 4;
    c.dropout_rate = 0.2;
    return c;
}

CnnConfig tiny_cnn(Head head, std::size_t classes = 1)
{
    CnnConfig c;
    c.vocab_size = 8;
    c.embed_dim = 4;
    c.max_len = 7;
    c.kernel_sizes = {2, 3};
    c.filters_per_kernel = 4;
    c.head = head;
    c.num_classes = classes;
    return c;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab)
{
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(static_cast<TokenId>(token::reserved_count + rng.below(vocab - token::reserved_count)));
    }
    return out;
}

double sum_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Scalar LSTM, written out independently of the library.
struct ScalarLstm {
    std::vector<double> emb;    // per token
    double wi[4], wh[4], b[4];  // gates i, f, g, o
    std::vector<double> dw, db; // dense head per output token

    static double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

    double nll(const std::vector<TokenId>& seq) const
    {
        double h = 0.0, c = 0.0, total = 0.0;
        TokenId in = token::bos;
        for (TokenId target : seq) {
            const double x = emb[static_cast<std::size_t>(in)];
            const double i = sig(x * wi[0] + h * wh[0] + b[0]);
            const double f = sig(x * wi[1] + h * wh[1] + b[1]);
            const double g = std::tanh(x * wi[2] + h * wh[2] + b[2]);
            const double o = sig(x * wi[3] + h * wh[3] + b[3]);
            c = f * c + i * g;
            h = o * std::tanh(c);
            double z = 0.0;
            for (std::size_t v = 0; v < dw.size(); ++v) {
                z += std::exp(h * dw[v] + db[v]);
            }
            const auto t = static_cast<std::size_t>(target);
            total += -(h * dw[t] + db[t] - std::log(z));
            in = target;
        }
        return total / static_cast<double>(seq.size());
    }
};

} // namespace

TEST_CASE("zeroed dense head gives the uniform next-token distribution and ln V NLL")
{
    Rng rng(11);
    LanguageModel lm(tiny_lm(), rng);
    lm.parameters().get("dense/weight").tensor.fill(0.0);
    lm.parameters().get("dense/bias").tensor.fill(0.0);
    for (const std::vector<TokenId>& prefix : {std::vector<TokenId>{}, std::vector<TokenId>{4, 5, 6}}) {
        const auto p = lm.next_dist(prefix);
        REQUIRE(p.size() == 8);
        for (double x : p) {
            CHECK(x == doctest::Approx(1.0 / 8).epsilon(1e-14));
        }
    }
    const std::vector<TokenId> seq{4, 7, 5, 5, 6};
    CHECK(std::abs(lm.nll(seq) - std::log(8.0)) < 1e-12);
}

TEST_CASE("lm_nll matches a hand-written scalar LSTM on a two-word vocabulary")
{
    // Vocabulary: the four reserved ids plus two words (4, 5).
    LmConfig cfg;
    cfg.vocab_size = 6;
    cfg.embed_dim = 1;
    cfg.lstm_units = 1;
    cfg.context_len = 20;
    Rng rng(3);
    LanguageModel lm(cfg, rng);

    ScalarLstm ref;
    ref.emb = {0.0, 0.3, -0.2, 0.1, 0.7, -0.9};
    const double wi[4] = {0.5, -0.4, 0.9, 0.2};
    const double wh[4] = {-0.3, 0.6, 0.1, -0.8};
    const double b[4] = {0.1, 1.0, -0.2, 0.05};
    std::copy(wi, wi + 4, ref.wi);
    std::copy(wh, wh + 4, ref.wh);
    std::copy(b, b + 4, ref.b);
    ref.dw = {0.0, 0.0, 0.4, 0.0, 1.3, -1.1};
    ref.db = {-2.0, -2.0, 0.2, -2.0, 0.5, 0.3};

    auto& ps = lm.parameters();
    std::copy(ref.emb.begin(), ref.emb.end(), ps.get("embedding").tensor.values().begin());
    std::copy(wi, wi + 4, ps.get("lstm/weight_ih").tensor.values().begin());
    std::copy(wh, wh + 4, ps.get("lstm/weight_hh").tensor.values().begin());
    std::copy(b, b + 4, ps.get("lstm/bias").tensor.values().begin());
    std::copy(ref.dw.begin(), ref.dw.end(), ps.get("dense/weight").tensor.values().begin());
    std::copy(ref.db.begin(), ref.db.end(), ps.get("dense/bias").tensor.values().begin());

    for (const std::vector<TokenId>& seq : {std::vector<TokenId>{4}, std::vector<TokenId>{4, 5},
                                            std::vector<TokenId>{5, 5, 4, 5, 4, 4}}) {
        CHECK(std::abs(lm.nll(seq) - ref.nll(seq)) < 1e-12);
    }
}

TEST_CASE("batched teacher forcing agrees with step-by-step next_dist, including beyond the context window")
{
    Rng rng(5);
    LanguageModel lm(tiny_lm(), rng);
    Rng data(6);
    for (std::size_t len : {1u, 4u, 5u, 6u, 13u}) {
        const auto seq = random_tokens(data, len, 8);
        double stepwise = 0.0;
        for (std::size_t t = 0; t < seq.size(); ++t) {
            const auto p = lm.next_dist(std::span<const TokenId>(seq.data(), t));
            stepwise -= std::log(p[static_cast<std::size_t>(seq[t])]);
        }
        stepwise /= static_cast<double>(seq.size());
        CHECK(std::abs(lm.nll(seq) - stepwise) < 1e-12);
    }
}

TEST_CASE("next_dist reads only the last context_len tokens")
{
    Rng rng(8);
    LanguageModel lm(tiny_lm(), rng);
    Rng data(9);
    const auto seq = random_tokens(data, 12, 8);
    // BOS + seq has 13 tokens; a suffix of length context_len leaves the same window.
    const auto full = lm.next_dist(seq);
    const auto tail = lm.next_dist(std::span<const TokenId>(seq).last(5));
    for (std::size_t v = 0; v < full.size(); ++v) {
        CHECK(std::abs(full[v] - tail[v]) < 1e-14);
    }
    CHECK(std::abs(sum_of(full) - 1.0) < 1e-12);
}

TEST_CASE("out-of-range token ids are rejected")
{
    Rng rng(1);
    LanguageModel lm(tiny_lm(), rng);
    const std::vector<TokenId> bad{4, 8};
    CHECK_THROWS_AS((void)lm.next_dist(bad), InputError);
    CHECK_THROWS_AS((void)lm.nll(std::vector<TokenId>{}), InputError);
}

TEST_CASE("sampling follows next_dist and is seeded")
{
    Rng rng(21);
    LanguageModel lm(tiny_lm(), rng);
    const std::vector<TokenId> prefix{4, 5};
    const auto p = lm.next_dist(prefix);
    std::vector<double> freq(p.size(), 0.0);
    Rng draw(22);
    const int n = 10000;
    int eos = 0;
    for (int i = 0; i < n; ++i) {
        const auto s = lm.sample(prefix, 1, draw);
        if (s.empty()) {
            ++eos;
            freq[token::eos] += 1.0;
        } else {
            freq[static_cast<std::size_t>(s[0])] += 1.0;
        }
    }
    for (std::size_t v = 0; v < p.size(); ++v) {
        CHECK(std::abs(freq[v] / n - p[v]) < 0.02);
    }

    Rng a(99), b(99);
    CHECK(lm.sample({}, 15, a) == lm.sample({}, 15, b));
}

TEST_CASE("one-hot distribution samples the same token every step")
{
    Rng rng(2);
    LanguageModel lm(tiny_lm(), rng);
    lm.parameters().get("dense/weight").tensor.fill(0.0);
    auto& bias = lm.parameters().get("dense/bias").tensor;
    bias.fill(-1000.0);
    bias[6] = 1000.0;
    Rng draw(3);
    const auto s = lm.sample({}, 9, draw);
    CHECK(s == std::vector<TokenId>(9, 6));
    CHECK(std::abs(lm.nll(s)) < 1e-12);
}

TEST_CASE("language model gradients match finite differences")
{
    LmConfig cfg = tiny_lm(5);
    cfg.embed_dim = 3;
    cfg.lstm_units = 2;
    cfg.context_len = 3;
    Rng rng(4);
    LanguageModel lm(cfg, rng);
    const std::vector<std::vector<TokenId>> batch{{4, 4, 2}, {4, 1, 3, 4, 2}};
    const auto report = finite_diff_check(lm, [&](Tape& t) {
        Rng drop(77);
        return lm.batch_loss(t, batch, Mode::train, &drop);
    }, 1e-4);
    CHECK(report.passed);
    CHECK(report.entries.size() == 6);
}

TEST_CASE("discriminator and classifier heads")
{
    Rng rng(31);
    const std::vector<TokenId> a{4, 5, 6, 7, 4};

    ValueDiscriminator dv(tiny_cnn(Head::sigmoid), rng);
    const double s1 = dv.score(a);
    CHECK(s1 > 0.0);
    CHECK(s1 < 1.0);
    for (int i = 0; i < 5; ++i) {
        CHECK(dv.score(a) == s1);
    }
    dv.parameters().get("dense/weight").tensor.fill(0.0);
    dv.parameters().get("dense/bias").tensor.fill(0.0);
    CHECK(dv.score(a) == 0.5);

    NoveltyClassifier dn(tiny_cnn(Head::softmax, 3), rng);
    Rng data(32);
    for (int i = 0; i < 20; ++i) {
        const auto y = dn.class_dist(random_tokens(data, 1 + data.below(9), 8));
        REQUIRE(y.size() == 3);
        CHECK(std::abs(sum_of(y) - 1.0) < 1e-12);
    }
    dn.parameters().get("dense/weight").tensor.fill(0.0);
    dn.parameters().get("dense/bias").tensor.fill(0.0);
    for (double p : dn.class_dist(a)) {
        CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-14));
    }
}

TEST_CASE("cnn config validation and head enforcement")
{
    auto bad = tiny_cnn(Head::softmax, 1);
    CHECK_THROWS_AS(bad.validate(), InputError);
    auto big_kernel = tiny_cnn(Head::sigmoid);
    big_kernel.kernel_sizes = {2, 9};
    CHECK_THROWS_AS(big_kernel.validate(), InputError);
    Rng rng(1);
    CHECK_THROWS_AS(ValueDiscriminator(tiny_cnn(Head::softmax, 2), rng), InputError);
    CHECK_THROWS_AS(NoveltyClassifier(tiny_cnn(Head::sigmoid), rng), InputError);
}

TEST_CASE("padding and truncation do not change the score of the kept tokens")
{
    Rng rng(41);
    ValueDiscriminator dv(tiny_cnn(Head::sigmoid), rng);
    const std::vector<TokenId> seven{4, 5, 6, 7, 4, 5, 6};
    std::vector<TokenId> longer = seven;
    longer.push_back(7);
    longer.push_back(7);
    CHECK(dv.truncates(longer));
    CHECK(dv.score(longer) == dv.score(seven));
    // A batch containing a longer row must not alter a short row's score.
    const std::vector<TokenId> shorter{4, 5};
    const auto batch = dv.scores({shorter, seven});
    CHECK(batch[0] == dv.score(shorter));
}

TEST_CASE("cnn gradients match finite differences")
{
    Rng rng(51);
    NoveltyClassifier dn(tiny_cnn(Head::softmax, 3), rng);
    const std::vector<std::vector<TokenId>> batch{{4, 5, 6}, {7, 4}, {5, 5, 6, 7, 4, 6, 7}};
    const std::vector<TokenId> labels{0, 2, 1};
    const auto report = finite_diff_check(dn, [&](Tape& t) {
        Rng drop(5);
        return sparse_cross_entropy(dn.logits(t, batch, Mode::train, &drop), labels);
    }, 1e-4);
    CHECK(report.passed);
}

TEST_CASE("checkpoints round-trip bit-exactly")
{
    Rng rng(61);
    LanguageModel lm(tiny_lm(), rng);
    lm.set_vocab_fingerprint(0x1234abcdULL);
    std::stringstream buf;
    write_checkpoint(buf, lm.to_checkpoint());
    const std::string bytes = buf.str();
    const auto back = LanguageModel::from_checkpoint(read_checkpoint(buf));
    CHECK(back.vocab_fingerprint() == 0x1234abcdULL);
    for (std::size_t i = 0; i < lm.parameters().size(); ++i) {
        CHECK(back.parameters()[i].name == lm.parameters()[i].name);
        CHECK(back.parameters()[i].tensor == lm.parameters()[i].tensor);
    }
    std::stringstream again;
    write_checkpoint(again, back.to_checkpoint());
    CHECK(again.str() == bytes);

    ValueDiscriminator dv(tiny_cnn(Head::sigmoid), rng);
    std::stringstream cbuf;
    write_checkpoint(cbuf, dv.to_checkpoint());
    const auto dv2 = ValueDiscriminator::from_checkpoint(read_checkpoint(cbuf));
    const std::vector<TokenId> a{4, 6, 5};
    CHECK(dv2.score(a) == dv.score(a));
    CHECK_THROWS_AS(NoveltyClassifier::from_checkpoint(dv.to_checkpoint()), InputError);
    CHECK_THROWS_AS(LanguageModel::from_checkpoint(dv.to_checkpoint()), InputError);

    std::stringstream junk("NOTACKPT");
    CHECK_THROWS_AS(read_checkpoint(junk), InputError);
}
