#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dc/error.hpp"
#include "dc/gradcheck.hpp"
#include "dc/seqgan.hpp"

using namespace dc;

namespace {

LmConfig small_lm(std::size_t vocab)
{
    LmConfig c;
    c.vocab_size = vocab;
    c.embed_dim = 8;
    c.context_len = 10;
    c.lstm_units = 16;
    c.dropout_rate = 0.2;
    return c;
}

CnnConfig small_cnn(std::size_t vocab, Head head, std::size_t classes = 1)
{
    CnnConfig c;
    c.vocab_size = vocab;
    c.embed_dim = 8;
    c.max_len = 8;
    c.kernel_sizes = {2, 3};
    c.filters_per_kernel = 8;
    c.head = head;
    c.num_classes = classes;
    return c;
}

// Random sequences over tokens [lo, lo + span).
Sequences random_seqs(Rng& rng, std::size_t n, TokenId lo, std::size_t span)
{
    Sequences out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<TokenId> s;
        const auto len = 3 + rng.below(5);
        for (std::size_t t = 0; t < len; ++t) {
            s.push_back(static_cast<TokenId>(lo + static_cast<TokenId>(rng.below(span))));
        }
        out.push_back(s);
    }
    return out;
}

LabeledSequences two_class_data(Rng& rng, std::size_t per_class, bool shuffle_labels)
{
    LabeledSequences d;
    for (std::size_t c = 0; c < 2; ++c) {
        for (auto& s : random_seqs(rng, per_class, static_cast<TokenId>(4 + 4 * c), 4)) {
            d.inputs.push_back(s);
            d.labels.push_back(shuffle_labels ? rng.below(2) : c);
        }
    }
    return d;
}

double sum_log_prob(const LanguageModel& lm, const std::vector<TokenId>& episode)
{
    Tape tape(GradMode::disabled);
    return weighted_log_prob(tape, lm, {episode}, {std::vector<double>(episode.size(), 1.0)}).item();
}

ParameterStore copy_of(const ParameterStore& p) { return p; }

bool same_values(const ParameterStore& a, const ParameterStore& b)
{
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i].tensor == b[i].tensor)) {
            return false;
        }
    }
    return true;
}

// Generator whose bias makes the three words 4, 5, 6 the only live tokens.
LanguageModel three_word_generator(std::uint64_t seed)
{
    LmConfig cfg = small_lm(7);
    Rng rng(seed);
    LanguageModel lm(cfg, rng);
    auto& bias = lm.parameters().get("dense/bias").tensor;
    for (TokenId r = 0; r < token::reserved_count; ++r) {
        bias[static_cast<std::size_t>(r)] = -1e3;
    }
    return lm;
}

} // namespace

TEST_CASE("optimizer step with zero gradients leaves parameters unchanged")
{
    for (auto cfg : {OptimizerConfig::adagrad(0.01), OptimizerConfig::adam(1e-4)}) {
        Rng rng(1);
        LanguageModel lm(small_lm(8), rng);
        const auto before = copy_of(lm.parameters());
        Optimizer opt(cfg, lm.parameters());
        lm.parameters().zero_grad();
        for (int i = 0; i < 3; ++i) {
            opt.step(lm.parameters());
        }
        CHECK(same_values(before, lm.parameters()));
    }
}

TEST_CASE("adagrad accumulators grow and the effective step shrinks under a constant gradient")
{
    ParameterStore ps;
    ps.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
    Optimizer opt(OptimizerConfig::adagrad(0.1), ps);
    double last_step = std::numeric_limits<double>::infinity();
    std::vector<double> last_acc(3, 0.0);
    for (int i = 0; i < 20; ++i) {
        auto g = ps[0].tensor.grad();
        g[0] = 0.3;
        g[1] = -0.3;
        g[2] = 0.3;
        const double before = ps[0].tensor[0];
        opt.step(ps);
        const double step = std::abs(ps[0].tensor[0] - before);
        CHECK(step <= last_step);
        last_step = step;
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(opt.accumulators()[0][k] >= last_acc[k]);
            CHECK(opt.accumulators()[0][k] >= 0.0);
            last_acc[k] = opt.accumulators()[0][k];
        }
    }
    // Hand arithmetic for the first step: 0.1 * 0.3 / (0.3 + 1e-8).
    ParameterStore one;
    one.add("w", Tensor({1}, {1.0}));
    Optimizer first(OptimizerConfig::adagrad(0.1), one);
    one[0].tensor.grad()[0] = 0.3;
    first.step(one);
    CHECK(std::abs(one[0].tensor[0] - (1.0 - 0.1 * 0.3 / (0.3 + 1e-8))) < 1e-15);
}

TEST_CASE("adam's bias-corrected first step has magnitude lr")
{
    ParameterStore ps;
    ps.add("w", Tensor({2}, {1.0, 1.0}));
    Optimizer opt(OptimizerConfig::adam(1e-3), ps);
    ps[0].tensor.grad()[0] = 4.0;
    ps[0].tensor.grad()[1] = -0.01;
    opt.step(ps);
    CHECK(std::abs(ps[0].tensor[0] - (1.0 - 1e-3 * 4.0 / (4.0 + 1e-8))) < 1e-15);
    CHECK(std::abs(ps[0].tensor[1] - (1.0 + 1e-3 * 0.01 / (0.01 + 1e-8))) < 1e-15);
    CHECK_THROWS_AS(OptimizerConfig::adam(-1.0).validate(), InputError);
}

TEST_CASE("train_lm overfits a single repeated sequence")
{
    const std::vector<TokenId> abab{4, 5, 4, 5, 4, 5, 4, 5};
    const Sequences data(8, abab);
    Rng init(3);
    LanguageModel lm(small_lm(6), init);
    TrainOptions opts;
    opts.max_epochs = 200;
    opts.patience = 200;
    opts.batch_size = 8;
    const auto h = train_lm(lm, data, data, OptimizerConfig::adam(0.01), opts, Rng(4));
    CHECK(lm_loss(lm, data, 8) < 0.1);
    CHECK(h.epochs.size() <= 200);
    const std::vector<TokenId> prefix{4, 5, 4};
    CHECK(lm.next_dist(prefix)[5] > 0.9);
}

TEST_CASE("train_lm bookkeeping: patience, determinism, early-stopping weights")
{
    Rng data_rng(5);
    const auto train = random_seqs(data_rng, 40, 4, 6);
    const auto valid = random_seqs(data_rng, 10, 4, 6);
    auto run = [&](std::size_t patience, std::size_t epochs) {
        Rng init(6);
        LanguageModel lm(small_lm(10), init);
        TrainOptions opts;
        opts.max_epochs = epochs;
        opts.patience = patience;
        opts.batch_size = 8;
        auto h = train_lm(lm, train, valid, OptimizerConfig::adam(0.05), opts, Rng(7));
        return std::pair{std::move(h), std::move(lm)};
    };
    CHECK(run(0, 10).first.epochs.size() == 1);

    const auto [h1, lm1] = run(3, 40);
    const auto [h2, lm2] = run(3, 40);
    REQUIRE(h1.epochs.size() == h2.epochs.size());
    for (std::size_t i = 0; i < h1.epochs.size(); ++i) {
        CHECK(h1.epochs[i].train_loss == h2.epochs[i].train_loss);
        CHECK(h1.epochs[i].valid_loss == h2.epochs[i].valid_loss);
    }
    double min_valid = std::numeric_limits<double>::infinity();
    for (const auto& e : h1.epochs) {
        min_valid = std::min(min_valid, e.valid_loss);
    }
    CHECK(h1.best_valid_loss == min_valid);
    CHECK(lm_loss(lm1, valid, 8) == min_valid);

    Rng init(1);
    LanguageModel lm(small_lm(10), init);
    CHECK_THROWS_AS(train_lm(lm, train, {}, OptimizerConfig::adagrad(), TrainOptions{}, Rng(1)), InputError);
}

TEST_CASE("train_classifier separates disjoint vocabularies and finds no signal in shuffled labels")
{
    Rng data_rng(8);
    const auto train = two_class_data(data_rng, 60, false);
    const auto valid = two_class_data(data_rng, 50, false);
    Rng init(9);
    NoveltyClassifier dn(small_cnn(12, Head::softmax, 2), init);
    TrainOptions opts;
    opts.max_epochs = 40;
    opts.patience = 5;
    opts.batch_size = 16;
    const auto h = train_classifier(dn, train, valid, OptimizerConfig::adam(0.01), opts, Rng(10));
    CHECK(evaluate_classifier(dn, valid, 16).accuracy > 0.95);
    CHECK(h.epochs.back().valid_accuracy.has_value());
    // Saturated classifier: correct class probability is high.
    const std::vector<TokenId> zero_class{4, 5, 6, 7, 4};
    CHECK(dn.class_dist(zero_class)[0] > 0.95);

    Rng null_rng(11);
    const auto null_train = two_class_data(null_rng, 100, true);
    const auto null_valid = two_class_data(null_rng, 150, true);
    NoveltyClassifier null_dn(small_cnn(12, Head::softmax, 2), init);
    train_classifier(null_dn, null_train, null_valid, OptimizerConfig::adam(0.01), opts, Rng(12));
    CHECK(std::abs(evaluate_classifier(null_dn, null_valid, 16).accuracy - 0.5) <= 0.1);

    LabeledSequences single{train.inputs, std::vector<std::size_t>(train.inputs.size(), 0)};
    CHECK_THROWS_AS(train_classifier(dn, single, valid, OptimizerConfig::adam(), opts, Rng(1)), InputError);
}

TEST_CASE("value discriminator saturates on separable real and fake data")
{
    Rng rng(13);
    ValueDiscriminator dv(small_cnn(12, Head::sigmoid), rng);
    Optimizer opt(OptimizerConfig::adam(0.01), dv.parameters());
    Rng data(14);
    for (int step = 0; step < 150; ++step) {
        Rng dropout = data.split(std::to_string(step));
        discriminator_step(dv, opt, random_seqs(data, 16, 4, 4), random_seqs(data, 16, 8, 4), dropout);
    }
    for (const auto& s : random_seqs(data, 20, 4, 4)) {
        CHECK(dv.score(s) > 0.9);
    }
    for (const auto& s : random_seqs(data, 20, 8, 4)) {
        CHECK(dv.score(s) < 0.1);
    }
}

TEST_CASE("mc_rollout_q: terminal prefixes and deterministic policies")
{
    Rng rng(15);
    LanguageModel g(small_lm(8), rng);
    ValueDiscriminator d(small_cnn(8, Head::sigmoid), rng);
    Rng q_rng(16);
    const std::vector<TokenId> full{4, 5, 6, 7};
    CHECK(mc_rollout_q(g, d, full, 4, 5, q_rng) == d.score(full));
    const std::vector<TokenId> ended{4, 5, token::eos};
    CHECK(mc_rollout_q(g, d, ended, 6, 5, q_rng) == d.score(std::vector<TokenId>{4, 5}));

    // One-hot policy on token 6: every rollout is the same completion.
    g.parameters().get("dense/weight").tensor.fill(0.0);
    auto& bias = g.parameters().get("dense/bias").tensor;
    bias.fill(-1e3);
    bias[6] = 0.0;
    const std::vector<TokenId> prefix{4};
    const double q = mc_rollout_q(g, d, prefix, 5, 7, q_rng);
    CHECK(std::abs(q - d.score(std::vector<TokenId>{4, 6, 6, 6, 6})) < 1e-15);
    const auto rewards = rollout_rewards(g, d, {{4, 6, 6}}, 5, 3, q_rng);
    CHECK(std::abs(rewards[0][0] - q) < 1e-15);
}

TEST_CASE("mc_rollout_q converges to the exhaustive expectation over completions")
{
    const auto g = three_word_generator(17);
    Rng drng(18);
    ValueDiscriminator d(small_cnn(7, Head::sigmoid), drng);
    auto& dense = d.parameters().get("dense/weight").tensor;
    for (auto& w : dense.values()) {
        w *= 10.0;   // spread the scores out
    }
    const std::vector<TokenId> prefix{4};
    const std::size_t max_len = 3;

    // Enumerate every completion (reserved ids included, with their tiny mass).
    double expected = 0.0;
    const auto p1 = g.next_dist(prefix);
    for (std::size_t a = 0; a < p1.size(); ++a) {
        std::vector<TokenId> s1{4, static_cast<TokenId>(a)};
        if (static_cast<TokenId>(a) == token::eos) {
            expected += p1[a] * d.score(std::vector<TokenId>{4});
            continue;
        }
        const auto p2 = g.next_dist(s1);
        for (std::size_t b = 0; b < p2.size(); ++b) {
            std::vector<TokenId> s2 = s1;
            if (static_cast<TokenId>(b) != token::eos) {
                s2.push_back(static_cast<TokenId>(b));
            }
            expected += p1[a] * p2[b] * d.score(s2);
        }
    }
    Rng rng(19);
    const double q = mc_rollout_q(g, d, prefix, max_len, 10000, rng);
    CHECK(std::abs(q - expected) < 0.02);
}

TEST_CASE("rollout_rewards agrees with independent mc_rollout_q estimates on average")
{
    const auto g = three_word_generator(20);
    Rng drng(21);
    ValueDiscriminator d(small_cnn(7, Head::sigmoid), drng);
    for (auto& w : d.parameters().get("dense/weight").tensor.values()) {
        w *= 10.0;
    }
    const Sequences episodes{{4, 5, 6, 4}, {5, token::eos}};
    Rng a(22), b(23);
    const auto batched = rollout_rewards(g, d, episodes, 4, 4000, a);
    REQUIRE(batched[0].size() == 4);
    REQUIRE(batched[1].size() == 2);
    CHECK(batched[1][1] == d.score(std::vector<TokenId>{5}));
    CHECK(batched[0][3] == d.score(episodes[0]));
    for (std::size_t t = 1; t < 4; ++t) {
        const double single = mc_rollout_q(g, d, std::span<const TokenId>(episodes[0]).first(t), 4, 4000, b);
        CHECK(std::abs(batched[0][t - 1] - single) < 0.02);
    }
    CHECK_THROWS_AS(rollout_rewards(g, d, {{4, token::eos, 5}}, 4, 1, a), InputError);
}

TEST_CASE("reinforce_update: zero advantage, positive advantage, gradient check")
{
    Rng rng(24);
    LanguageModel g(small_lm(8), rng);
    Baseline base;
    const std::vector<TokenId> episode{4, 6, 5};
    const auto before = copy_of(g.parameters());
    const std::vector<double> at_baseline(3, base.value());
    reinforce_update(g, episode, at_baseline, base, 1e-3);
    CHECK(same_values(before, g.parameters()));
    CHECK(base.observations() == 1);

    const std::vector<double> bad(2, 0.7);
    CHECK_THROWS_AS(reinforce_update(g, episode, bad, base, 1e-3), InputError);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng init(seed);
        LanguageModel fresh(small_lm(8), init);
        Baseline b;
        const std::vector<TokenId> one{static_cast<TokenId>(4 + seed % 4)};
        const double lp = std::log(fresh.next_dist({})[static_cast<std::size_t>(one[0])]);
        const std::vector<double> q{0.9};
        reinforce_update(fresh, one, q, b, 1e-3);
        CHECK(std::log(fresh.next_dist({})[static_cast<std::size_t>(one[0])]) > lp);

        Baseline b2;
        const std::vector<TokenId> longer{4, 7, 5, 5, 6};
        const double before_sum = sum_log_prob(fresh, longer);
        reinforce_update(fresh, longer, std::vector<double>(5, 0.8), b2, 1e-3);
        CHECK(sum_log_prob(fresh, longer) > before_sum);
    }

    LmConfig tiny = small_lm(6);
    tiny.embed_dim = 3;
    tiny.lstm_units = 2;
    Rng trng(25);
    LanguageModel small(tiny, trng);
    const Sequences eps{{4, 5, 2}, {5, 5, 4, 4}};
    const auto report = finite_diff_check(small, [&](Tape& t) {
        return weighted_log_prob(t, small, eps, {{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}});
    }, 1e-4);
    CHECK(report.passed);
}

TEST_CASE("baseline stays in [0, 1] for rewards in [0, 1]")
{
    Baseline b;
    Rng rng(26);
    for (int i = 0; i < 1000; ++i) {
        b.observe(rng.uniform());
        CHECK(b.value() >= 0.0);
        CHECK(b.value() <= 1.0);
    }
    Baseline c(0.9, 0.5);
    c.observe(1.0);
    CHECK(std::abs(c.value() - 0.55) < 1e-15);
}

TEST_CASE("train_seqgan validates its schedule and runs a tiny schedule with one rollout")
{
    SeqGanSchedule s;
    s.g_steps = 0;
    CHECK_THROWS_AS(s.validate(), InputError);

    Rng rng(27);
    LanguageModel g(small_lm(8), rng);
    ValueDiscriminator d(small_cnn(8, Head::sigmoid), rng);
    Rng data(28);
    const auto real = random_seqs(data, 24, 4, 2);
    const auto valid = random_seqs(data, 8, 4, 2);
    SeqGanOptions opts;
    opts.max_len = 8;
    opts.eval_samples = 16;
    CHECK_THROWS_AS(train_seqgan(g, d, real, valid, s, opts, Rng(1)), InputError);

    SeqGanSchedule tiny{2, 1, 2, 1, 8, 3, 1};
    const auto h = train_seqgan(g, d, real, valid, tiny, opts, Rng(29));
    CHECK(h.epochs.size() == 4);
    CHECK(h.g_pretrain.epochs.size() == 2);
    CHECK(h.d_pretrain_loss.size() == 1);
    for (const auto& e : h.epochs) {
        CHECK(e.d_accuracy >= 0.0);
        CHECK(e.d_accuracy <= 1.0);
        CHECK(e.g_reward > 0.0);
        CHECK(e.g_reward < 1.0);
    }
}
