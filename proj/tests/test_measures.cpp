#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "dc/error.hpp"
#include "dc/measures.hpp"

using namespace dc;

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t n)
{
    std::vector<double> y(n);
    double z = 0.0;
    for (auto& v : y) {
        v = -std::log(1.0 - rng.uniform());
        z += v;
    }
    for (auto& v : y) {
        v /= z;
    }
    return y;
}

// Two-token next-token model with parameters a and c:
// P(token 1 | previous) = sigmoid(a * [previous == 1] + c).
class TwoParamModel : public NextTokenModel {
public:
    TwoParamModel(double a, double c)
    {
        params_.add("a", Tensor({1, 1}, {a}));
        params_.add("c", Tensor({1}, {c}));
    }
    const ParameterStore& parameters() const override { return params_; }
    Var token_nll(Tape& tape, std::span<const TokenId> tokens) const override
    {
        const std::size_t n = tokens.size();
        Tensor x({n, 1});
        for (std::size_t k = 1; k < n; ++k) {
            x[k] = tokens[k - 1] == 1 ? 1.0 : 0.0;
        }
        Var z1 = add_row(matmul(tape.constant(x), tape.parameter(params_[0])), tape.parameter(params_[1]));
        const Var cols[] = {tape.constant(Tensor({n, 1})), z1};
        return nll_rows(concat_cols(cols), tokens);
    }
    ParameterStore params_;
};

// A model whose single weight does not influence its loss.
class DetachedModel : public NextTokenModel {
public:
    DetachedModel() { params_.add("w", Tensor({2}, {0.5, -1.0})); }
    const ParameterStore& parameters() const override { return params_; }
    Var token_nll(Tape& tape, std::span<const TokenId> tokens) const override
    {
        Tensor z({tokens.size(), 3});
        return nll_rows(tape.constant(z), tokens);
    }
    ParameterStore params_;
};

LmConfig small_lm()
{
    LmConfig c;
    c.vocab_size = 9;
    c.embed_dim = 4;
    c.context_len = 6;
    c.lstm_units = 5;
    return c;
}

CnnConfig small_cnn(Head head, std::size_t classes = 1)
{
    CnnConfig c;
    c.vocab_size = 9;
    c.embed_dim = 4;
    c.max_len = 6;
    c.kernel_sizes = {2, 3};
    c.filters_per_kernel = 3;
    c.head = head;
    c.num_classes = classes;
    return c;
}

struct Trio {
    ValueDiscriminator dv;
    NoveltyClassifier dn;
    LanguageModel gs;

    explicit Trio(std::uint64_t seed, std::uint64_t fp = 77)
        : dv(make_dv(seed)), dn(make_dn(seed)), gs(make_gs(seed))
    {
        dv.set_vocab_fingerprint(fp);
        dn.set_vocab_fingerprint(fp);
        gs.set_vocab_fingerprint(fp);
    }
    Scorers scorers() const { return {dv, dn, gs}; }

    static ValueDiscriminator make_dv(std::uint64_t s)
    {
        Rng r(s, "dv");
        return ValueDiscriminator(small_cnn(Head::sigmoid), r);
    }
    static NoveltyClassifier make_dn(std::uint64_t s)
    {
        Rng r(s, "dn");
        return NoveltyClassifier(small_cnn(Head::softmax, 3), r);
    }
    static LanguageModel make_gs(std::uint64_t s)
    {
        Rng r(s, "gs");
        return LanguageModel(small_lm(), r);
    }
};

Artifact artifact(std::string id, std::vector<TokenId> tokens, std::uint64_t fp = 77)
{
    Artifact a;
    a.id = std::move(id);
    a.tokens = std::move(tokens);
    a.vocab_fingerprint = fp;
    return a;
}

std::string param_bytes(const ParameterStore& ps)
{
    std::string out;
    for (const auto& p : ps) {
        const auto v = p.tensor.values();
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    }
    return out;
}

} // namespace

TEST_CASE("novelty examples")
{
    for (std::size_t n = 2; n <= 10; ++n) {
        CHECK(novelty(std::vector<double>(n, 1.0 / static_cast<double>(n))) == 1.0);
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> y(n, 0.0);
            y[j] = 1.0;
            CHECK(novelty(y) == 0.0);
        }
    }
    // Distance sqrt(6)/6 against a bound of sqrt(6)/3.
    CHECK(std::abs(novelty(std::vector<double>{0.5, 0.5, 0.0}) - 0.5) < 1e-12);
    CHECK(std::abs(novelty_upper_bound(3) - std::sqrt(6.0) / 3.0) < 1e-15);
    CHECK_THROWS_AS(novelty(std::vector<double>{1.0}), InputError);
    CHECK_THROWS_AS(novelty_upper_bound(1), InputError);
}

TEST_CASE("novelty bounds and permutation invariance on random distributions")
{
    Rng rng(1);
    for (std::size_t n = 2; n <= 10; ++n) {
        const double ub = novelty_upper_bound(n);
        for (int trial = 0; trial < 2000; ++trial) {
            auto y = random_simplex(rng, n);
            const double d = novelty_distance(y);
            CHECK(d >= 0.0);
            CHECK(d <= ub + 1e-12);
            const double nv = novelty(y);
            CHECK(nv >= 0.0);
            CHECK(nv <= 1.0);
            rng.shuffle(y);
            CHECK(std::abs(novelty(y) - nv) < 1e-12);
        }
    }
}

TEST_CASE("surprise matches hand-derived gradients of a two-parameter model")
{
    const double a = 0.7, c = -0.4, eta = 1.0;
    const TwoParamModel model(a, c);
    const std::vector<TokenId> tokens{1, 1, 0, 1, 0};
    // x_k = [previous token is 1], BOS before the first token.
    const double x[] = {0, 1, 1, 0, 1};
    double ga = 0.0, gc = 0.0;
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        const double p = 1.0 / (1.0 + std::exp(-(a * x[k] + c)));
        const double y = tokens[k] == 1 ? 1.0 : 0.0;
        ga += (p - y) * x[k];
        gc += (p - y);
    }
    ga /= 5.0;
    gc /= 5.0;
    const double expected = (std::abs(-eta * ga) / std::abs(a) + std::abs(-eta * gc) / std::abs(c)) / 2.0;
    SurpriseConfig cfg;
    const double s1 = surprise(tokens, model, cfg);
    CHECK(std::abs(s1 - expected) < 1e-12);

    cfg.eta = 2.0;
    CHECK(surprise(tokens, model, cfg) == 2.0 * s1);

    CHECK_THROWS_AS(surprise(std::vector<TokenId>{}, model, SurpriseConfig{}), InputError);
    CHECK_THROWS_AS(surprise(tokens, model, SurpriseConfig{0.0}), InputError);
}

TEST_CASE("surprise clamps near-zero weights")
{
    const TwoParamModel model(0.0, 0.3);
    const std::vector<TokenId> tokens{1, 1};
    SurpriseConfig cfg;
    cfg.zero_weight_epsilon = 1e-3;
    const double p0 = 1.0 / (1.0 + std::exp(-0.3));
    const double ga = ((p0 - 1.0) * 0.0 + (p0 - 1.0) * 1.0) / 2.0;
    const double gc = (p0 - 1.0);
    const double expected = (std::abs(ga) / 1e-3 + std::abs(gc) / 0.3) / 2.0;
    CHECK(std::abs(surprise(tokens, model, cfg) - expected) < 1e-12);
}

TEST_CASE("surprise is zero when the loss does not depend on the weights")
{
    const DetachedModel model;
    const std::vector<TokenId> tokens{0, 2, 1};
    CHECK(surprise(tokens, model, SurpriseConfig{}) == 0.0);
}

TEST_CASE("surprise leaves the language model untouched and respects the weight policy")
{
    Rng rng(3);
    LanguageModel lm(small_lm(), rng);
    const std::vector<TokenId> tokens{4, 5, 8, 6, 4, 4, 7};
    const auto before = param_bytes(lm.parameters());
    SurpriseConfig all;
    const double s_all = surprise(tokens, lm, all);
    CHECK(param_bytes(lm.parameters()) == before);
    CHECK(s_all > 0.0);

    SurpriseConfig no_emb;
    no_emb.weight_policy = WeightPolicy::exclude_embeddings;
    const double s_no_emb = surprise(tokens, lm, no_emb);
    CHECK(s_no_emb != s_all);
    CHECK(surprise(tokens, lm, all) == s_all);

    SurpriseConfig eta2;
    eta2.eta = 2.0;
    CHECK(surprise(tokens, lm, eta2) == 2.0 * s_all);
}

TEST_CASE("value is the discriminator score and rejects foreign vocabularies")
{
    Trio m(5);
    const auto a = artifact("a", {4, 5, 6});
    const double v = value(a, m.dv);
    CHECK(v == m.dv.score(a.tokens));
    for (int i = 0; i < 10; ++i) {
        CHECK(value(a, m.dv) == v);
    }
    m.dv.parameters().get("dense/weight").tensor.fill(0.0);
    m.dv.parameters().get("dense/bias").tensor.fill(0.0);
    CHECK(value(a, m.dv) == 0.5);
    CHECK_THROWS_AS(value(artifact("b", {4}, 78), m.dv), IncompatibleError);
}

TEST_CASE("combined score")
{
    CHECK(combine(0.3, 0.9, 4.0, CreativityWeights{1, 0, 0}) == 0.3);
    CHECK(std::abs(combine(0.6, 0.6, 0.6, CreativityWeights{}) - 0.6) < 1e-15);
    CHECK_THROWS_AS((CreativityWeights{0.5, 0.5, 0.5}.validate()), InputError);
    CHECK_THROWS_AS((CreativityWeights{1.2, -0.2, 0.0}.validate()), InputError);

    Rng rng(6);
    for (int trial = 0; trial < 1000; ++trial) {
        double w1 = rng.uniform(0.01, 1), w2 = rng.uniform(0.01, 1), w3 = rng.uniform(0.01, 1);
        const double z = w1 + w2 + w3;
        const CreativityWeights w{w1 / z, w2 / z, w3 / z};
        const double v = rng.uniform(), n = rng.uniform(), s = rng.uniform(0, 5);
        const double dv = rng.uniform(0.001, 0.5), dn = rng.uniform(0.0, 0.5), ds = rng.uniform(0.0, 0.5);
        CHECK(combine(v + dv, n + dn, s + ds, w) > combine(v, n, s, w));
        CHECK(combine(v, n + dv, s, w) > combine(v, n, s, w));
        CHECK(combine(v, n, s + dv, w) > combine(v, n, s, w));
    }
}

TEST_CASE("deep_creativity combines the three components")
{
    const Trio m(7);
    const auto a = artifact("a", {4, 5, 6, 7});
    const CreativityWeights w{0.2, 0.3, 0.5};
    const auto row = deep_creativity(a, m.scorers(), w, SurpriseConfig{});
    CHECK(row.value == value(a, m.dv));
    CHECK(row.novelty == novelty(a, m.dn));
    CHECK(row.surprise == surprise(a, m.gs, SurpriseConfig{}));
    CHECK(std::abs(row.dc - (0.2 * row.value + 0.3 * row.novelty + 0.5 * row.surprise)) < 1e-12);
    CHECK(row.posterior.size() == 3);

    const auto only_v = deep_creativity(a, m.scorers(), CreativityWeights{1, 0, 0}, SurpriseConfig{});
    CHECK(only_v.dc == only_v.value);

    const auto long_a = artifact("long", {4, 5, 6, 7, 8, 4, 5, 6});
    const auto truncated = deep_creativity(long_a, m.scorers(), w, SurpriseConfig{});
    CHECK(truncated.warnings.size() == 2);
}

TEST_CASE("mismatched scorers are rejected with the pair named")
{
    Trio m(8);
    m.gs.set_vocab_fingerprint(99);
    try {
        check_fingerprints(m.scorers());
        FAIL("expected a mismatch");
    } catch (const IncompatibleError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("surprise language model") != std::string::npos);
    }
    const auto a = artifact("a", {4});
    CHECK_THROWS_AS(deep_creativity(a, m.scorers(), CreativityWeights{}, SurpriseConfig{}), IncompatibleError);
}

TEST_CASE("batch report group means")
{
    const Trio m(9);
    const auto a = artifact("a", {4, 5, 6});
    const auto b = artifact("b", {7, 8});
    const std::vector<ArtifactGroup> groups{{"solo", {a}}, {"pair", {a, b}}, {"dup", {a, b, a, b}}, {"empty", {}}};
    const auto report = batch_report(groups, m.scorers(), CreativityWeights{}, SurpriseConfig{}, false);
    REQUIRE(report.groups.size() == 3);
    CHECK(report.warnings.size() == 1);
    const auto& solo = report.groups[0];
    CHECK(solo.group == "solo");
    CHECK(solo.value == report.rows[0].value);
    CHECK(solo.surprise == report.rows[0].surprise);
    CHECK(std::abs(report.groups[1].novelty - report.groups[2].novelty) < 1e-15);
    CHECK(std::abs(report.groups[1].dc - report.groups[2].dc) < 1e-15);
    CHECK_FALSE(report.surprise_normalized);

    const auto normalized = batch_report(groups, m.scorers(), CreativityWeights{}, SurpriseConfig{}, true);
    CHECK(normalized.surprise_normalized);
    double lo = 1.0, hi = 0.0;
    for (const auto& r : normalized.rows) {
        lo = std::min(lo, r.surprise);
        hi = std::max(hi, r.surprise);
        CHECK(std::abs(r.dc - combine(r.value, r.novelty, r.surprise, CreativityWeights{})) < 1e-15);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);

    const std::vector<ArtifactGroup> none{{"empty", {}}};
    CHECK_THROWS_AS(batch_report(none, m.scorers(), CreativityWeights{}, SurpriseConfig{}, false), InputError);
}

TEST_CASE("scoring is deterministic and the CSV round-trips exactly")
{
    const Trio m1(10), m2(10);
    const std::vector<ArtifactGroup> groups{{"context", {artifact("x,1", {4, 5}), artifact("y\"q", {6, 7, 8})}},
                                            {"later", {artifact("z", {8, 8, 8, 4})}}};
    const auto r1 = batch_report(groups, m1.scorers(), CreativityWeights{}, SurpriseConfig{}, false, {"a", "b", "c"});
    const auto r2 = batch_report(groups, m2.scorers(), CreativityWeights{}, SurpriseConfig{}, false, {"a", "b", "c"});
    std::ostringstream c1, c2;
    write_report_csv(c1, r1);
    write_report_csv(c2, r2);
    CHECK(c1.str() == c2.str());
    CHECK(c1.str().rfind("id,era_tag,V,N,S,DC,p_a,p_b,p_c\n", 0) == 0);

    std::istringstream in(c1.str());
    const auto rows = read_report_csv(in);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].id == r1.rows[i].id);
        CHECK(rows[i].era_tag == r1.rows[i].era_tag);
        CHECK(rows[i].value == r1.rows[i].value);
        CHECK(rows[i].novelty == r1.rows[i].novelty);
        CHECK(rows[i].surprise == r1.rows[i].surprise);
        CHECK(rows[i].dc == r1.rows[i].dc);
        CHECK(rows[i].posterior == r1.rows[i].posterior);
    }
    std::istringstream bad("id,era_tag,V,N,S,DC\nx,c,0.1,zz,0,0\n");
    CHECK_THROWS_AS(read_report_csv(bad), InputError);
}
