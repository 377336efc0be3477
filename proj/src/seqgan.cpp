#include "dc/seqgan.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "dc/error.hpp"

namespace dc {

void SeqGanSchedule::validate() const
{
    const std::pair<const char*, std::size_t> fields[] = {
        {"g_pretrain_epochs", g_pretrain_epochs}, {"d_pretrain_epochs", d_pretrain_epochs},
        {"g_steps", g_steps},                     {"d_steps", d_steps},
        {"batch_size", batch_size},               {"adversarial_epochs", adversarial_epochs},
        {"rollout_count", rollout_count}};
    for (const auto& [name, v] : fields) {
        if (v < 1) {
            throw InputError(fmt::format("seqgan schedule: {} must be a positive integer", name));
        }
    }
}

void to_json(nlohmann::json& j, const SeqGanSchedule& s)
{
    j = nlohmann::json{{"g_pretrain_epochs", s.g_pretrain_epochs},
                       {"d_pretrain_epochs", s.d_pretrain_epochs},
                       {"g_steps", s.g_steps},
                       {"d_steps", s.d_steps},
                       {"batch_size", s.batch_size},
                       {"adversarial_epochs", s.adversarial_epochs},
                       {"rollout_count", s.rollout_count}};
}

void from_json(const nlohmann::json& j, SeqGanSchedule& s)
{
    s.g_pretrain_epochs = j.value("g_pretrain_epochs", s.g_pretrain_epochs);
    s.d_pretrain_epochs = j.value("d_pretrain_epochs", s.d_pretrain_epochs);
    s.g_steps = j.value("g_steps", s.g_steps);
    s.d_steps = j.value("d_steps", s.d_steps);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.adversarial_epochs = j.value("adversarial_epochs", s.adversarial_epochs);
    s.rollout_count = j.value("rollout_count", s.rollout_count);
}

Baseline::Baseline(double decay, double initial) : decay_(decay), value_(initial)
{
    if (!(decay >= 0.0 && decay < 1.0)) {
        throw InputError("baseline: decay must lie in [0, 1)");
    }
}

void Baseline::observe(double mean_reward)
{
    value_ = decay_ * value_ + (1.0 - decay_) * mean_reward;
    ++observations_;
}

bool is_complete(std::span<const TokenId> prefix, std::size_t max_len)
{
    return prefix.size() >= max_len || (!prefix.empty() && prefix.back() == token::eos);
}

std::vector<TokenId> strip_eos(std::span<const TokenId> episode)
{
    std::vector<TokenId> out(episode.begin(), episode.end());
    if (!out.empty() && out.back() == token::eos) {
        out.pop_back();
    }
    return out;
}

namespace {

// Continues every row whose flag is set until EOS or max_len tokens; rows
// start from the given histories, which the stepper has already consumed.
void complete_rows(LmStepper stepper, Sequences& rows, std::vector<bool> active, std::size_t max_len, Rng& rng)
{
    const std::size_t B = rows.size();
    auto pending = [&] {
        for (std::size_t r = 0; r < B; ++r) {
            if (active[r] && rows[r].size() < max_len) {
                return true;
            }
        }
        return false;
    };
    std::vector<TokenId> next(B, token::pad);
    while (pending()) {
        const Tensor& p = stepper.probs();
        const std::size_t V = p.dim(1);
        for (std::size_t r = 0; r < B; ++r) {
            next[r] = token::pad;
            if (!active[r] || rows[r].size() >= max_len) {
                active[r] = false;
                continue;
            }
            const auto row = p.values().subspan(r * V, V);
            const auto tok = static_cast<TokenId>(rng.categorical(row));
            rows[r].push_back(tok);
            next[r] = tok;
            if (tok == token::eos) {
                active[r] = false;
            }
        }
        if (pending()) {
            stepper.push(next);
        }
    }
}

void check_episode(std::span<const TokenId> e, std::size_t max_len)
{
    if (e.empty() || e.size() > max_len) {
        throw InputError(fmt::format("episode of length {} outside [1, {}]", e.size(), max_len));
    }
    for (std::size_t t = 0; t + 1 < e.size(); ++t) {
        if (e[t] == token::eos) {
            throw InputError("episode continues after EOS");
        }
    }
}

} // namespace

double mc_rollout_q(const LanguageModel& generator, const ValueDiscriminator& discriminator,
                    std::span<const TokenId> prefix, std::size_t max_len, std::size_t rollout_count, Rng& rng)
{
    if (rollout_count < 1) {
        throw InputError("mc_rollout_q: rollout_count must be at least 1");
    }
    if (is_complete(prefix, max_len)) {
        return discriminator.score(strip_eos(prefix));
    }
    LmStepper stepper(generator, rollout_count);
    for (TokenId t : prefix) {
        const std::vector<TokenId> col(rollout_count, t);
        stepper.push(col);
    }
    Sequences rows(rollout_count, std::vector<TokenId>(prefix.begin(), prefix.end()));
    complete_rows(stepper, rows, std::vector<bool>(rollout_count, true), max_len, rng);
    Sequences finished;
    for (const auto& r : rows) {
        finished.push_back(strip_eos(r));
    }
    const auto s = discriminator.scores(finished);
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

Sequences sample_episodes(const LanguageModel& generator, std::size_t count, std::size_t max_len, Rng& rng)
{
    if (count < 1 || max_len < 1) {
        throw InputError("sample_episodes: count and max_len must be positive");
    }
    Sequences rows(count);
    complete_rows(LmStepper(generator, count), rows, std::vector<bool>(count, true), max_len, rng);
    return rows;
}

std::vector<std::vector<double>> rollout_rewards(const LanguageModel& generator, const ValueDiscriminator& discriminator,
                                                 const Sequences& episodes, std::size_t max_len,
                                                 std::size_t rollout_count, Rng& rng)
{
    if (rollout_count < 1) {
        throw InputError("rollout_rewards: rollout_count must be at least 1");
    }
    const std::size_t B = episodes.size(), N = rollout_count;
    std::size_t longest = 0;
    for (const auto& e : episodes) {
        check_episode(e, max_len);
        longest = std::max(longest, e.size());
    }
    std::vector<std::vector<double>> q(B);
    for (std::size_t b = 0; b < B; ++b) {
        q[b].assign(episodes[b].size(), 0.0);
    }

    // Terminal actions: the discriminator scores the episode itself.
    Sequences terminal;
    for (const auto& e : episodes) {
        terminal.push_back(strip_eos(e));
    }
    const auto terminal_scores = discriminator.scores(terminal);
    for (std::size_t b = 0; b < B; ++b) {
        q[b].back() = terminal_scores[b];
    }

    // Row b*N + n follows episode b; after t pushes the stepper is forked
    // and the fork completes every episode still running at t.
    LmStepper stepper(generator, B * N);
    std::vector<TokenId> column(B * N);
    for (std::size_t t = 1; t < longest; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            const TokenId tok = t <= episodes[b].size() ? episodes[b][t - 1] : token::pad;
            std::fill_n(column.begin() + static_cast<std::ptrdiff_t>(b * N), N, tok);
        }
        stepper.push(column);
        Sequences rows(B * N);
        std::vector<bool> active(B * N, false);
        bool any = false;
        for (std::size_t b = 0; b < B; ++b) {
            if (t < episodes[b].size()) {
                for (std::size_t n = 0; n < N; ++n) {
                    rows[b * N + n].assign(episodes[b].begin(), episodes[b].begin() + static_cast<std::ptrdiff_t>(t));
                    active[b * N + n] = true;
                }
                any = true;
            }
        }
        if (!any) {
            break;
        }
        complete_rows(stepper, rows, active, max_len, rng);
        Sequences finished;
        std::vector<std::size_t> owner;
        for (std::size_t r = 0; r < B * N; ++r) {
            if (active[r]) {
                finished.push_back(strip_eos(rows[r]));
                owner.push_back(r / N);
            }
        }
        const auto s = discriminator.scores(finished);
        for (std::size_t i = 0; i < s.size(); ++i) {
            q[owner[i]][t - 1] += s[i] / static_cast<double>(N);
        }
    }
    return q;
}

Var weighted_log_prob(Tape& tape, const LanguageModel& generator, const Sequences& episodes,
                      const std::vector<std::vector<double>>& weights)
{
    if (weights.size() != episodes.size()) {
        throw InputError("weighted_log_prob: one weight row per episode required");
    }
    const std::size_t B = episodes.size();
    std::size_t T = 0;
    for (std::size_t b = 0; b < B; ++b) {
        if (weights[b].size() != episodes[b].size()) {
            throw InputError(fmt::format("reinforce: episode {} has {} actions but {} Q values", b, episodes[b].size(),
                                         weights[b].size()));
        }
        T = std::max(T, episodes[b].size());
    }
    Var logits = generator.logits(tape, episodes, Mode::eval, nullptr);
    std::vector<TokenId> flat(T * B, token::pad);
    Tensor w({T * B});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            if (t < episodes[b].size()) {
                flat[t * B + b] = episodes[b][t];
                w[t * B + b] = -weights[b][t];   // nll = -ln G
            }
        }
    }
    return sum(mul(nll_rows(logits, flat), tape.constant(std::move(w))));
}

void reinforce_update(LanguageModel& generator, std::span<const TokenId> episode, std::span<const double> q_values,
                      Baseline& baseline, double lr)
{
    if (episode.size() != q_values.size()) {
        throw InputError(fmt::format("reinforce_update: {} actions but {} Q values", episode.size(), q_values.size()));
    }
    if (episode.empty()) {
        throw InputError("reinforce_update: empty episode");
    }
    std::vector<double> advantage(q_values.begin(), q_values.end());
    for (auto& a : advantage) {
        a -= baseline.value();
    }
    Tape tape;
    Var objective = weighted_log_prob(tape, generator, {std::vector<TokenId>(episode.begin(), episode.end())}, {advantage});
    tape.backward(objective, generator.parameters());
    for (auto& p : generator.parameters()) {
        if (!p.trainable) {
            continue;
        }
        auto w = p.tensor.values();
        const auto g = p.tensor.grad();
        for (std::size_t k = 0; k < w.size(); ++k) {
            w[k] += lr * g[k];
        }
    }
    baseline.observe(std::accumulate(q_values.begin(), q_values.end(), 0.0) / static_cast<double>(q_values.size()));
}

double discriminator_step(ValueDiscriminator& d, Optimizer& opt, const Sequences& real, const Sequences& fake, Rng& rng)
{
    Sequences batch(real);
    batch.insert(batch.end(), fake.begin(), fake.end());
    std::vector<double> labels(real.size(), 1.0);
    labels.resize(batch.size(), 0.0);
    Tape tape;
    Var loss = bce_with_logits(d.logits(tape, batch, Mode::train, &rng), labels);
    tape.backward(loss, d.parameters());
    opt.step(d.parameters());
    return loss.item();
}

double discriminator_accuracy(const ValueDiscriminator& d, const LanguageModel& g, const Sequences& real,
                              std::size_t max_len, Rng& rng)
{
    if (real.empty()) {
        throw InputError("discriminator_accuracy: no real sequences");
    }
    Sequences fake;
    for (const auto& e : sample_episodes(g, real.size(), max_len, rng)) {
        fake.push_back(strip_eos(e));
    }
    std::size_t correct = 0;
    for (double s : d.scores(real)) {
        correct += s > 0.5 ? 1 : 0;
    }
    for (double s : d.scores(fake)) {
        correct += s < 0.5 ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(2 * real.size());
}

namespace {

double mean_reward(const ValueDiscriminator& d, const LanguageModel& g, std::size_t count, std::size_t max_len, Rng rng)
{
    Sequences fake;
    for (const auto& e : sample_episodes(g, count, max_len, rng)) {
        fake.push_back(strip_eos(e));
    }
    const auto s = d.scores(fake);
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

Sequences pick(const Sequences& pool, std::size_t count, Rng& rng)
{
    Sequences out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(pool[rng.below(pool.size())]);
    }
    return out;
}

Sequences generated(const LanguageModel& g, std::size_t count, std::size_t max_len, Rng& rng)
{
    Sequences out;
    for (const auto& e : sample_episodes(g, count, max_len, rng)) {
        out.push_back(strip_eos(e));
    }
    return out;
}

} // namespace

SeqGanHistory train_seqgan(LanguageModel& generator, ValueDiscriminator& discriminator, const Sequences& real_train,
                           const Sequences& real_valid, const SeqGanSchedule& schedule, const SeqGanOptions& options,
                           Rng rng)
{
    schedule.validate();
    options.g_optimizer.validate();
    options.d_optimizer.validate();
    if (options.max_len < 1) {
        throw InputError("train_seqgan: max_len must be positive");
    }
    if (real_train.empty() || real_valid.empty()) {
        throw InputError("train_seqgan: real train and validation sequences are required");
    }
    if (generator.config().vocab_size != discriminator.config().vocab_size) {
        throw IncompatibleError("train_seqgan: generator and discriminator vocabularies differ");
    }
    const std::size_t T = options.max_len, B = schedule.batch_size;
    SeqGanHistory history;

    // Maximum-likelihood pretraining of the generator.
    TrainOptions g_pre;
    g_pre.max_epochs = schedule.g_pretrain_epochs;
    g_pre.patience = schedule.g_pretrain_epochs;
    g_pre.batch_size = B;
    history.g_pretrain = train_lm(generator, real_train, real_valid, options.g_optimizer, g_pre, rng.split("g-pretrain"));

    // Discriminator pretraining: each epoch passes once over the real
    // sequences against as many fresh generated ones.
    Optimizer d_opt(options.d_optimizer, discriminator.parameters());
    for (std::size_t epoch = 1; epoch <= schedule.d_pretrain_epochs; ++epoch) {
        Rng er = rng.split(fmt::format("d-pretrain{}", epoch));
        Rng dropout = er.split("dropout");
        const Sequences fake_all = generated(generator, real_train.size(), T, er);
        std::vector<std::size_t> order(real_train.size());
        std::iota(order.begin(), order.end(), 0);
        er.shuffle(order);
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += B) {
            Sequences real, fake;
            for (std::size_t i = start; i < std::min(order.size(), start + B); ++i) {
                real.push_back(real_train[order[i]]);
                fake.push_back(fake_all[i]);
            }
            total += discriminator_step(discriminator, d_opt, real, fake, dropout);
            ++steps;
        }
        history.d_pretrain_loss.push_back(total / static_cast<double>(steps));
    }

    const LanguageModel pretrained = generator;
    auto record = [&](SeqGanEpoch e, Baseline& baseline) {
        Rng er = rng.split(fmt::format("eval{}", e.epoch));
        Rng acc_rng = er.split("accuracy");
        e.d_accuracy = discriminator_accuracy(discriminator, generator, real_valid, T, acc_rng);
        e.g_reward = mean_reward(discriminator, generator, options.eval_samples, T, er.split("reward"));
        e.baseline = baseline.value();
        history.epochs.push_back(e);
        if (options.on_epoch) {
            options.on_epoch(e);
        }
    };

    Baseline baseline;
    record(SeqGanEpoch{0, history.d_pretrain_loss.empty() ? 0.0 : history.d_pretrain_loss.back(), 0, 0, 0}, baseline);

    Optimizer g_opt(options.g_optimizer, generator.parameters());
    for (std::size_t epoch = 1; epoch <= schedule.adversarial_epochs; ++epoch) {
        Rng er = rng.split(fmt::format("adversarial{}", epoch));
        for (std::size_t step = 0; step < schedule.g_steps; ++step) {
            Rng sr = er.split(fmt::format("g{}", step));
            const Sequences episodes = sample_episodes(generator, B, T, sr);
            const auto q = rollout_rewards(generator, discriminator, episodes, T, schedule.rollout_count, sr);
            std::vector<std::vector<double>> advantage(q);
            double q_sum = 0.0;
            std::size_t q_count = 0;
            for (auto& row : advantage) {
                for (auto& a : row) {
                    q_sum += a;
                    ++q_count;
                    a = (a - baseline.value()) / static_cast<double>(B);
                }
            }
            Tape tape;
            // Minimizing the negated objective is gradient ascent on it.
            Var objective = scale(weighted_log_prob(tape, generator, episodes, advantage), -1.0);
            tape.backward(objective, generator.parameters());
            g_opt.step(generator.parameters());
            baseline.observe(q_sum / static_cast<double>(q_count));
        }
        double d_total = 0.0;
        for (std::size_t step = 0; step < schedule.d_steps; ++step) {
            Rng sr = er.split(fmt::format("d{}", step));
            Rng dropout = sr.split("dropout");
            const Sequences real = pick(real_train, B, sr);
            const Sequences fake = generated(generator, B, T, sr);
            d_total += discriminator_step(discriminator, d_opt, real, fake, dropout);
        }
        record(SeqGanEpoch{epoch, d_total / static_cast<double>(schedule.d_steps), 0, 0, 0}, baseline);
    }

    history.pretrained_g_final_reward = mean_reward(discriminator, pretrained, options.eval_samples, T, rng.split("final-pre"));
    history.final_g_final_reward = mean_reward(discriminator, generator, options.eval_samples, T, rng.split("final-post"));
    return history;
}

} // namespace dc
