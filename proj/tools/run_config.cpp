#include "run_config.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>

#include "dc/error.hpp"

namespace dc::cli {

namespace {

using json = nlohmann::json;

json optimizer_json(const std::string& kind, double lr)
{
    return {{"kind", kind}, {"lr", lr}, {"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}};
}

json regime_json(json optimizer, std::size_t max_epochs, std::size_t patience, std::size_t batch)
{
    return {{"optimizer", std::move(optimizer)},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"batch_size", batch}};
}

json common_json()
{
    const SyntheticEraConfig synth;
    return {
        {"preset", "desk"},
        {"seed", 0},
        {"paths", {{"corpus_dir", ""}, {"manifest", ""}, {"output_dir", ""}}},
        {"ingest", {{"min_count", 1}, {"split", {{"train", 0.8}, {"valid", 0.1}, {"test", 0.1}}}}},
        {"embeddings", {{"file", ""}}},
        {"score",
         {{"weights", {{"value", 1.0 / 3.0}, {"novelty", 1.0 / 3.0}, {"surprise", 1.0 / 3.0}}},
          {"surprise", {{"eta", 1.0}, {"weight_policy", "all-trainable"}, {"zero_weight_epsilon", 1e-8}}},
          {"normalize_surprise", false},
          {"context_samples", 30},
          {"checkpoints", {{"value-gan", "final"}, {"novelty-classifier", "best"}, {"surprise-lm", "best"}}}}},
        {"synth",
         {{"drifts", {0.0, 0.4, 0.8}},
          {"num_classes", synth.num_classes},
          {"words_per_class", synth.words_per_class},
          {"shared_words", synth.shared_words},
          {"seq_len", synth.seq_len},
          {"artifacts_per_class", synth.artifacts_per_class},
          {"preferred_successors", synth.preferred_successors},
          {"preferred_mass", synth.preferred_mass}}},
    };
}

json desk_json()
{
    json j = common_json();
    j["language_model"] = {{"embed_dim", 16}, {"context_len", 20}, {"lstm_units", 32}, {"dropout_rate", 0.2}};
    j["cnn"] = {{"embed_dim", 16}, {"kernel_sizes", {3, 4, 5}}, {"filters_per_kernel", 16}, {"dropout_rate", 0.5}};
    j["surprise_lm"] = regime_json(optimizer_json("adam", 0.01), 60, 5, 32);
    j["novelty_classifier"] = regime_json(optimizer_json("adam", 1e-3), 60, 5, 32);
    j["value_gan"] = {{"schedule",
                       {{"g_pretrain_epochs", 10},
                        {"d_pretrain_epochs", 5},
                        {"g_steps", 8},
                        {"d_steps", 4},
                        {"batch_size", 32},
                        {"adversarial_epochs", 80},
                        {"rollout_count", 1}}},
                      {"g_optimizer", optimizer_json("adagrad", 0.01)},
                      {"d_optimizer", optimizer_json("adam", 1e-3)},
                      {"eval_samples", 128}};
    return j;
}

json paper_json()
{
    json j = common_json();
    j["preset"] = "paper";
    j["language_model"] = {{"embed_dim", 300}, {"context_len", 20}, {"lstm_units", 256}, {"dropout_rate", 0.2}};
    j["cnn"] = {{"embed_dim", 300}, {"kernel_sizes", {3, 4, 5}}, {"filters_per_kernel", 64}, {"dropout_rate", 0.5}};
    j["surprise_lm"] = regime_json(optimizer_json("adagrad", 0.01), 136, 136, 32);
    j["novelty_classifier"] = regime_json(optimizer_json("adam", 1e-4), 56, 56, 32);
    j["value_gan"] = {{"schedule",
                       {{"g_pretrain_epochs", 50},
                        {"d_pretrain_epochs", 5},
                        {"g_steps", 8},
                        {"d_steps", 4},
                        {"batch_size", 32},
                        {"adversarial_epochs", 550},
                        {"rollout_count", 1}}},
                      {"g_optimizer", optimizer_json("adagrad", 0.01)},
                      {"d_optimizer", optimizer_json("adam", 1e-4)},
                      {"eval_samples", 256}};
    return j;
}

void check_keys(const json& user, const json& known, const std::string& where)
{
    for (const auto& [key, val] : user.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!known.contains(key)) {
            throw InputError(fmt::format("config: unknown key '{}'", path));
        }
        if (val.is_object() && known.at(key).is_object()) {
            check_keys(val, known.at(key), path);
        }
    }
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    if (p.empty()) {
        return {};
    }
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

SupervisedRegime parse_regime(const json& j)
{
    SupervisedRegime r;
    r.optimizer = j.at("optimizer").get<OptimizerConfig>();
    r.max_epochs = j.at("max_epochs").get<std::size_t>();
    r.patience = j.at("patience").get<std::size_t>();
    r.batch_size = j.at("batch_size").get<std::size_t>();
    return r;
}

json regime_out(const SupervisedRegime& r)
{
    return regime_json(r.optimizer, r.max_epochs, r.patience, r.batch_size);
}

} // namespace

nlohmann::json preset_json(const std::string& name)
{
    if (name == "desk") {
        return desk_json();
    }
    if (name == "paper") {
        return paper_json();
    }
    throw InputError(fmt::format("config: unknown preset '{}' (expected desk or paper)", name));
}

void RunConfig::validate() const
{
    if (output_dir.empty()) {
        throw InputError("config: paths.output_dir is required");
    }
    if (min_count < 1) {
        throw InputError("config: ingest.min_count must be at least 1");
    }
    split.validate();
    for (const auto* r : {&surprise_lm, &novelty_classifier}) {
        r->optimizer.validate();
        TrainOptions{r->max_epochs, r->patience, r->batch_size, {}}.validate();
    }
    gan_schedule.validate();
    gan_g_optimizer.validate();
    gan_d_optimizer.validate();
    if (gan_eval_samples == 0) {
        throw InputError("config: value_gan.eval_samples must be positive");
    }
    // Architecture checks with placeholder data-dependent sizes.
    LmConfig lm = language_model;
    lm.vocab_size = 5;
    lm.validate();
    CnnConfig c = cnn;
    c.vocab_size = 5;
    c.max_len = c.kernel_sizes.empty() ? 1 : *std::max_element(c.kernel_sizes.begin(), c.kernel_sizes.end());
    c.validate();
    weights.validate();
    surprise.validate();
    for (const auto& [role, which] : checkpoints) {
        if (which != "best" && which != "final") {
            throw InputError(fmt::format("config: score.checkpoints.{} must be best or final, got '{}'", role, which));
        }
    }
    synth.validate();
    if (synth_drifts.empty()) {
        throw InputError("config: synth.drifts must not be empty");
    }
    for (double d : synth_drifts) {
        if (!(d >= 0.0 && d <= 1.0)) {
            throw InputError(fmt::format("config: synth drift {} outside [0, 1]", d));
        }
    }
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError(fmt::format("cannot open config {}", path.string()));
    }
    json user;
    try {
        user = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw InputError(fmt::format("config {}: {}", path.string(), e.what()));
    }
    if (!user.is_object()) {
        throw InputError(fmt::format("config {}: top level must be an object", path.string()));
    }
    const std::string preset = user.value("preset", std::string("desk"));
    json merged = preset_json(preset);
    check_keys(user, merged, "");
    merged.merge_patch(user);

    const fs::path base = fs::absolute(path).parent_path();
    RunConfig cfg;
    try {
        cfg.preset = preset;
        cfg.seed = merged.at("seed").get<std::uint64_t>();
        const auto& paths = merged.at("paths");
        cfg.corpus_dir = resolve(base, paths.at("corpus_dir").get<std::string>());
        cfg.manifest = resolve(base, paths.at("manifest").get<std::string>());
        cfg.output_dir = resolve(base, paths.at("output_dir").get<std::string>());

        const auto& ingest = merged.at("ingest");
        cfg.min_count = ingest.at("min_count").get<std::size_t>();
        cfg.split.train = ingest.at("split").at("train").get<double>();
        cfg.split.valid = ingest.at("split").at("valid").get<double>();
        cfg.split.test = ingest.at("split").at("test").get<double>();
        cfg.embeddings_file = resolve(base, merged.at("embeddings").at("file").get<std::string>());

        cfg.language_model = merged.at("language_model").get<LmConfig>();
        cfg.cnn = merged.at("cnn").get<CnnConfig>();
        cfg.surprise_lm = parse_regime(merged.at("surprise_lm"));
        cfg.novelty_classifier = parse_regime(merged.at("novelty_classifier"));

        const auto& gan = merged.at("value_gan");
        cfg.gan_schedule = gan.at("schedule").get<SeqGanSchedule>();
        cfg.gan_g_optimizer = gan.at("g_optimizer").get<OptimizerConfig>();
        cfg.gan_d_optimizer = gan.at("d_optimizer").get<OptimizerConfig>();
        cfg.gan_eval_samples = gan.at("eval_samples").get<std::size_t>();

        const auto& score = merged.at("score");
        cfg.weights = score.at("weights").get<CreativityWeights>();
        cfg.surprise = score.at("surprise").get<SurpriseConfig>();
        cfg.normalize_surprise = score.at("normalize_surprise").get<bool>();
        cfg.context_samples = score.at("context_samples").get<std::size_t>();
        for (const auto& [role, which] : score.at("checkpoints").items()) {
            cfg.checkpoints[role] = which.get<std::string>();
        }

        const auto& synth = merged.at("synth");
        cfg.synth_drifts = synth.at("drifts").get<std::vector<double>>();
        cfg.synth.num_classes = synth.at("num_classes").get<std::size_t>();
        cfg.synth.words_per_class = synth.at("words_per_class").get<std::size_t>();
        cfg.synth.shared_words = synth.at("shared_words").get<std::size_t>();
        cfg.synth.seq_len = synth.at("seq_len").get<std::size_t>();
        cfg.synth.artifacts_per_class = synth.at("artifacts_per_class").get<std::size_t>();
        cfg.synth.preferred_successors = synth.at("preferred_successors").get<std::size_t>();
        cfg.synth.preferred_mass = synth.at("preferred_mass").get<double>();
    } catch (const json::exception& e) {
        throw InputError(fmt::format("config {}: {}", path.string(), e.what()));
    }
    if (seed_override) {
        cfg.seed = *seed_override;
    }
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg)
{
    using ojson = nlohmann::ordered_json;
    auto plain = [](const json& j) { return ojson::parse(j.dump()); };
    ojson j;
    j["preset"] = cfg.preset;
    j["seed"] = cfg.seed;
    j["paths"] = {{"corpus_dir", cfg.corpus_dir.string()},
                  {"manifest", cfg.manifest.string()},
                  {"output_dir", cfg.output_dir.string()}};
    j["ingest"] = {{"min_count", cfg.min_count},
                   {"split", {{"train", cfg.split.train}, {"valid", cfg.split.valid}, {"test", cfg.split.test}}}};
    j["embeddings"] = {{"file", cfg.embeddings_file.string()}};
    json lm = cfg.language_model;
    lm.erase("vocab_size");
    j["language_model"] = plain(lm);
    json cnn = cfg.cnn;
    for (const char* k : {"vocab_size", "max_len", "head", "num_classes"}) {
        cnn.erase(k);
    }
    j["cnn"] = plain(cnn);
    j["surprise_lm"] = plain(regime_out(cfg.surprise_lm));
    j["novelty_classifier"] = plain(regime_out(cfg.novelty_classifier));
    j["value_gan"] = {{"schedule", plain(cfg.gan_schedule)},
                      {"g_optimizer", plain(cfg.gan_g_optimizer)},
                      {"d_optimizer", plain(cfg.gan_d_optimizer)},
                      {"eval_samples", cfg.gan_eval_samples}};
    j["score"] = {{"weights", plain(cfg.weights)},
                  {"surprise", plain(cfg.surprise)},
                  {"normalize_surprise", cfg.normalize_surprise},
                  {"context_samples", cfg.context_samples},
                  {"checkpoints",
                   {{"value-gan", cfg.checkpoints.at("value-gan")},
                    {"novelty-classifier", cfg.checkpoints.at("novelty-classifier")},
                    {"surprise-lm", cfg.checkpoints.at("surprise-lm")}}}};
    j["synth"] = {{"drifts", cfg.synth_drifts},
                  {"num_classes", cfg.synth.num_classes},
                  {"words_per_class", cfg.synth.words_per_class},
                  {"shared_words", cfg.synth.shared_words},
                  {"seq_len", cfg.synth.seq_len},
                  {"artifacts_per_class", cfg.synth.artifacts_per_class},
                  {"preferred_successors", cfg.synth.preferred_successors},
                  {"preferred_mass", cfg.synth.preferred_mass}};
    return j;
}

} // namespace dc::cli
