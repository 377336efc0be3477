#include "commands.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "charts.hpp"
#include "dc/error.hpp"
#include "dc/oov.hpp"

namespace dc::cli {

namespace {

using ojson = nlohmann::ordered_json;

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError(fmt::format("cannot read {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError(fmt::format("cannot write {}", path.string()));
    }
    return out;
}

void write_file(const fs::path& path, const std::string& content)
{
    auto out = open_out(path);
    out << content;
}

std::string fixed(double v) { return fmt::format("{:.17g}", v); }

// Duplicate ids and unreadable files, checked before anything is written.
void check_entries(const std::vector<ManifestEntry>& entries, const fs::path& base, const fs::path& manifest)
{
    if (entries.empty()) {
        throw InputError(fmt::format("manifest {} has no records", manifest.string()));
    }
    std::map<std::string, std::size_t> seen;
    std::vector<std::string> dups;
    for (const auto& e : entries) {
        if (++seen[e.id] == 2) {
            dups.push_back(e.id);
        }
    }
    if (!dups.empty()) {
        std::string list;
        for (const auto& d : dups) {
            list += (list.empty() ? "" : ", ") + d;
        }
        throw InputError(fmt::format("manifest {}: duplicate artifact ids: {}", manifest.string(), list));
    }
    std::vector<std::string> missing;
    for (const auto& e : entries) {
        if (!fs::is_regular_file(base / e.path)) {
            missing.push_back(fmt::format("{} ({})", e.id, (base / e.path).string()));
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            list += "\n  " + m;
        }
        throw InputError(fmt::format("manifest {}: missing files:{}", manifest.string(), list));
    }
}

std::string_view or_default(const std::string& s, std::string_view fallback)
{
    return s.empty() ? fallback : std::string_view(s);
}

// ---------------------------------------------------------------------------
// Dataset on disk

struct Loaded {
    Vocabulary vocab;
    ContextDataset data;
    std::size_t max_len = 0;
};

Loaded load_dataset(const Layout& layout)
{
    for (const auto& p : {layout.summary(), layout.vocab(), layout.artifacts()}) {
        if (!fs::is_regular_file(p)) {
            throw InputError(fmt::format("dataset file {} not found; run ingest first", p.string()));
        }
    }
    Loaded out;
    std::string fp_hex;
    try {
        const auto summary = nlohmann::json::parse(read_file(layout.summary()));
        out.data.class_names = summary.at("class_names").get<std::vector<std::string>>();
        out.max_len = summary.at("max_len").get<std::size_t>();
        fp_hex = summary.at("vocab_fingerprint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("{}: {}", layout.summary().string(), e.what()));
    }
    {
        std::ifstream in(layout.vocab());
        out.vocab = Vocabulary::read_tsv(in);
    }
    if (fingerprint_hex(out.vocab.fingerprint()) != fp_hex) {
        throw IncompatibleError(fmt::format("vocabulary {} does not match the dataset summary fingerprint {}",
                                            layout.vocab().string(), fp_hex));
    }
    std::ifstream in(layout.artifacts());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            Artifact a;
            a.id = j.at("id").get<std::string>();
            a.era_tag = j.at("era").get<std::string>();
            const auto cls = j.at("class").get<std::string>();
            if (!cls.empty()) {
                const auto it = std::find(out.data.class_names.begin(), out.data.class_names.end(), cls);
                if (it == out.data.class_names.end()) {
                    throw InputError(fmt::format("unknown class '{}'", cls));
                }
                a.class_label = static_cast<std::size_t>(it - out.data.class_names.begin());
            }
            a.tokens = j.at("tokens").get<std::vector<TokenId>>();
            for (auto t : a.tokens) {
                if (t < 0 || static_cast<std::size_t>(t) >= out.vocab.size()) {
                    throw InputError(fmt::format("token id {} outside the vocabulary", t));
                }
            }
            a.vocab_fingerprint = out.vocab.fingerprint();
            out.data.splits.push_back(parse_split(j.at("split").get<std::string>()));
            out.data.artifacts.push_back(std::move(a));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(fmt::format("{}:{}: {}", layout.artifacts().string(), lineno, e.what()));
        } catch (const InputError& e) {
            throw InputError(fmt::format("{}:{}: {}", layout.artifacts().string(), lineno, e.what()));
        }
    }
    out.data.validate();
    return out;
}

// The CNN input length: the longest training artifact, but at least the
// widest kernel.
std::size_t cnn_length(const CnnConfig& c, std::size_t max_len)
{
    for (auto k : c.kernel_sizes) {
        max_len = std::max(max_len, k);
    }
    return max_len;
}

Sequences sequences(const ContextDataset& data, Split s)
{
    Sequences out;
    for (const auto* a : data.split(s)) {
        out.push_back(a->tokens);
    }
    return out;
}

LabeledSequences labeled(const ContextDataset& data, Split s)
{
    LabeledSequences out;
    for (const auto* a : data.split(s)) {
        if (a->class_label) {
            out.inputs.push_back(a->tokens);
            out.labels.push_back(*a->class_label);
        }
    }
    return out;
}

// Overwrites embedding rows for tokens found in the configured word-vector file.
void preload_embeddings(const RunConfig& cfg, const Vocabulary& vocab, ParameterStore& params, std::size_t embed_dim,
                        std::ostream& log)
{
    if (cfg.embeddings_file.empty()) {
        return;
    }
    Vocabulary v = vocab;
    const std::size_t filled = v.load_embeddings(cfg.embeddings_file, embed_dim);
    auto& table = params.get("embedding").tensor;
    const auto& rows = v.embedding_rows_loaded();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r]) {
            for (std::size_t j = 0; j < embed_dim; ++j) {
                table.at(r, j) = v.embeddings()->at(r, j);
            }
        }
    }
    log << fmt::format("embeddings: {} of {} rows initialized from {}\n", filled, vocab.size(),
                       cfg.embeddings_file.string());
}

class MetricsLog {
public:
    explicit MetricsLog(const fs::path& path) : out_(open_out(path)) {}
    void write(const ojson& record)
    {
        out_ << record.dump() << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

ojson epoch_record(const EpochMetrics& m)
{
    ojson j;
    j["epoch"] = m.epoch;
    j["train_loss"] = m.train_loss;
    j["valid_loss"] = m.valid_loss;
    if (m.valid_accuracy) {
        j["valid_accuracy"] = *m.valid_accuracy;
    }
    return j;
}

ojson history_summary(const TrainHistory& h)
{
    ojson j;
    j["epochs_run"] = h.epochs.size();
    j["best_epoch"] = h.best_epoch;
    j["best_valid_loss"] = h.best_valid_loss;
    j["final_epoch"] = h.epochs.empty() ? 0 : h.epochs.back().epoch;
    return j;
}

// ---------------------------------------------------------------------------
// Training roles

void train_surprise_lm(const RunConfig& cfg, const Loaded& ds, const fs::path& dir, Rng rng, std::ostream& log)
{
    const Sequences train = sequences(ds.data, Split::train);
    const Sequences valid = sequences(ds.data, Split::valid);
    if (valid.empty()) {
        throw InputError("surprise-lm: the validation split is empty");
    }
    LmConfig lc = cfg.language_model;
    lc.vocab_size = ds.vocab.size();
    Rng init = rng.split("init");
    LanguageModel model(lc, init);
    model.set_vocab_fingerprint(ds.vocab.fingerprint());
    preload_embeddings(cfg, ds.vocab, model.parameters(), lc.embed_dim, log);

    MetricsLog metrics(dir / "metrics.jsonl");
    Checkpoint final_ckpt;
    TrainOptions opts{cfg.surprise_lm.max_epochs, cfg.surprise_lm.patience, cfg.surprise_lm.batch_size, {}};
    opts.on_epoch = [&](const EpochMetrics& m) {
        metrics.write(epoch_record(m));
        final_ckpt = model.to_checkpoint();
        log << fmt::format("surprise-lm epoch {}: train {:.6f} valid {:.6f}\n", m.epoch, m.train_loss, m.valid_loss);
    };
    const auto history = train_lm(model, train, valid, cfg.surprise_lm.optimizer, opts, rng.split("fit"));
    save_checkpoint(dir / "best.ckpt", model.to_checkpoint());
    save_checkpoint(dir / "final.ckpt", final_ckpt);
    write_file(dir / "summary.json", history_summary(history).dump(2) + "\n");
    log << fmt::format("surprise-lm: best epoch {} (valid loss {:.6f}) of {}\n", history.best_epoch,
                       history.best_valid_loss, history.epochs.size());
}

void train_novelty_classifier(const RunConfig& cfg, const Loaded& ds, const fs::path& dir, Rng rng,
                              std::ostream& log)
{
    const LabeledSequences train = labeled(ds.data, Split::train);
    const LabeledSequences valid = labeled(ds.data, Split::valid);
    if (ds.data.num_classes() < 2) {
        throw InputError("novelty-classifier: the dataset needs at least two style classes");
    }
    if (valid.inputs.empty()) {
        throw InputError("novelty-classifier: no labeled artifacts in the validation split");
    }
    CnnConfig cc = cfg.cnn;
    cc.vocab_size = ds.vocab.size();
    cc.max_len = cnn_length(cc, ds.max_len);
    cc.head = Head::softmax;
    cc.num_classes = ds.data.num_classes();
    Rng init = rng.split("init");
    NoveltyClassifier model(cc, init);
    model.set_vocab_fingerprint(ds.vocab.fingerprint());
    preload_embeddings(cfg, ds.vocab, model.parameters(), cc.embed_dim, log);

    MetricsLog metrics(dir / "metrics.jsonl");
    Checkpoint final_ckpt;
    const auto& r = cfg.novelty_classifier;
    TrainOptions opts{r.max_epochs, r.patience, r.batch_size, {}};
    opts.on_epoch = [&](const EpochMetrics& m) {
        metrics.write(epoch_record(m));
        final_ckpt = model.to_checkpoint();
        log << fmt::format("novelty-classifier epoch {}: train {:.6f} valid {:.6f} accuracy {:.4f}\n", m.epoch,
                           m.train_loss, m.valid_loss, m.valid_accuracy.value_or(0.0));
    };
    const auto history = train_classifier(model, train, valid, r.optimizer, opts, rng.split("fit"));
    save_checkpoint(dir / "best.ckpt", model.to_checkpoint());
    save_checkpoint(dir / "final.ckpt", final_ckpt);
    auto summary = history_summary(history);
    summary["best_valid_accuracy"] = evaluate_classifier(model, valid, r.batch_size).accuracy;
    summary["final_valid_accuracy"] = history.epochs.back().valid_accuracy.value_or(0.0);
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    log << fmt::format("novelty-classifier: best epoch {} (valid loss {:.6f}, accuracy {:.4f}) of {}\n",
                       history.best_epoch, history.best_valid_loss, summary["best_valid_accuracy"].get<double>(),
                       history.epochs.size());
}

void train_value_gan(const RunConfig& cfg, const Loaded& ds, const fs::path& dir, Rng rng, std::ostream& log)
{
    const Sequences train = sequences(ds.data, Split::train);
    const Sequences valid = sequences(ds.data, Split::valid);
    if (valid.empty()) {
        throw InputError("value-gan: the validation split is empty");
    }
    LmConfig gc = cfg.language_model;
    gc.vocab_size = ds.vocab.size();
    CnnConfig dc = cfg.cnn;
    dc.vocab_size = ds.vocab.size();
    dc.max_len = cnn_length(dc, ds.max_len);
    dc.head = Head::sigmoid;
    dc.num_classes = 1;
    Rng g_init = rng.split("init/generator");
    Rng d_init = rng.split("init/discriminator");
    LanguageModel generator(gc, g_init);
    ValueDiscriminator discriminator(dc, d_init);
    generator.set_vocab_fingerprint(ds.vocab.fingerprint());
    discriminator.set_vocab_fingerprint(ds.vocab.fingerprint());
    preload_embeddings(cfg, ds.vocab, generator.parameters(), gc.embed_dim, log);
    preload_embeddings(cfg, ds.vocab, discriminator.parameters(), dc.embed_dim, log);

    MetricsLog metrics(dir / "metrics.jsonl");
    Checkpoint best_ckpt;
    double best_accuracy = -1.0;
    std::size_t best_epoch = 0;
    SeqGanOptions opts;
    opts.max_len = ds.max_len;
    opts.g_optimizer = cfg.gan_g_optimizer;
    opts.d_optimizer = cfg.gan_d_optimizer;
    opts.eval_samples = cfg.gan_eval_samples;
    opts.on_epoch = [&](const SeqGanEpoch& e) {
        ojson j;
        j["epoch"] = e.epoch;
        j["d_loss"] = e.d_loss;
        j["d_accuracy"] = e.d_accuracy;
        j["g_reward"] = e.g_reward;
        j["baseline"] = e.baseline;
        metrics.write(j);
        if (e.d_accuracy > best_accuracy) {
            best_accuracy = e.d_accuracy;
            best_epoch = e.epoch;
            best_ckpt = discriminator.to_checkpoint();
        }
        log << fmt::format("value-gan epoch {}: d_loss {:.6f} d_accuracy {:.4f} g_reward {:.4f}\n", e.epoch,
                           e.d_loss, e.d_accuracy, e.g_reward);
    };
    const auto history = train_seqgan(generator, discriminator, train, valid, cfg.gan_schedule, opts, rng.split("fit"));

    save_checkpoint(dir / "best.ckpt", best_ckpt);
    save_checkpoint(dir / "final.ckpt", discriminator.to_checkpoint());
    save_checkpoint(dir / "generator.ckpt", generator.to_checkpoint());
    {
        MetricsLog pre(dir / "pretrain.jsonl");
        for (const auto& m : history.g_pretrain.epochs) {
            ojson j;
            j["phase"] = "generator";
            j["epoch"] = m.epoch;
            j["train_loss"] = m.train_loss;
            j["valid_loss"] = m.valid_loss;
            pre.write(j);
        }
        for (std::size_t i = 0; i < history.d_pretrain_loss.size(); ++i) {
            ojson j;
            j["phase"] = "discriminator";
            j["epoch"] = i + 1;
            j["train_loss"] = history.d_pretrain_loss[i];
            pre.write(j);
        }
    }
    ojson summary;
    summary["adversarial_epochs"] = history.epochs.size() - 1;
    summary["best_epoch"] = best_epoch;
    summary["best_d_accuracy"] = best_accuracy;
    summary["final_d_accuracy"] = history.epochs.back().d_accuracy;
    summary["pretrain_g_reward"] = history.epochs.front().g_reward;
    summary["final_g_reward"] = history.epochs.back().g_reward;
    summary["pretrained_g_final_reward"] = history.pretrained_g_final_reward;
    summary["final_g_final_reward"] = history.final_g_final_reward;
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    log << fmt::format("value-gan: best D accuracy {:.4f} at epoch {}; final {:.4f}\n", best_accuracy, best_epoch,
                       history.epochs.back().d_accuracy);
}

// ---------------------------------------------------------------------------
// Scoring

struct LoadedScorers {
    ValueDiscriminator d_v;
    NoveltyClassifier d_n;
    LanguageModel g_s;
};

Checkpoint load_role(const Layout& layout, Role role, const RunConfig& cfg)
{
    const std::string& which = cfg.checkpoints.at(std::string(to_string(role)));
    const fs::path p = layout.model_dir(role) / (which + ".ckpt");
    if (!fs::is_regular_file(p)) {
        throw InputError(fmt::format("checkpoint {} not found; run train --role {} first", p.string(), to_string(role)));
    }
    return load_checkpoint(p);
}

} // namespace

std::string_view to_string(Role r)
{
    switch (r) {
    case Role::value_gan: return "value-gan";
    case Role::novelty_classifier: return "novelty-classifier";
    case Role::surprise_lm: return "surprise-lm";
    }
    return "?";
}

Role parse_role(std::string_view s)
{
    for (Role r : {Role::value_gan, Role::novelty_classifier, Role::surprise_lm}) {
        if (s == to_string(r)) {
            return r;
        }
    }
    throw InputError(fmt::format("unknown role '{}' (expected value-gan, novelty-classifier or surprise-lm)", s));
}

void cmd_ingest(const RunConfig& cfg, std::ostream& log)
{
    if (cfg.manifest.empty()) {
        throw InputError("config: paths.manifest is required for ingest");
    }
    const fs::path base = cfg.corpus_dir.empty() ? cfg.manifest.parent_path() : cfg.corpus_dir;
    const auto entries = read_manifest(cfg.manifest);
    check_entries(entries, base, cfg.manifest);

    std::vector<std::vector<std::string>> docs;
    for (const auto& e : entries) {
        docs.push_back(tokenize(read_file(base / e.path)));
        if (docs.back().empty()) {
            throw InputError(fmt::format("artifact {} ({}) has no tokens", e.id, e.path));
        }
    }
    std::set<std::string> class_set;
    for (const auto& e : entries) {
        if (!e.class_name.empty()) {
            class_set.insert(e.class_name);
        }
    }
    ContextDataset data;
    data.class_names.assign(class_set.begin(), class_set.end());

    std::vector<std::vector<std::string>> train_docs;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        data.splits.push_back(assign_split(entries[i].id, cfg.seed, cfg.split));
        if (data.splits.back() == Split::train) {
            train_docs.push_back(docs[i]);
        }
    }
    if (train_docs.empty()) {
        throw InputError("ingest: no artifact was assigned to the train split");
    }
    const Vocabulary vocab = Vocabulary::build(train_docs, cfg.min_count);
    std::size_t max_len = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Artifact a;
        a.id = entries[i].id;
        a.era_tag = entries[i].era;
        a.tokens = vocab.encode(docs[i]);
        a.vocab_fingerprint = vocab.fingerprint();
        if (!entries[i].class_name.empty()) {
            a.class_label = static_cast<std::size_t>(
                std::find(data.class_names.begin(), data.class_names.end(), entries[i].class_name) -
                data.class_names.begin());
        }
        if (data.splits[i] == Split::train) {
            max_len = std::max(max_len, a.tokens.size());
        }
        data.artifacts.push_back(std::move(a));
    }
    data.validate();

    const Layout layout{cfg.output_dir};
    fs::create_directories(layout.dataset_dir());
    {
        auto out = open_out(layout.artifacts());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            ojson j;
            j["id"] = entries[i].id;
            j["path"] = entries[i].path;
            j["class"] = entries[i].class_name;
            j["era"] = entries[i].era;
            j["split"] = std::string(to_string(data.splits[i]));
            j["tokens"] = data.artifacts[i].tokens;
            out << j.dump() << '\n';
        }
    }
    {
        auto out = open_out(layout.vocab());
        vocab.write_tsv(out);
    }
    ojson by_split = {{"train", 0}, {"valid", 0}, {"test", 0}};
    ojson by_class;
    for (const auto& c : data.class_names) {
        by_class[c] = 0;
    }
    ojson by_era;
    std::size_t unlabeled = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        by_split[std::string(to_string(data.splits[i]))] = by_split[std::string(to_string(data.splits[i]))].get<int>() + 1;
        if (entries[i].class_name.empty()) {
            ++unlabeled;
        } else {
            by_class[entries[i].class_name] = by_class[entries[i].class_name].get<int>() + 1;
        }
        const std::string era(or_default(entries[i].era, "untagged"));
        by_era[era] = by_era.contains(era) ? by_era[era].get<int>() + 1 : 1;
    }
    ojson summary;
    summary["artifacts"] = entries.size();
    summary["unlabeled"] = unlabeled;
    summary["class_names"] = data.class_names;
    summary["by_class"] = by_class;
    summary["by_era"] = by_era;
    summary["by_split"] = by_split;
    summary["vocab_size"] = vocab.size();
    summary["vocab_fingerprint"] = fingerprint_hex(vocab.fingerprint());
    summary["max_len"] = max_len;
    summary["min_count"] = cfg.min_count;
    summary["seed"] = cfg.seed;
    const std::string text = summary.dump(2) + "\n";
    write_file(layout.summary(), text);
    log << text;
}

void cmd_train(const RunConfig& cfg, Role role, std::ostream& log)
{
    const Layout layout{cfg.output_dir};
    const Loaded ds = load_dataset(layout);
    if (ds.data.split(Split::valid).empty()) {
        throw InputError(fmt::format("{}: the validation split is empty", to_string(role)));
    }
    if (role == Role::novelty_classifier && ds.data.num_classes() < 2) {
        throw InputError("novelty-classifier: the dataset needs at least two style classes");
    }
    const fs::path dir = layout.model_dir(role);
    fs::create_directories(dir);
    write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
    const Rng rng = Rng(cfg.seed).split(fmt::format("train/{}", to_string(role)));
    switch (role) {
    case Role::surprise_lm: train_surprise_lm(cfg, ds, dir, rng, log); break;
    case Role::novelty_classifier: train_novelty_classifier(cfg, ds, dir, rng, log); break;
    case Role::value_gan: train_value_gan(cfg, ds, dir, rng, log); break;
    }
}

void cmd_score(const RunConfig& cfg, const fs::path& targets, std::ostream& log)
{
    const Layout layout{cfg.output_dir};
    const auto entries = read_manifest(targets);
    const fs::path base = targets.parent_path();
    check_entries(entries, base, targets);
    const Loaded ds = load_dataset(layout);

    LoadedScorers m{ValueDiscriminator::from_checkpoint(load_role(layout, Role::value_gan, cfg)),
                    NoveltyClassifier::from_checkpoint(load_role(layout, Role::novelty_classifier, cfg)),
                    LanguageModel::from_checkpoint(load_role(layout, Role::surprise_lm, cfg))};
    const Scorers scorers{m.d_v, m.d_n, m.g_s};
    check_fingerprints(scorers);
    if (m.g_s.vocab_fingerprint() != ds.vocab.fingerprint()) {
        throw IncompatibleError(fmt::format("dataset vocabulary ({}) and surprise language model ({}) differ",
                                            fingerprint_hex(ds.vocab.fingerprint()),
                                            fingerprint_hex(m.g_s.vocab_fingerprint())));
    }
    if (m.d_n.num_classes() != ds.data.num_classes()) {
        throw IncompatibleError(fmt::format("novelty classifier has {} classes, dataset has {}", m.d_n.num_classes(),
                                            ds.data.num_classes()));
    }

    std::vector<std::string> side_log;
    side_log.push_back(fmt::format("surprise: eta={} weight_policy={} zero_weight_epsilon={} normalized={}",
                                   cfg.surprise.eta, to_string(cfg.surprise.weight_policy),
                                   cfg.surprise.zero_weight_epsilon, cfg.normalize_surprise));

    // The training-set sample every report carries.
    std::vector<ArtifactGroup> groups;
    {
        auto train = ds.data.split(Split::train);
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        Rng rng = Rng(cfg.seed).split("score/context-sample");
        rng.shuffle(order);
        order.resize(std::min(order.size(), cfg.context_samples));
        std::sort(order.begin(), order.end());
        ArtifactGroup context{"context", {}};
        for (auto i : order) {
            context.artifacts.push_back(*train[i]);
        }
        groups.push_back(std::move(context));
    }
    for (const auto& e : entries) {
        const std::string era(or_default(e.era, "target"));
        auto it = std::find_if(groups.begin(), groups.end(), [&](const ArtifactGroup& g) { return g.name == era; });
        if (it == groups.end()) {
            groups.push_back({era, {}});
            it = groups.end() - 1;
        }
        Artifact a;
        a.id = e.id;
        a.era_tag = era;
        a.raw_text = read_file(base / e.path);
        const auto words = tokenize(a.raw_text);
        if (words.empty()) {
            throw InputError(fmt::format("target {} ({}) has no tokens", e.id, e.path));
        }
        a.tokens = ds.vocab.encode(words);
        a.vocab_fingerprint = ds.vocab.fingerprint();
        auto sub = oov_substitute(a, m.g_s, ds.vocab);
        for (const auto& s : sub.substitutions) {
            side_log.push_back(fmt::format("{}: out-of-vocabulary '{}' at position {} replaced by '{}' (cosine {:.6f})",
                                           e.id, words[s.position], s.position, ds.vocab.token(s.replacement),
                                           s.cosine));
        }
        it->artifacts.push_back(std::move(sub.artifact));
    }

    const auto report =
        batch_report(groups, scorers, cfg.weights, cfg.surprise, cfg.normalize_surprise, ds.data.class_names);
    for (const auto& w : report.warnings) {
        side_log.push_back(w);
    }
    for (const auto& r : report.rows) {
        for (const auto& w : r.warnings) {
            side_log.push_back(fmt::format("{}: {}", r.id, w));
        }
    }

    fs::create_directories(layout.reports_dir());
    {
        auto out = open_out(layout.report_csv());
        write_report_csv(out, report);
    }
    {
        auto out = open_out(layout.reports_dir() / "groups.csv");
        out << "group,count,V,N,S,DC\n";
        for (const auto& g : report.groups) {
            out << fmt::format("{},{},{},{},{},{}\n", g.group, g.count, fixed(g.value), fixed(g.novelty),
                               fixed(g.surprise), fixed(g.dc));
        }
    }
    {
        auto out = open_out(layout.reports_dir() / "warnings.log");
        for (const auto& w : side_log) {
            out << w << '\n';
        }
    }
    log << fmt::format("{:<16} {:>5} {:>10} {:>10} {:>10} {:>10}\n", "group", "n", "V", "N", "S", "DC");
    for (const auto& g : report.groups) {
        log << fmt::format("{:<16} {:>5} {:>10.4f} {:>10.4f} {:>10.4f} {:>10.4f}\n", g.group, g.count, g.value,
                           g.novelty, g.surprise, g.dc);
    }
    log << fmt::format("report: {} ({} warnings in warnings.log)\n", layout.report_csv().string(), side_log.size() - 1);
}

void cmd_plot(const RunConfig& cfg, const fs::path& report, const std::vector<std::string>& order, std::ostream& log)
{
    const Layout layout{cfg.output_dir};
    const fs::path path = report.empty() ? layout.report_csv() : report;
    std::ifstream in(path);
    if (!in) {
        throw InputError(fmt::format("cannot read report {}", path.string()));
    }
    const auto rows = read_report_csv(in);
    if (rows.empty()) {
        throw InputError(fmt::format("report {} has no rows", path.string()));
    }
    const auto all = group_means(rows);
    std::vector<GroupMeans> chosen;
    if (order.empty()) {
        chosen = all;
    } else {
        std::vector<std::string> unknown;
        for (const auto& name : order) {
            auto it = std::find_if(all.begin(), all.end(), [&](const GroupMeans& g) { return g.group == name; });
            if (it == all.end()) {
                unknown.push_back(name);
            } else {
                chosen.push_back(*it);
            }
        }
        if (!unknown.empty()) {
            std::string list;
            for (const auto& u : unknown) {
                list += (list.empty() ? "" : ", ") + u;
            }
            throw InputError(fmt::format("plot: groups not in the report: {}", list));
        }
    }
    fs::create_directories(layout.charts_dir());
    write_file(layout.charts_dir() / "trajectory.svg", trajectory_svg(chosen, "Mean scores per group"));
    write_file(layout.charts_dir() / "group_means.svg", group_means_svg(chosen, "Group means"));
    for (const auto& g : chosen) {
        log << fmt::format("{:<16} V {:.4f} N {:.4f} S {:.4f} DC {:.4f}\n", g.group, g.value, g.novelty, g.surprise,
                           g.dc);
    }
    log << fmt::format("charts written to {}\n", layout.charts_dir().string());
}

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log)
{
    std::vector<double> drifts{0.0};
    drifts.insert(drifts.end(), cfg.synth_drifts.begin(), cfg.synth_drifts.end());
    const auto corpora = make_synthetic_eras(cfg.seed, drifts, cfg.synth);

    auto write_corpus = [&](const fs::path& dir, const SyntheticCorpus& corpus, const std::string& era,
                            const std::string& prefix) {
        fs::create_directories(dir / "texts");
        std::vector<ManifestEntry> entries;
        for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
            ManifestEntry e;
            e.id = fmt::format("{}-{:04d}", prefix, i);
            e.path = fmt::format("texts/{}.txt", e.id);
            e.class_name = synthetic_class_name(corpus.labels[i]);
            e.era = era;
            write_file(dir / e.path, corpus.texts[i] + "\n");
            entries.push_back(std::move(e));
        }
        write_manifest(dir / "manifest.jsonl", entries);
        log << fmt::format("{}: {} artifacts, era '{}', drift {}\n", dir.string(), entries.size(), era, corpus.drift);
    };
    write_corpus(out_dir / "context", corpora[0], "context", "ctx");
    std::vector<ManifestEntry> targets;
    for (std::size_t e = 1; e < corpora.size(); ++e) {
        const std::string era = fmt::format("drift-{}", corpora[e].drift);
        const std::string prefix = fmt::format("era{}", e - 1);
        write_corpus(out_dir / "targets" / prefix, corpora[e], era, prefix);
        for (auto entry : read_manifest(out_dir / "targets" / prefix / "manifest.jsonl")) {
            entry.path = prefix + "/" + entry.path;
            targets.push_back(std::move(entry));
        }
    }
    write_manifest(out_dir / "targets" / "manifest.jsonl", targets);
    log << fmt::format("{}: {} target artifacts\n", (out_dir / "targets").string(), targets.size());
}

} // namespace dc::cli
