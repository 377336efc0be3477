#include "dc/measures.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <istream>
#include <map>
#include <ostream>

#include "dc/error.hpp"

namespace dc {

void CreativityWeights::validate() const
{
    for (double a : {value, novelty, surprise}) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw InputError(fmt::format("creativity weights must lie in [0, 1], got {}", a));
        }
    }
    if (std::abs(value + novelty + surprise - 1.0) > 1e-9) {
        throw InputError(fmt::format("creativity weights must sum to 1, got {}", value + novelty + surprise));
    }
}

std::string_view to_string(WeightPolicy p)
{
    return p == WeightPolicy::all_trainable ? "all-trainable" : "exclude-embeddings";
}

WeightPolicy parse_weight_policy(std::string_view s)
{
    if (s == "all-trainable") {
        return WeightPolicy::all_trainable;
    }
    if (s == "exclude-embeddings") {
        return WeightPolicy::exclude_embeddings;
    }
    throw InputError(fmt::format("unknown weight policy '{}'", s));
}

void SurpriseConfig::validate() const
{
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw InputError(fmt::format("surprise: eta must be positive, got {}", eta));
    }
    if (!(zero_weight_epsilon > 0.0) || !std::isfinite(zero_weight_epsilon)) {
        throw InputError("surprise: zero_weight_epsilon must be positive");
    }
}

void to_json(nlohmann::json& j, const CreativityWeights& w)
{
    j = nlohmann::json{{"value", w.value}, {"novelty", w.novelty}, {"surprise", w.surprise}};
}

void from_json(const nlohmann::json& j, CreativityWeights& w)
{
    w.value = j.value("value", w.value);
    w.novelty = j.value("novelty", w.novelty);
    w.surprise = j.value("surprise", w.surprise);
}

void to_json(nlohmann::json& j, const SurpriseConfig& c)
{
    j = nlohmann::json{{"eta", c.eta},
                       {"weight_policy", std::string(to_string(c.weight_policy))},
                       {"zero_weight_epsilon", c.zero_weight_epsilon}};
}

void from_json(const nlohmann::json& j, SurpriseConfig& c)
{
    c.eta = j.value("eta", c.eta);
    if (j.contains("weight_policy")) {
        c.weight_policy = parse_weight_policy(j.at("weight_policy").get<std::string>());
    }
    c.zero_weight_epsilon = j.value("zero_weight_epsilon", c.zero_weight_epsilon);
}

// ---------------------------------------------------------------------------

namespace {

void check_artifact_vocab(const Artifact& a, std::uint64_t model_fp, std::string_view what)
{
    if (a.vocab_fingerprint != model_fp) {
        throw IncompatibleError(fmt::format("{}: artifact '{}' encoded with vocabulary {} but model expects {}", what,
                                            a.id, fingerprint_hex(a.vocab_fingerprint), fingerprint_hex(model_fp)));
    }
}

} // namespace

double value(const Artifact& artifact, const ValueDiscriminator& d_v)
{
    check_artifact_vocab(artifact, d_v.vocab_fingerprint(), "value");
    return d_v.score(artifact.tokens);
}

double novelty_upper_bound(std::size_t num_classes)
{
    if (num_classes < 2) {
        throw InputError(fmt::format("novelty needs at least 2 classes, got {}", num_classes));
    }
    const auto n = static_cast<double>(num_classes);
    return std::sqrt(n * (n - 1.0)) / n;
}

double novelty_distance(std::span<const double> y)
{
    const double u = 1.0 / static_cast<double>(y.size());
    double d = 0.0;
    for (double yi : y) {
        d += (u - yi) * (u - yi);
    }
    return std::sqrt(d);
}

double novelty(std::span<const double> y)
{
    const double ub = novelty_upper_bound(y.size());
    for (double yi : y) {
        if (!(yi >= 0.0 && yi <= 1.0)) {
            throw InputError(fmt::format("novelty: {} is not a probability", yi));
        }
    }
    // Rounding can push the distance a hair past the bound.
    return std::clamp(1.0 - novelty_distance(y) / ub, 0.0, 1.0);
}

double novelty(const Artifact& artifact, const NoveltyClassifier& d_n)
{
    check_artifact_vocab(artifact, d_n.vocab_fingerprint(), "novelty");
    return novelty(d_n.class_dist(artifact.tokens));
}

double surprise(std::span<const TokenId> tokens, const NextTokenModel& g_s, const SurpriseConfig& cfg)
{
    cfg.validate();
    if (tokens.empty()) {
        throw InputError("surprise: empty artifact");
    }
    Tape tape;
    Var loss = mean(g_s.token_nll(tape, tokens));
    tape.backward(loss);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& p : g_s.parameters()) {
        if (!p.trainable) {
            continue;
        }
        const bool is_embedding = p.name == "embedding" || p.name.ends_with("/embedding");
        if (cfg.weight_policy == WeightPolicy::exclude_embeddings && is_embedding) {
            continue;
        }
        const auto g = tape.gradient(p);
        const auto w = p.tensor.values();
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (!std::isfinite(g[k])) {
                throw NumericalError(fmt::format("surprise: non-finite gradient for {}[{}]", p.name, k));
            }
            const double dw = -cfg.eta * g[k];
            total += std::abs(dw) / std::max(std::abs(w[k]), cfg.zero_weight_epsilon);
            ++count;
        }
    }
    if (count == 0) {
        throw InputError("surprise: the weight policy selects no parameters");
    }
    const double s = total / static_cast<double>(count);
    if (!std::isfinite(s)) {
        throw NumericalError("surprise: non-finite result");
    }
    return s;
}

double surprise(const Artifact& artifact, const LanguageModel& g_s, const SurpriseConfig& cfg)
{
    check_artifact_vocab(artifact, g_s.vocab_fingerprint(), "surprise");
    return surprise(artifact.tokens, static_cast<const NextTokenModel&>(g_s), cfg);
}

double combine(double v, double n, double s, const CreativityWeights& w)
{
    return w.value * v + w.novelty * n + w.surprise * s;
}

void check_fingerprints(const Scorers& m)
{
    const std::pair<const char*, std::uint64_t> fps[] = {
        {"value discriminator", m.d_v.vocab_fingerprint()},
        {"novelty classifier", m.d_n.vocab_fingerprint()},
        {"surprise language model", m.g_s.vocab_fingerprint()}};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) {
            if (fps[i].second != fps[j].second) {
                throw IncompatibleError(fmt::format("vocabulary mismatch between {} ({}) and {} ({})", fps[i].first,
                                                    fingerprint_hex(fps[i].second), fps[j].first,
                                                    fingerprint_hex(fps[j].second)));
            }
        }
    }
}

namespace {

template <class F>
auto component(const char* name, F&& f)
{
    try {
        return f();
    } catch (const IncompatibleError& e) {
        throw IncompatibleError(fmt::format("{}: {}", name, e.what()));
    } catch (const NumericalError& e) {
        throw NumericalError(fmt::format("{}: {}", name, e.what()));
    } catch (const InputError& e) {
        throw InputError(fmt::format("{}: {}", name, e.what()));
    }
}

} // namespace

ScoreRow deep_creativity(const Artifact& artifact, const Scorers& models, const CreativityWeights& weights,
                         const SurpriseConfig& cfg)
{
    weights.validate();
    check_fingerprints(models);
    ScoreRow row;
    row.id = artifact.id;
    row.era_tag = artifact.era_tag;
    row.value = component("value", [&] { return value(artifact, models.d_v); });
    row.posterior = component("novelty", [&] {
        check_artifact_vocab(artifact, models.d_n.vocab_fingerprint(), "novelty");
        return models.d_n.class_dist(artifact.tokens);
    });
    row.novelty = component("novelty", [&] { return novelty(row.posterior); });
    row.surprise = component("surprise", [&] { return surprise(artifact, models.g_s, cfg); });
    row.dc = combine(row.value, row.novelty, row.surprise, weights);
    if (models.d_v.truncates(artifact.tokens)) {
        row.warnings.push_back(fmt::format("value: truncated from {} to {} tokens", artifact.tokens.size(),
                                           models.d_v.config().max_len));
    }
    if (models.d_n.truncates(artifact.tokens)) {
        row.warnings.push_back(fmt::format("novelty: truncated from {} to {} tokens", artifact.tokens.size(),
                                           models.d_n.config().max_len));
    }
    return row;
}

std::vector<GroupMeans> group_means(std::span<const ScoreRow> rows)
{
    std::vector<GroupMeans> out;
    std::map<std::string, std::size_t> index;
    for (const auto& r : rows) {
        auto [it, fresh] = index.emplace(r.era_tag, out.size());
        if (fresh) {
            out.push_back(GroupMeans{r.era_tag, 0, 0, 0, 0, 0});
        }
        auto& g = out[it->second];
        ++g.count;
        g.value += r.value;
        g.novelty += r.novelty;
        g.surprise += r.surprise;
        g.dc += r.dc;
    }
    for (auto& g : out) {
        const auto n = static_cast<double>(g.count);
        g.value /= n;
        g.novelty /= n;
        g.surprise /= n;
        g.dc /= n;
    }
    return out;
}

CreativityReport batch_report(std::span<const ArtifactGroup> groups, const Scorers& models,
                              const CreativityWeights& weights, const SurpriseConfig& cfg, bool normalize_surprise,
                              std::vector<std::string> class_names)
{
    weights.validate();
    cfg.validate();
    check_fingerprints(models);
    if (groups.empty()) {
        throw InputError("batch_report: no groups to score");
    }
    CreativityReport report;
    report.class_names = std::move(class_names);
    for (const auto& g : groups) {
        if (g.artifacts.empty()) {
            report.warnings.push_back(fmt::format("group '{}' is empty and was skipped", g.name));
            continue;
        }
        for (const auto& a : g.artifacts) {
            ScoreRow row = deep_creativity(a, models, weights, cfg);
            row.era_tag = g.name;
            for (const auto& w : row.warnings) {
                report.warnings.push_back(fmt::format("{}: {}", row.id, w));
            }
            report.rows.push_back(std::move(row));
        }
    }
    if (report.rows.empty()) {
        throw InputError("batch_report: every group is empty");
    }
    if (normalize_surprise) {
        double lo = report.rows.front().surprise, hi = lo;
        for (const auto& r : report.rows) {
            lo = std::min(lo, r.surprise);
            hi = std::max(hi, r.surprise);
        }
        for (auto& r : report.rows) {
            r.surprise = hi > lo ? (r.surprise - lo) / (hi - lo) : 0.0;
            r.dc = combine(r.value, r.novelty, r.surprise, weights);
        }
        report.surprise_normalized = true;
    }
    report.groups = group_means(report.rows);
    return report;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

// Splits one record; quoted fields may span lines.
bool read_record(std::istream& in, std::vector<std::string>& fields)
{
    fields.clear();
    std::string field;
    bool quoted = false, any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) {
        throw InputError("report CSV: unterminated quoted field");
    }
    if (any) {
        fields.push_back(std::move(field));
    }
    return any;
}

double parse_number(const std::string& s, std::size_t line)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw InputError(fmt::format("report CSV line {}: '{}' is not a number", line, s));
    }
}

} // namespace

void write_report_csv(std::ostream& out, const CreativityReport& report)
{
    out << "id,era_tag,V,N,S,DC";
    std::size_t classes = report.class_names.size();
    if (classes == 0 && !report.rows.empty()) {
        classes = report.rows.front().posterior.size();
    }
    for (std::size_t c = 0; c < classes; ++c) {
        out << ',' << csv_field("p_" + (c < report.class_names.size() ? report.class_names[c] : std::to_string(c)));
    }
    out << '\n';
    for (const auto& r : report.rows) {
        if (r.posterior.size() != classes) {
            throw InputError(fmt::format("report row '{}' has {} posteriors, header has {}", r.id, r.posterior.size(),
                                         classes));
        }
        out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}", csv_field(r.id), csv_field(r.era_tag), r.value,
                           r.novelty, r.surprise, r.dc);
        for (double p : r.posterior) {
            out << fmt::format(",{:.17g}", p);
        }
        out << '\n';
    }
}

std::vector<ScoreRow> read_report_csv(std::istream& in)
{
    std::vector<std::string> fields;
    if (!read_record(in, fields)) {
        throw InputError("report CSV: empty file");
    }
    const std::vector<std::string> fixed{"id", "era_tag", "V", "N", "S", "DC"};
    if (fields.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), fields.begin())) {
        throw InputError("report CSV: header must start with id,era_tag,V,N,S,DC");
    }
    for (std::size_t i = fixed.size(); i < fields.size(); ++i) {
        if (!fields[i].starts_with("p_")) {
            throw InputError(fmt::format("report CSV: unexpected column '{}'", fields[i]));
        }
    }
    const std::size_t width = fields.size();
    std::vector<ScoreRow> rows;
    std::size_t line = 1;
    while (read_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && fields[0].empty()) {
            continue;
        }
        if (fields.size() != width) {
            throw InputError(fmt::format("report CSV line {}: expected {} fields, got {}", line, width, fields.size()));
        }
        ScoreRow r;
        r.id = fields[0];
        r.era_tag = fields[1];
        r.value = parse_number(fields[2], line);
        r.novelty = parse_number(fields[3], line);
        r.surprise = parse_number(fields[4], line);
        r.dc = parse_number(fields[5], line);
        for (std::size_t i = fixed.size(); i < width; ++i) {
            r.posterior.push_back(parse_number(fields[i], line));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace dc
