#pragma once

#include <iosfwd>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "dc/cnn.hpp"
#include "dc/corpus.hpp"
#include "dc/lm.hpp"

namespace dc {

struct CreativityWeights {
    double value = 1.0 / 3.0;
    double novelty = 1.0 / 3.0;
    double surprise = 1.0 / 3.0;

    void validate() const;   // each in [0, 1], sum 1 within 1e-9
};

enum class WeightPolicy { all_trainable, exclude_embeddings };

std::string_view to_string(WeightPolicy p);
WeightPolicy parse_weight_policy(std::string_view s);

struct SurpriseConfig {
    double eta = 1.0;
    WeightPolicy weight_policy = WeightPolicy::all_trainable;
    double zero_weight_epsilon = 1e-8;

    void validate() const;
};

void to_json(nlohmann::json& j, const CreativityWeights& w);
void from_json(const nlohmann::json& j, CreativityWeights& w);
void to_json(nlohmann::json& j, const SurpriseConfig& c);
void from_json(const nlohmann::json& j, SurpriseConfig& c);

// ---------------------------------------------------------------------------
// Value

// The discriminator's eval-mode score. The artifact must be encoded with the
// discriminator's vocabulary.
double value(const Artifact& artifact, const ValueDiscriminator& d_v);

// ---------------------------------------------------------------------------
// Novelty

// sqrt(N (N - 1)) / N: the distance from the uniform vector to a one-hot one.
double novelty_upper_bound(std::size_t num_classes);
// Euclidean distance between y and the uniform vector.
double novelty_distance(std::span<const double> y);
// 1 - distance / upper bound. Rejects fewer than two classes.
double novelty(std::span<const double> y);
double novelty(const Artifact& artifact, const NoveltyClassifier& d_n);

// ---------------------------------------------------------------------------
// Surprise

// Mean over the selected weights of |dw| / max(|w|, eps), where
// dw = -eta * mean_k dJ_k/dw and J_k is the teacher-forced NLL of token k.
// One backward pass on a private tape; the model is not modified.
double surprise(std::span<const TokenId> tokens, const NextTokenModel& g_s, const SurpriseConfig& cfg);
double surprise(const Artifact& artifact, const LanguageModel& g_s, const SurpriseConfig& cfg);

// ---------------------------------------------------------------------------
// Combined score and reports

double combine(double v, double n, double s, const CreativityWeights& w);

struct ScoreRow {
    std::string id;
    std::string era_tag;
    double value = 0.0;
    double novelty = 0.0;
    double surprise = 0.0;
    double dc = 0.0;
    std::vector<double> posterior;
    std::vector<std::string> warnings;
};

struct Scorers {
    const ValueDiscriminator& d_v;
    const NoveltyClassifier& d_n;
    const LanguageModel& g_s;
};

// Rejects scorers trained on different vocabularies, naming the pair.
void check_fingerprints(const Scorers& models);

ScoreRow deep_creativity(const Artifact& artifact, const Scorers& models, const CreativityWeights& weights,
                         const SurpriseConfig& cfg);

struct GroupMeans {
    std::string group;
    std::size_t count = 0;
    double value = 0.0;
    double novelty = 0.0;
    double surprise = 0.0;
    double dc = 0.0;
};

struct ArtifactGroup {
    std::string name;
    std::vector<Artifact> artifacts;
};

struct CreativityReport {
    std::vector<ScoreRow> rows;
    std::vector<GroupMeans> groups;
    std::vector<std::string> warnings;
    bool surprise_normalized = false;
    std::vector<std::string> class_names;
};

// Arithmetic means per era_tag, in order of first appearance.
std::vector<GroupMeans> group_means(std::span<const ScoreRow> rows);

// Scores every artifact, tagging rows with their group's name. Empty groups
// are skipped with a warning. With normalize_surprise, S is min-max scaled
// across the whole batch and DC recomputed.
CreativityReport batch_report(std::span<const ArtifactGroup> groups, const Scorers& models,
                              const CreativityWeights& weights, const SurpriseConfig& cfg, bool normalize_surprise,
                              std::vector<std::string> class_names = {});

// id, era_tag, V, N, S, DC, p_<class>... with values printed at full
// precision.
void write_report_csv(std::ostream& out, const CreativityReport& report);
// Parses rows written by write_report_csv (posteriors included).
std::vector<ScoreRow> read_report_csv(std::istream& in);

} // namespace dc
