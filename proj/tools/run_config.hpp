#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dc/corpus.hpp"
#include "dc/measures.hpp"
#include "dc/seqgan.hpp"
#include "dc/synthetic.hpp"

namespace dc::cli {

namespace fs = std::filesystem;

struct SupervisedRegime {
    OptimizerConfig optimizer;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    std::size_t batch_size = 32;
};

struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 0;

    fs::path corpus_dir;
    fs::path manifest;
    fs::path output_dir;

    std::size_t min_count = 1;
    SplitRatios split;
    fs::path embeddings_file;   // optional word vectors

    // vocab_size and max_len are taken from the ingested dataset.
    LmConfig language_model;
    CnnConfig cnn;

    SupervisedRegime surprise_lm;
    SupervisedRegime novelty_classifier;

    SeqGanSchedule gan_schedule;
    OptimizerConfig gan_g_optimizer;
    OptimizerConfig gan_d_optimizer;
    std::size_t gan_eval_samples = 256;

    CreativityWeights weights;
    SurpriseConfig surprise;
    bool normalize_surprise = false;
    std::size_t context_samples = 30;
    // Checkpoint ("best" or "final") score loads for each role.
    std::map<std::string, std::string> checkpoints{
        {"value-gan", "final"}, {"novelty-classifier", "best"}, {"surprise-lm", "best"}};

    SyntheticEraConfig synth;
    std::vector<double> synth_drifts{0.0, 0.4, 0.8};

    void validate() const;
};

// Every key a config file may set, filled with the preset's values.
nlohmann::json preset_json(const std::string& name);

// Reads the file, overlays it on its preset ("preset" key, default desk) and
// resolves relative paths against the file's directory. Unknown keys are
// rejected. A seed given on the command line replaces the file's seed.
RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override);

nlohmann::ordered_json to_json(const RunConfig& cfg);

} // namespace dc::cli
