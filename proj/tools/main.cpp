#include <CLI11.hpp>

#include <iostream>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "dc/error.hpp"

namespace {

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;
constexpr int kIncompatible = 4;

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty() || !out.empty()) {
        out.push_back(cur);
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    using namespace dc::cli;

    CLI::App app{"DeepCreativity: train value, novelty and surprise models on a context corpus and score artifacts"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed, "64-bit seed; overrides the config's seed");
    };

    auto* ingest = app.add_subcommand("ingest", "Tokenize the corpus, build the vocabulary and split the dataset");
    common(ingest);

    std::string role;
    auto* train = app.add_subcommand("train", "Train one model role on the ingested dataset");
    common(train);
    train->add_option("--role", role, "value-gan, novelty-classifier or surprise-lm")
        ->required()
        ->check(CLI::IsMember({"value-gan", "novelty-classifier", "surprise-lm"}));

    std::string targets;
    auto* score = app.add_subcommand("score", "Score target artifacts plus a sample of the context");
    common(score);
    score->add_option("--targets", targets, "Manifest of artifacts to score")->required();

    std::string order;
    std::string report;
    auto* plot = app.add_subcommand("plot", "Draw group-mean charts from a report");
    common(plot);
    plot->add_option("--order", order, "Comma-separated group order for the x-axis");
    plot->add_option("--report", report, "Report CSV (default: the score output)");

    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Write synthetic context and era corpora");
    common(synth);
    synth->add_option("--out", synth_out, "Output directory")->required();

    auto* show = app.add_subcommand("show-config", "Print the resolved configuration");
    common(show);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kInputError;
    }

    try {
        const RunConfig cfg = load_run_config(config_path, seed);
        if (*ingest) {
            cmd_ingest(cfg, std::cout);
        } else if (*train) {
            cmd_train(cfg, parse_role(role), std::cout);
        } else if (*score) {
            cmd_score(cfg, targets, std::cout);
        } else if (*plot) {
            cmd_plot(cfg, report, split_list(order), std::cout);
        } else if (*synth) {
            cmd_synth(cfg, synth_out, std::cout);
        } else if (*show) {
            std::cout << to_json(cfg).dump(2) << '\n';
        }
    } catch (const dc::IncompatibleError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIncompatible;
    } catch (const dc::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumericalError;
    } catch (const dc::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
