#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace dc::cli {

enum class Role { value_gan, novelty_classifier, surprise_lm };

std::string_view to_string(Role r);
Role parse_role(std::string_view s);

// Output layout under paths.output_dir.
struct Layout {
    fs::path root;

    [[nodiscard]] fs::path dataset_dir() const { return root / "dataset"; }
    [[nodiscard]] fs::path artifacts() const { return dataset_dir() / "artifacts.jsonl"; }
    [[nodiscard]] fs::path vocab() const { return dataset_dir() / "vocab.tsv"; }
    [[nodiscard]] fs::path summary() const { return dataset_dir() / "summary.json"; }
    [[nodiscard]] fs::path model_dir(Role r) const { return root / "models" / std::string(to_string(r)); }
    [[nodiscard]] fs::path reports_dir() const { return root / "reports"; }
    [[nodiscard]] fs::path report_csv() const { return reports_dir() / "report.csv"; }
    [[nodiscard]] fs::path charts_dir() const { return root / "charts"; }
};

void cmd_ingest(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, Role role, std::ostream& log);
void cmd_score(const RunConfig& cfg, const fs::path& targets, std::ostream& log);
// An empty order keeps the groups in the order they first appear.
void cmd_plot(const RunConfig& cfg, const fs::path& report, const std::vector<std::string>& order, std::ostream& log);
// Writes a synthetic context corpus (drift 0) and one target era per
// configured drift level, each with a manifest.
void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log);

} // namespace dc::cli
