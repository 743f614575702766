#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "gnnformer/bundle.hpp"
#include "gnnformer/model.hpp"
#include "gnnformer/training.hpp"

namespace gnnformer::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeError = 1, kConfigError = 2 };

struct SbmSpec {
    SbmParams params;
    Seed seed = 0;
};

/// Everything one experiment needs. Parsed from flat `section.key = value`
/// text; unknown or repeated keys are rejected.
struct ExperimentConfig {
    std::optional<std::filesystem::path> data_path;
    std::optional<SbmSpec> sbm;
    ModelConfig model;
    TrainConfig train;
    std::optional<std::filesystem::path> output_dir;
    std::vector<int> depths{2, 4, 8, 16, 32};
    int gt_layers = 1;

    void validate() const;
};

/// `base_dir` anchors a relative data.path.
ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

std::vector<Seed> parse_seed_list(std::string_view text);
std::vector<int> parse_int_list(std::string_view text);

/// Loads or generates the dataset and adds any split the seeds still need.
GraphBundle materialize_bundle(const ExperimentConfig& config);

/// Writes a generated bundle (with splits for `seeds`) and reports n, edges and homophily.
void cmd_generate(const SbmSpec& spec, std::span<const Seed> seeds, const std::filesystem::path& out,
                  std::ostream& report);
void cmd_train(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_depth(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_baseline_gt(const ExperimentConfig& config, const std::filesystem::path& out);

/// Entry point shared by the executable and tests. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gnnformer::cli
