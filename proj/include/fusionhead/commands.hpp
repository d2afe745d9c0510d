#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fusionhead/embedding.hpp"
#include "fusionhead/experiment.hpp"
#include "fusionhead/feature_store.hpp"

// Subcommand implementations behind the fusionhead CLI. Each returns the
// process exit code; library errors propagate as fusionhead::Error.
namespace fusionhead::cli {

struct SynthOptions {
    int classes = 4;
    std::size_t per_class = 500;
    std::vector<std::string> branches;  // "dim:c1,c2,..."
    double noise = 1.0;
    double signal = 3.0;
    std::uint64_t seed = 0;
    std::filesystem::path out;
};

struct DataOptions {
    std::vector<std::filesystem::path> features;
    std::filesystem::path labels;
    // When set, a stratified split is drawn with `seed`: train uses the first
    // part (this fraction), eval the remainder.
    std::optional<double> holdout_train_fraction;
    bool l2_normalize = false;
};

struct TrainOptions {
    DataOptions data;
    TrainConfig config;
    bool full_batch = false;
    std::size_t threads = 1;
    std::filesystem::path out;
};

struct EvalOptions {
    DataOptions data;
    std::uint64_t seed = 0;  // split seed when holdout is set
    std::vector<std::filesystem::path> models;
    std::optional<std::filesystem::path> concat_model;
    std::optional<std::filesystem::path> out;
};

struct ExportOptions {
    DataOptions data;
    std::uint64_t seed = 0;
    std::vector<std::filesystem::path> models;
    FusionMode mode = FusionMode::ProductProb;
    std::filesystem::path out;
};

/// Parses "dim:c1,c2"; an empty class list is allowed.
SyntheticBranch parse_branch_spec(const std::string& text, double signal, double noise);

int run_synth(const SynthOptions& options, std::ostream& log);
int run_train(const TrainOptions& options, std::ostream& log);
int run_eval(const EvalOptions& options, std::ostream& log);
int run_export_scores(const ExportOptions& options, std::ostream& log);
int run_gradcheck_command(const GradcheckOptions& options, std::ostream& log);

FusionMode parse_fusion_mode(const std::string& text);

}  // namespace fusionhead::cli
