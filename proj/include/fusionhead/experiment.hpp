#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusionhead/embedding.hpp"
#include "fusionhead/feature_store.hpp"
#include "fusionhead/fusion.hpp"

namespace fusionhead {

struct BranchResult {
    std::string name;
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::vector<double> loss_trace;
};

/// Top-1 comparison of single branches, the concatenation baseline and the
/// product fusion on one test set.
struct ExperimentReport {
    int num_classes = 0;
    std::size_t test_samples = 0;
    std::vector<BranchResult> branches;
    std::optional<BranchResult> concat;
    std::optional<BranchResult> fused;  // present iff there are >= 2 branches
    TrainConfig config;
    double wall_seconds = 0.0;
};

struct ExperimentOutcome {
    ExperimentReport report;
    std::vector<BranchModel> models;
    std::optional<BranchModel> concat_model;
    std::optional<FusedScores> fused_scores;
};

/// Reads FUSIONHEAD_THREADS; falls back to the hardware concurrency.
/// Throws ConfigError on a malformed value.
std::size_t thread_budget();

/// Trains an independent head per branch, at most `threads` at a time. The
/// results do not depend on the thread count.
std::vector<TrainResult> train_branches(std::span<const BranchDataset> branches, const LabelVector& labels,
                                        const TrainConfig& config, std::size_t threads);

BranchResult score_branch(std::string name, std::span<const int> predicted, const LabelVector& truth,
                          std::vector<double> loss_trace = {});

/// Trains every branch and the concatenation baseline on the training set and
/// evaluates all of them plus the fused classifier on the test set.
ExperimentOutcome run_experiment(std::span<const BranchDataset> train, const LabelVector& train_labels,
                                 std::span<const BranchDataset> test, const LabelVector& test_labels,
                                 const TrainConfig& config, std::size_t threads = 1);

/// Flat key=value text. Excludes wall-clock time, so identical runs give
/// identical bytes.
std::string format_report(const ExperimentReport& report);
/// method,accuracy,correct,total
std::string format_accuracy_csv(const ExperimentReport& report);
/// Human-readable comparison table.
std::string format_report_table(const ExperimentReport& report);

struct GradcheckOptions {
    std::size_t trials = 20;
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-6;
    // Test hook: added to every analytic dW entry so the check must fail.
    double inject_bug = 0.0;
    std::size_t max_dim = 5;
    std::size_t max_classes = 4;
    std::size_t max_samples = 6;
};

struct GradcheckResult {
    std::size_t trials = 0;
    std::size_t entries = 0;
    double max_relative_error = 0.0;
    bool passed = false;
};

/// Relative error |a - b| / max(|a|, |b|, kGradcheckFloor).
inline constexpr double kGradcheckFloor = 1e-6;
double relative_error(double analytic, double numeric) noexcept;

/// Compares analytic gradients against central differences of mean_loss on
/// random small instances.
GradcheckResult run_gradcheck(const GradcheckOptions& options);

}  // namespace fusionhead
