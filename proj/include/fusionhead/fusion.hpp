#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionhead/embedding.hpp"
#include "fusionhead/feature_store.hpp"
#include "fusionhead/linalg.hpp"

namespace fusionhead {

enum class FusionMode { ProductProb, SumLogit, ConcatHead };

std::string_view to_string(FusionMode mode) noexcept;

/// Fused class scores, n x K. Every row is a distribution.
struct FusedScores {
    Matrix scores;
    FusionMode mode = FusionMode::ProductProb;
};

struct Prediction {
    std::vector<int> labels;
    std::vector<double> confidence;
};

/// Elementwise product of the branch distributions, renormalised per row.
/// Entries are clamped at kProbabilityFloor and each branch row is divided by
/// its maximum before multiplying; neither changes the normalised result.
/// Throws ShapeError on mismatched n or K and DegenerateRowError when a row
/// still underflows to zero.
FusedScores fuse_product(std::span<const BranchOutput> outputs);

/// softmax(sum_i logits_i). Equal to fuse_product of the per-branch softmaxes.
FusedScores fuse_sum_logit(std::span<const Matrix> logits);

/// Wraps a single head's distributions (the concatenation baseline).
FusedScores concat_head_scores(BranchOutput output);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> row) noexcept;

Prediction predict(const FusedScores& fused);

/// Fraction of predictions equal to the label.
double top1_accuracy(std::span<const int> predicted, const LabelVector& truth);

struct ConcatBaseline {
    TrainResult trained;
    FusedScores test_scores;
    Prediction test_prediction;
};

/// Trains one head on the concatenated training features with the same config
/// a branch would get, then scores the concatenated test features.
ConcatBaseline train_concat_baseline(std::span<const BranchDataset> train, const LabelVector& train_labels,
                                     std::span<const BranchDataset> test, const TrainConfig& config);

/// n rows x K columns, 17 significant digits, no header.
std::string format_scores_csv(const Matrix& scores);

}  // namespace fusionhead
