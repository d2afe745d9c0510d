#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusionhead/feature_store.hpp"
#include "fusionhead/linalg.hpp"

namespace fusionhead {

/// Probabilities are clamped to this floor before taking logs or multiplying.
inline constexpr double kProbabilityFloor = 1e-300;

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    // Half-width of the uniform weight initialisation; 1/sqrt(p) when unset.
    std::optional<double> init_scale;

    // Throws ConfigError. A zero learning rate is accepted (it freezes the
    // initialisation); negative or non-finite rates are not.
    void validate() const;
    double init_scale_for(std::size_t dim) const;
};

/// Linear softmax head of one branch: logits = x W + b.
struct BranchModel {
    std::string name;
    Matrix weights;  // p x K
    Vector bias;     // K

    std::size_t dim() const noexcept { return weights.rows(); }
    std::size_t num_classes() const noexcept { return weights.cols(); }
};

/// Per-sample class distributions, n x K.
struct BranchOutput {
    Matrix probs;
};

struct Gradients {
    double loss = 0.0;  // mean cross-entropy over the batch
    Matrix weights;
    Vector bias;
};

struct TrainResult {
    BranchModel model;
    // loss_trace[e] is the mean training loss before epoch e's updates;
    // the last entry is the loss after the final epoch.
    std::vector<double> loss_trace;
};

/// Max-subtracted softmax.
Vector softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

/// -sum_j t_j log(max(y_j, floor)). Throws ValidationError unless t is one-hot.
double cross_entropy(std::span<const double> probs, std::span<const double> target);

Matrix one_hot(std::span<const int> labels, std::size_t num_classes);

/// Zero biases, weights uniform in [-s, s] drawn from the config seed.
BranchModel init_branch(std::string name, std::size_t dim, std::size_t num_classes, const TrainConfig& config);

Matrix logits(const BranchModel& model, const Matrix& x);
BranchOutput forward(const BranchModel& model, const Matrix& x);

/// Mean cross-entropy and its analytic gradients, dW = x^T (y - t) / n and
/// db = mean(y - t).
Gradients loss_and_gradients(const BranchModel& model, const Matrix& x, const Matrix& targets);

/// Mean cross-entropy only, computed from forward() without the gradient path.
double mean_loss(const BranchModel& model, const Matrix& x, const Matrix& targets);

/// W -= lr dW, b -= lr db. Throws DivergenceError naming the branch if the
/// gradients or the updated parameters are not finite.
void sgd_step(BranchModel& model, const Gradients& grads, double learning_rate);

/// Mini-batch gradient descent; batches are drawn from a per-epoch shuffle
/// seeded by config.seed.
TrainResult train_branch(BranchModel model, const BranchDataset& data, const LabelVector& labels,
                         const TrainConfig& config);

}  // namespace fusionhead
