#include "fusionhead/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusionhead/error.hpp"
#include "fusionhead/rng.hpp"

namespace fusionhead {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x5ff1e;

void softmax_into(std::span<const double> z, std::span<double> out) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        out[j] = std::exp(z[j] - mx);
        sum += out[j];
    }
    for (double& v : out) v /= sum;
}

void check_batch(const BranchModel& model, const Matrix& x) {
    if (x.cols() != model.dim()) {
        throw ShapeError("branch \"" + model.name + "\" expects " + std::to_string(model.dim()) +
                         " features, batch has " + std::to_string(x.cols()));
    }
}

void check_targets(const BranchModel& model, const Matrix& x, const Matrix& targets) {
    check_batch(model, x);
    if (targets.rows() != x.rows() || targets.cols() != model.num_classes()) {
        throw ShapeError("targets " + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) +
                         " do not match batch of " + std::to_string(x.rows()) + " and K=" +
                         std::to_string(model.num_classes()));
    }
    if (x.rows() == 0) throw ShapeError("empty batch");
}

}  // namespace

void TrainConfig::validate() const {
    if (!std::isfinite(learning_rate) || learning_rate < 0.0)
        throw ConfigError("learning rate must be a finite non-negative number");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (init_scale && !(std::isfinite(*init_scale) && *init_scale > 0.0))
        throw ConfigError("init scale must be positive");
}

double TrainConfig::init_scale_for(std::size_t dim) const {
    return init_scale ? *init_scale : 1.0 / std::sqrt(static_cast<double>(dim));
}

Vector softmax(std::span<const double> logits) {
    Vector out(logits.size());
    if (!logits.empty()) softmax_into(logits, out.values());
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) softmax_into(logits.row(i), out.row(i));
    return out;
}

double cross_entropy(std::span<const double> probs, std::span<const double> target) {
    if (probs.size() != target.size())
        throw ShapeError("cross_entropy: " + std::to_string(probs.size()) + " probabilities vs " +
                         std::to_string(target.size()) + " targets");
    std::size_t hot = target.size();
    for (std::size_t j = 0; j < target.size(); ++j) {
        if (target[j] == 1.0 && hot == target.size()) {
            hot = j;
        } else if (target[j] != 0.0) {
            throw ValidationError("cross_entropy: target is not one-hot");
        }
    }
    if (hot == target.size()) throw ValidationError("cross_entropy: target is not one-hot");
    return -std::log(std::max(probs[hot], kProbabilityFloor));
}

Matrix one_hot(std::span<const int> labels, std::size_t num_classes) {
    Matrix t(labels.size(), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            throw ValidationError("label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        t(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return t;
}

BranchModel init_branch(std::string name, std::size_t dim, std::size_t num_classes, const TrainConfig& config) {
    if (dim == 0 || num_classes < 2) throw ShapeError("branch head needs p > 0 and K >= 2");
    config.validate();
    const double scale = config.init_scale_for(dim);
    Rng rng(derive_seed(config.seed, kInitStream));
    BranchModel model{std::move(name), Matrix(dim, num_classes), Vector(num_classes)};
    for (double& w : model.weights.values()) w = rng.uniform(-scale, scale);
    return model;
}

Matrix logits(const BranchModel& model, const Matrix& x) {
    check_batch(model, x);
    return add_bias(matmul(x, model.weights), model.bias);
}

BranchOutput forward(const BranchModel& model, const Matrix& x) {
    return {softmax_rows(logits(model, x))};
}

Gradients loss_and_gradients(const BranchModel& model, const Matrix& x, const Matrix& targets) {
    check_targets(model, x, targets);
    const double n = static_cast<double>(x.rows());
    Matrix diff = forward(model, x).probs;
    double loss = 0.0;
    for (std::size_t i = 0; i < diff.rows(); ++i) {
        loss += cross_entropy(diff.row(i), targets.row(i));
        auto d = diff.row(i);
        auto t = targets.row(i);
        for (std::size_t j = 0; j < d.size(); ++j) d[j] -= t[j];
    }

    Gradients g{loss / n, matmul(transpose(x), diff), Vector(model.num_classes())};
    for (double& v : g.weights.values()) v /= n;
    for (std::size_t i = 0; i < diff.rows(); ++i) {
        auto d = diff.row(i);
        for (std::size_t j = 0; j < d.size(); ++j) g.bias[j] += d[j];
    }
    for (double& v : g.bias.values()) v /= n;
    return g;
}

double mean_loss(const BranchModel& model, const Matrix& x, const Matrix& targets) {
    check_targets(model, x, targets);
    const Matrix probs = forward(model, x).probs;
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) loss += cross_entropy(probs.row(i), targets.row(i));
    return loss / static_cast<double>(probs.rows());
}

void sgd_step(BranchModel& model, const Gradients& grads, double learning_rate) {
    if (grads.weights.rows() != model.weights.rows() || grads.weights.cols() != model.weights.cols() ||
        grads.bias.size() != model.bias.size())
        throw ShapeError("gradient shapes do not match branch \"" + model.name + "\"");
    if (!all_finite(grads.weights.values()) || !all_finite(grads.bias.values()))
        throw DivergenceError("branch \"" + model.name + "\": non-finite gradient");
    auto w = model.weights.values();
    auto dw = grads.weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * dw[i];
    for (std::size_t j = 0; j < model.bias.size(); ++j) model.bias[j] -= learning_rate * grads.bias[j];
    if (!all_finite(model.weights.values()) || !all_finite(model.bias.values()))
        throw DivergenceError("branch \"" + model.name + "\": parameters became non-finite");
}

TrainResult train_branch(BranchModel model, const BranchDataset& data, const LabelVector& labels,
                         const TrainConfig& config) {
    config.validate();
    if (data.rows() != labels.size())
        throw ShapeError("branch \"" + data.name + "\" has " + std::to_string(data.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
    if (data.dim() != model.dim())
        throw ShapeError("branch \"" + data.name + "\" has p=" + std::to_string(data.dim()) +
                         ", model expects " + std::to_string(model.dim()));
    if (static_cast<std::size_t>(labels.num_classes()) != model.num_classes())
        throw ShapeError("labels have K=" + std::to_string(labels.num_classes()) + ", model has K=" +
                         std::to_string(model.num_classes()));

    const Matrix targets = one_hot(labels.values(), model.num_classes());
    const std::size_t n = data.rows();
    const std::size_t batch = std::min(config.batch_size, n);

    auto checked_loss = [&](std::size_t epoch) {
        const double loss = mean_loss(model, data.features, targets);
        if (!std::isfinite(loss))
            throw DivergenceError("branch \"" + model.name + "\" diverged at epoch " + std::to_string(epoch) +
                                  " (non-finite loss)");
        return loss;
    };

    TrainResult result;
    result.loss_trace.reserve(config.epochs + 1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, kShuffleStream));

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        result.loss_trace.push_back(checked_loss(epoch));
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < n; start += batch) {
            const std::span<const std::size_t> idx(order.data() + start, std::min(batch, n - start));
            const Matrix xb = data.features.select_rows(idx);
            const Matrix tb = targets.select_rows(idx);
            try {
                sgd_step(model, loss_and_gradients(model, xb, tb), config.learning_rate);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
            }
        }
    }
    result.loss_trace.push_back(checked_loss(config.epochs));
    result.model = std::move(model);
    return result;
}

}  // namespace fusionhead
