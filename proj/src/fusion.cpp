#include "fusionhead/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "fusionhead/error.hpp"
#include "fusionhead/io.hpp"

namespace fusionhead {

std::string_view to_string(FusionMode mode) noexcept {
    switch (mode) {
        case FusionMode::ProductProb: return "product-prob";
        case FusionMode::SumLogit: return "sum-logit";
        case FusionMode::ConcatHead: return "concat-head";
    }
    return "unknown";
}

FusedScores fuse_product(std::span<const BranchOutput> outputs) {
    if (outputs.empty()) throw ShapeError("fuse_product: no branches");
    const std::size_t n = outputs.front().probs.rows();
    const std::size_t k = outputs.front().probs.cols();
    for (const auto& o : outputs) {
        if (o.probs.cols() != k) throw ShapeError("fuse_product: branches disagree on K");
        if (o.probs.rows() != n) throw ShapeError("fuse_product: branches disagree on n");
    }

    FusedScores fused{Matrix(n, k, 1.0), FusionMode::ProductProb};
    for (const auto& o : outputs) {
        for (std::size_t i = 0; i < n; ++i) {
            auto src = o.probs.row(i);
            auto dst = fused.scores.row(i);
            double mx = kProbabilityFloor;
            for (double p : src) mx = std::max(mx, p);
            for (std::size_t j = 0; j < k; ++j) dst[j] *= std::max(src[j], kProbabilityFloor) / mx;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto row = fused.scores.row(i);
        double sum = 0.0;
        for (double v : row) sum += v;
        if (!(sum > 0.0) || !std::isfinite(sum))
            throw DegenerateRowError("fuse_product: row " + std::to_string(i) + " underflowed to zero");
        for (double& v : row) v /= sum;
    }
    return fused;
}

FusedScores fuse_sum_logit(std::span<const Matrix> logits) {
    if (logits.empty()) throw ShapeError("fuse_sum_logit: no branches");
    Matrix total = logits.front();
    for (std::size_t b = 1; b < logits.size(); ++b) {
        if (logits[b].rows() != total.rows() || logits[b].cols() != total.cols())
            throw ShapeError("fuse_sum_logit: branch " + std::to_string(b) + " shape mismatch");
        auto dst = total.values();
        auto src = logits[b].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    return {softmax_rows(total), FusionMode::SumLogit};
}

FusedScores concat_head_scores(BranchOutput output) {
    return {std::move(output.probs), FusionMode::ConcatHead};
}

std::size_t argmax(std::span<const double> row) noexcept {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

Prediction predict(const FusedScores& fused) {
    Prediction p;
    const std::size_t n = fused.scores.rows();
    p.labels.reserve(n);
    p.confidence.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = fused.scores.row(i);
        const std::size_t j = argmax(row);
        p.labels.push_back(static_cast<int>(j));
        p.confidence.push_back(row.empty() ? 0.0 : row[j]);
    }
    return p;
}

double top1_accuracy(std::span<const int> predicted, const LabelVector& truth) {
    if (predicted.size() != truth.size())
        throw ShapeError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == truth[i];
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

ConcatBaseline train_concat_baseline(std::span<const BranchDataset> train, const LabelVector& train_labels,
                                     std::span<const BranchDataset> test, const TrainConfig& config) {
    const BranchDataset train_concat = concat_features(train);
    const BranchDataset test_concat = concat_features(test);
    if (train_concat.dim() != test_concat.dim())
        throw ShapeError("concat baseline: train and test feature widths differ");
    BranchModel model =
        init_branch("concat", train_concat.dim(), static_cast<std::size_t>(train_labels.num_classes()), config);
    ConcatBaseline out;
    out.trained = train_branch(std::move(model), train_concat, train_labels, config);
    out.test_scores = concat_head_scores(forward(out.trained.model, test_concat.features));
    out.test_prediction = predict(out.test_scores);
    return out;
}

std::string format_scores_csv(const Matrix& scores) {
    std::string out;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto row = scores.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ',';
            out += io::format_double(row[j]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace fusionhead
