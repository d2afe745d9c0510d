#include "fusionhead/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <thread>

#include "fusionhead/error.hpp"
#include "fusionhead/io.hpp"
#include "fusionhead/rng.hpp"

namespace fusionhead {

std::size_t thread_budget() {
    const char* env = std::getenv("FUSIONHEAD_THREADS");
    if (env == nullptr || *env == '\0') return std::max(1u, std::thread::hardware_concurrency());
    const std::string_view s(env);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0)
        throw ConfigError("FUSIONHEAD_THREADS must be a positive integer, got \"" + std::string(s) + "\"");
    return v;
}

std::vector<TrainResult> train_branches(std::span<const BranchDataset> branches, const LabelVector& labels,
                                        const TrainConfig& config, std::size_t threads) {
    config.validate();
    std::vector<TrainResult> results(branches.size());
    std::vector<std::exception_ptr> errors(branches.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t b = next++; b < branches.size(); b = next++) {
            try {
                const auto& ds = branches[b];
                BranchModel model = init_branch(ds.name, ds.dim(), static_cast<std::size_t>(labels.num_classes()), config);
                results[b] = train_branch(std::move(model), ds, labels, config);
            } catch (...) {
                errors[b] = std::current_exception();
            }
        }
    };

    const std::size_t pool = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(branches.size(), 1));
    if (pool == 1) {
        worker();
    } else {
        std::vector<std::jthread> workers;
        workers.reserve(pool);
        for (std::size_t t = 0; t < pool; ++t) workers.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

BranchResult score_branch(std::string name, std::span<const int> predicted, const LabelVector& truth,
                          std::vector<double> loss_trace) {
    BranchResult r{std::move(name), top1_accuracy(predicted, truth), 0, std::move(loss_trace)};
    for (std::size_t i = 0; i < predicted.size(); ++i) r.correct += predicted[i] == truth[i];
    return r;
}

ExperimentOutcome run_experiment(std::span<const BranchDataset> train, const LabelVector& train_labels,
                                 std::span<const BranchDataset> test, const LabelVector& test_labels,
                                 const TrainConfig& config, std::size_t threads) {
    const auto start = std::chrono::steady_clock::now();
    if (train.empty() || train.size() != test.size())
        throw ShapeError("experiment needs the same non-empty set of branches for train and test");
    if (train_labels.num_classes() != test_labels.num_classes())
        throw ConfigError("train and test labels disagree on K");
    check_aligned(train);
    check_aligned(test);
    if (test.front().rows() != test_labels.size()) throw ShapeError("test features and labels disagree on n");

    ExperimentOutcome out;
    auto& report = out.report;
    report.num_classes = test_labels.num_classes();
    report.test_samples = test_labels.size();
    report.config = config;

    auto trained = train_branches(train, train_labels, config, threads);
    std::vector<BranchOutput> outputs;
    for (std::size_t b = 0; b < trained.size(); ++b) {
        if (test[b].dim() != trained[b].model.dim())
            throw ShapeError("branch \"" + test[b].name + "\": train and test widths differ");
        outputs.push_back(forward(trained[b].model, test[b].features));
        report.branches.push_back(score_branch(trained[b].model.name, predict(concat_head_scores(outputs.back())).labels,
                                               test_labels, std::move(trained[b].loss_trace)));
        out.models.push_back(std::move(trained[b].model));
    }

    if (train.size() >= 2) {
        auto baseline = train_concat_baseline(train, train_labels, test, config);
        report.concat = score_branch("concat", baseline.test_prediction.labels, test_labels,
                                     std::move(baseline.trained.loss_trace));
        out.concat_model = std::move(baseline.trained.model);

        out.fused_scores = fuse_product(outputs);
        report.fused = score_branch("fused", predict(*out.fused_scores).labels, test_labels);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

namespace {

std::string join_doubles(std::span<const double> values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ',';
        s += io::format_double(values[i]);
    }
    return s;
}

void append_result(std::string& out, const std::string& prefix, const BranchResult& r) {
    out += prefix + ".name=" + r.name + "\n";
    out += prefix + ".accuracy=" + io::format_double(r.accuracy) + "\n";
    out += prefix + ".correct=" + std::to_string(r.correct) + "\n";
    if (!r.loss_trace.empty()) out += prefix + ".loss_trace=" + join_doubles(r.loss_trace) + "\n";
}

}  // namespace

std::string format_report(const ExperimentReport& report) {
    std::string out;
    out += "classes=" + std::to_string(report.num_classes) + "\n";
    out += "test_samples=" + std::to_string(report.test_samples) + "\n";
    out += "branches=" + std::to_string(report.branches.size()) + "\n";
    out += "config.learning_rate=" + io::format_double(report.config.learning_rate) + "\n";
    out += "config.epochs=" + std::to_string(report.config.epochs) + "\n";
    out += "config.batch_size=" + std::to_string(report.config.batch_size) + "\n";
    out += "config.seed=" + std::to_string(report.config.seed) + "\n";
    if (report.config.init_scale) out += "config.init_scale=" + io::format_double(*report.config.init_scale) + "\n";
    for (std::size_t b = 0; b < report.branches.size(); ++b)
        append_result(out, "branch." + std::to_string(b), report.branches[b]);
    if (report.concat) append_result(out, "concat", *report.concat);
    if (report.fused) append_result(out, "fused", *report.fused);
    return out;
}

std::string format_accuracy_csv(const ExperimentReport& report) {
    std::string out = "method,accuracy,correct,total\n";
    auto row = [&](const BranchResult& r) {
        out += r.name + "," + io::format_double(r.accuracy) + "," + std::to_string(r.correct) + "," +
               std::to_string(report.test_samples) + "\n";
    };
    for (const auto& b : report.branches) row(b);
    if (report.concat) row(*report.concat);
    if (report.fused) row(*report.fused);
    return out;
}

std::string format_report_table(const ExperimentReport& report) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %10s %12s\n", "method", "top-1 (%)", "correct");
    out += line;
    auto row = [&](const std::string& label, const BranchResult& r) {
        std::snprintf(line, sizeof line, "%-24s %10.2f %6zu/%-6zu\n", label.c_str(), 100.0 * r.accuracy, r.correct,
                      report.test_samples);
        out += line;
    };
    for (const auto& b : report.branches) row("branch " + b.name, b);
    if (report.concat) row("concat baseline", *report.concat);
    if (report.fused) row("fused (product)", *report.fused);
    return out;
}

double relative_error(double analytic, double numeric) noexcept {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
    return std::abs(analytic - numeric) / denom;
}

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
    Rng rng(derive_seed(options.seed, 0x9c));
    GradcheckResult result;
    const double h = options.step;
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
        const std::size_t p = 1 + rng.below(options.max_dim);
        const std::size_t k = 2 + rng.below(options.max_classes - 1);
        const std::size_t n = 1 + rng.below(options.max_samples);

        BranchModel model{"gradcheck", Matrix(p, k), Vector(k)};
        for (double& w : model.weights.values()) w = rng.uniform(-1.0, 1.0);
        for (double& b : model.bias.values()) b = rng.uniform(-1.0, 1.0);
        Matrix x(n, p);
        for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
        std::vector<int> labels(n);
        for (int& l : labels) l = static_cast<int>(rng.below(k));
        const Matrix targets = one_hot(labels, k);

        Gradients g = loss_and_gradients(model, x, targets);
        for (double& v : g.weights.values()) v += options.inject_bug;

        auto central = [&](double& param) {
            const double saved = param;
            param = saved + h;
            const double up = mean_loss(model, x, targets);
            param = saved - h;
            const double down = mean_loss(model, x, targets);
            param = saved;
            return (up - down) / (2.0 * h);
        };
        auto w = model.weights.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            result.max_relative_error =
                std::max(result.max_relative_error, relative_error(g.weights.values()[i], central(w[i])));
            ++result.entries;
        }
        for (std::size_t j = 0; j < k; ++j) {
            result.max_relative_error = std::max(result.max_relative_error, relative_error(g.bias[j], central(model.bias[j])));
            ++result.entries;
        }
        ++result.trials;
    }
    result.passed = result.max_relative_error <= options.tolerance;
    return result;
}

}  // namespace fusionhead
