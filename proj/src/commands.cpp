#include "fusionhead/commands.hpp"

#include <charconv>
#include <cstdio>
#include <ostream>
#include <set>

#include "fusionhead/checkpoint.hpp"
#include "fusionhead/error.hpp"
#include "fusionhead/fusion.hpp"
#include "fusionhead/io.hpp"

namespace fusionhead::cli {

namespace {

struct LoadedData {
    std::vector<BranchDataset> branches;
    LabelVector labels;
};

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Loads aligned branches and labels, optionally restricted to one side of the
// stratified split.
LoadedData load_data(const DataOptions& opts, std::uint64_t seed, bool train_side) {
    if (opts.features.empty()) throw ConfigError("at least one --features file is required");
    LoadedData d;
    std::set<std::string> names;
    for (const auto& path : opts.features) {
        BranchDataset ds = load_features(path);
        if (opts.l2_normalize) ds = l2_normalize_rows(std::move(ds));
        if (!names.insert(ds.name).second)
            throw ConfigError("two feature files share the branch name \"" + ds.name + "\"");
        d.branches.push_back(std::move(ds));
    }
    check_aligned(d.branches);
    d.labels = load_labels(opts.labels);
    if (d.labels.size() != d.branches.front().rows())
        throw ShapeError(opts.labels.string() + " has " + std::to_string(d.labels.size()) + " labels, features have " +
                         std::to_string(d.branches.front().rows()) + " rows");
    if (opts.holdout_train_fraction) {
        const Split split = split_train_test(d.labels, *opts.holdout_train_fraction, seed);
        const auto& idx = train_side ? split.train : split.test;
        for (auto& b : d.branches) b = select_rows(b, idx);
        d.labels = d.labels.select(idx);
    }
    return d;
}

std::vector<Checkpoint> load_models(const std::vector<std::filesystem::path>& paths, const LoadedData& data) {
    if (paths.size() != data.branches.size())
        throw ConfigError(std::to_string(paths.size()) + " models given for " + std::to_string(data.branches.size()) +
                          " feature files");
    std::vector<Checkpoint> models;
    for (std::size_t b = 0; b < paths.size(); ++b) {
        Checkpoint c = load_checkpoint(paths[b]);
        if (c.model.num_classes() != static_cast<std::size_t>(data.labels.num_classes()))
            throw ConfigError(paths[b].string() + ": model has K=" + std::to_string(c.model.num_classes()) +
                              ", labels have K=" + std::to_string(data.labels.num_classes()));
        if (c.model.dim() != data.branches[b].dim())
            throw ConfigError(paths[b].string() + ": model expects p=" + std::to_string(c.model.dim()) +
                              ", features have p=" + std::to_string(data.branches[b].dim()));
        models.push_back(std::move(c));
    }
    return models;
}

void warn_missing_classes(const LabelVector& labels, std::ostream& log) {
    for (int c : labels.missing_classes()) log << "warning: class " << c << " has no training samples\n";
}

}  // namespace

SyntheticBranch parse_branch_spec(const std::string& text, double signal, double noise) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw SpecError("branch spec \"" + text + "\" must look like dim:c1,c2");
    SyntheticBranch b;
    b.signal = signal;
    b.noise = noise;
    const std::string dim = text.substr(0, colon);
    auto [ptr, ec] = std::from_chars(dim.data(), dim.data() + dim.size(), b.dim);
    if (ec != std::errc() || ptr != dim.data() + dim.size() || b.dim == 0)
        throw SpecError("branch spec \"" + text + "\": bad dimension");
    std::string_view rest = std::string_view(text).substr(colon + 1);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view item = rest.substr(0, comma);
        int c = 0;
        auto [p2, ec2] = std::from_chars(item.data(), item.data() + item.size(), c);
        if (ec2 != std::errc() || p2 != item.data() + item.size())
            throw SpecError("branch spec \"" + text + "\": bad class \"" + std::string(item) + "\"");
        b.informative.push_back(c);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return b;
}

FusionMode parse_fusion_mode(const std::string& text) {
    if (text == "product" || text == "product-prob") return FusionMode::ProductProb;
    if (text == "sum-logit") return FusionMode::SumLogit;
    if (text == "concat" || text == "concat-head") return FusionMode::ConcatHead;
    throw ConfigError("unknown fusion mode \"" + text + "\"");
}

int run_synth(const SynthOptions& options, std::ostream& log) {
    SyntheticSpec spec;
    spec.num_classes = options.classes;
    spec.per_class = options.per_class;
    spec.seed = options.seed;
    for (const auto& b : options.branches) spec.branches.push_back(parse_branch_spec(b, options.signal, options.noise));
    const SyntheticData data = generate_synthetic(spec);

    ensure_dir(options.out);
    for (const auto& b : data.branches) write_features(options.out / (b.name + ".mbff"), b);
    write_labels(options.out / "labels.txt", data.labels);

    std::string echo;
    echo += "classes=" + std::to_string(spec.num_classes) + "\n";
    echo += "per_class=" + std::to_string(spec.per_class) + "\n";
    echo += "signal=" + io::format_double(options.signal) + "\n";
    echo += "noise=" + io::format_double(options.noise) + "\n";
    echo += "seed=" + std::to_string(spec.seed) + "\n";
    for (std::size_t b = 0; b < options.branches.size(); ++b)
        echo += "branch." + std::to_string(b) + "=" + options.branches[b] + "\n";
    io::write_file_atomic(options.out / "spec.txt", echo);

    log << "wrote " << data.branches.size() << " branches, " << data.labels.size() << " samples to "
        << options.out.string() << "\n";
    return 0;
}

int run_train(const TrainOptions& options, std::ostream& log) {
    LoadedData data = load_data(options.data, options.config.seed, true);
    warn_missing_classes(data.labels, log);
    TrainConfig config = options.config;
    if (options.full_batch) config.batch_size = data.labels.size();
    config.validate();

    ensure_dir(options.out);
    auto trained = train_branches(data.branches, data.labels, config, options.threads);
    std::string report;
    for (std::size_t b = 0; b < trained.size(); ++b) {
        const auto& t = trained[b];
        save_checkpoint(options.out / (t.model.name + ".mbfm"), {t.model, config, t.loss_trace});
        report += "branch." + std::to_string(b) + ".name=" + t.model.name + "\n";
        report += "branch." + std::to_string(b) + ".final_loss=" + io::format_double(t.loss_trace.back()) + "\n";
        log << "branch " << t.model.name << ": loss " << t.loss_trace.front() << " -> " << t.loss_trace.back() << "\n";
    }
    if (data.branches.size() >= 2) {
        const BranchDataset concat = concat_features(data.branches);
        auto t = train_branch(init_branch("concat", concat.dim(), static_cast<std::size_t>(data.labels.num_classes()), config),
                              concat, data.labels, config);
        save_checkpoint(options.out / "concat.mbfm", {t.model, config, t.loss_trace});
        report += "concat.final_loss=" + io::format_double(t.loss_trace.back()) + "\n";
        log << "concat baseline: loss " << t.loss_trace.front() << " -> " << t.loss_trace.back() << "\n";
    }
    io::write_file_atomic(options.out / "train_report.txt", report);
    return 0;
}

int run_eval(const EvalOptions& options, std::ostream& log) {
    const LoadedData data = load_data(options.data, options.seed, false);
    const auto models = load_models(options.models, data);

    ExperimentReport report;
    report.num_classes = data.labels.num_classes();
    report.test_samples = data.labels.size();
    report.config = models.front().config;

    std::vector<BranchOutput> outputs;
    for (std::size_t b = 0; b < models.size(); ++b) {
        outputs.push_back(forward(models[b].model, data.branches[b].features));
        report.branches.push_back(score_branch(models[b].model.name, predict(concat_head_scores(outputs.back())).labels,
                                               data.labels, models[b].loss_trace));
    }
    if (options.concat_model) {
        Checkpoint c = load_checkpoint(*options.concat_model);
        const BranchDataset concat = concat_features(data.branches);
        if (c.model.num_classes() != static_cast<std::size_t>(data.labels.num_classes()) || c.model.dim() != concat.dim())
            throw ConfigError(options.concat_model->string() + ": concat model does not match the features and labels");
        report.concat = score_branch("concat", predict(concat_head_scores(forward(c.model, concat.features))).labels,
                                     data.labels, c.loss_trace);
    }
    std::optional<FusedScores> fused;
    if (outputs.size() >= 2) {
        fused = fuse_product(outputs);
        report.fused = score_branch("fused", predict(*fused).labels, data.labels);
    }

    log << format_report_table(report);
    if (options.out) {
        ensure_dir(*options.out);
        io::write_file_atomic(*options.out / "report.txt", format_report(report));
        io::write_file_atomic(*options.out / "accuracy.csv", format_accuracy_csv(report));
        if (fused) io::write_file_atomic(*options.out / "fused_scores.csv", format_scores_csv(fused->scores));
    }
    return 0;
}

int run_export_scores(const ExportOptions& options, std::ostream& log) {
    const LoadedData data = load_data(options.data, options.seed, false);
    Matrix scores;
    if (options.mode == FusionMode::ConcatHead) {
        if (options.models.size() != 1) throw ConfigError("concat mode takes exactly one --model");
        const Checkpoint c = load_checkpoint(options.models.front());
        const BranchDataset concat = concat_features(data.branches);
        if (c.model.dim() != concat.dim() || c.model.num_classes() != static_cast<std::size_t>(data.labels.num_classes()))
            throw ConfigError(options.models.front().string() + ": concat model does not match the features and labels");
        scores = forward(c.model, concat.features).probs;
    } else {
        const auto models = load_models(options.models, data);
        if (options.mode == FusionMode::ProductProb) {
            std::vector<BranchOutput> outputs;
            for (std::size_t b = 0; b < models.size(); ++b) outputs.push_back(forward(models[b].model, data.branches[b].features));
            scores = fuse_product(outputs).scores;
        } else {
            std::vector<Matrix> raw;
            for (std::size_t b = 0; b < models.size(); ++b) raw.push_back(logits(models[b].model, data.branches[b].features));
            scores = fuse_sum_logit(raw).scores;
        }
    }
    if (options.out.has_parent_path()) ensure_dir(options.out.parent_path());
    io::write_file_atomic(options.out, format_scores_csv(scores));
    log << "wrote " << scores.rows() << "x" << scores.cols() << " " << to_string(options.mode) << " scores to "
        << options.out.string() << "\n";
    return 0;
}

int run_gradcheck_command(const GradcheckOptions& options, std::ostream& log) {
    const GradcheckResult r = run_gradcheck(options);
    char line[160];
    std::snprintf(line, sizeof line, "trials=%zu entries=%zu max_relative_error=%.6e tolerance=%.1e %s\n", r.trials,
                  r.entries, r.max_relative_error, options.tolerance, r.passed ? "PASS" : "FAIL");
    log << line;
    return r.passed ? 0 : 1;
}

}  // namespace fusionhead::cli
