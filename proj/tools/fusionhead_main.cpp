// fusionhead: train per-branch softmax heads on precomputed features, fuse
// them by product and compare top-1 accuracy against single branches and a
// concatenation baseline.

#include <iostream>

#include "CLI11.hpp"
#include "fusionhead/commands.hpp"
#include "fusionhead/error.hpp"

namespace {

using namespace fusionhead;

void add_data_flags(CLI::App* cmd, cli::DataOptions& data, std::optional<double>& holdout) {
    cmd->add_option("--features", data.features, "Feature file per branch (MBFF or .csv)")->required();
    cmd->add_option("--labels", data.labels, "Labels file (K=<int> header)")->required();
    cmd->add_option("--holdout", holdout,
                    "Stratified split: fraction of each class used for training; eval uses the rest")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("--l2norm", data.l2_normalize, "Scale feature rows to unit L2 norm");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Late-fusion softmax heads over precomputed feature branches"};
    app.require_subcommand(1);

    cli::SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-branch dataset");
    synth_cmd->add_option("--classes", synth.classes, "Number of classes K")->capture_default_str();
    synth_cmd->add_option("--per-class", synth.per_class, "Samples per class")->capture_default_str();
    synth_cmd->add_option("--branch", synth.branches, "Branch as dim:c1,c2 (informative classes)")->required();
    synth_cmd->add_option("--noise", synth.noise, "Gaussian noise scale")->capture_default_str();
    synth_cmd->add_option("--signal", synth.signal, "Mean offset on informative blocks")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();

    cli::TrainOptions train;
    std::optional<double> train_holdout;
    std::optional<double> init_scale;
    auto* train_cmd = app.add_subcommand("train", "Train one head per branch plus the concatenation baseline");
    add_data_flags(train_cmd, train.data, train_holdout);
    train_cmd->add_option("--lr", train.config.learning_rate, "Learning rate")->capture_default_str();
    train_cmd->add_option("--epochs", train.config.epochs)->capture_default_str();
    train_cmd->add_option("--batch", train.config.batch_size, "Mini-batch size")->capture_default_str();
    train_cmd->add_flag("--full-batch", train.full_batch, "Use the whole training set as one batch");
    train_cmd->add_option("--init-scale", init_scale, "Uniform init half-width (default 1/sqrt(p))");
    train_cmd->add_option("--seed", train.config.seed)->capture_default_str();
    train_cmd->add_option("--out", train.out, "Checkpoint directory")->required();

    cli::EvalOptions eval;
    std::optional<double> eval_holdout;
    std::optional<std::string> eval_out;
    std::optional<std::string> concat_model;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate branch heads, concat baseline and fusion");
    add_data_flags(eval_cmd, eval.data, eval_holdout);
    eval_cmd->add_option("--model", eval.models, "Branch checkpoint, in --features order")->required();
    eval_cmd->add_option("--concat", concat_model, "Concatenation-baseline checkpoint");
    eval_cmd->add_option("--seed", eval.seed, "Split seed (must match train when --holdout is used)");
    eval_cmd->add_option("--out", eval_out, "Directory for report.txt, accuracy.csv, fused_scores.csv");

    cli::ExportOptions exp;
    std::optional<double> export_holdout;
    std::string mode = "product";
    auto* export_cmd = app.add_subcommand("export-scores", "Write fused class scores as CSV");
    add_data_flags(export_cmd, exp.data, export_holdout);
    export_cmd->add_option("--model", exp.models, "Checkpoint(s)")->required();
    export_cmd->add_option("--mode", mode, "product | sum-logit | concat")->capture_default_str();
    export_cmd->add_option("--seed", exp.seed, "Split seed (with --holdout)");
    export_cmd->add_option("--out", exp.out, "Output CSV path")->required();

    GradcheckOptions grad;
    double inject = 0.0;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    grad_cmd->add_option("--trials", grad.trials)->capture_default_str();
    grad_cmd->add_option("--seed", grad.seed)->capture_default_str();
    grad_cmd->add_option("--tolerance", grad.tolerance)->capture_default_str();
    grad_cmd->add_flag("--inject-bug", "Test hook: perturb every dW entry by 1e-3")->each([&](const std::string&) {
        inject = 1e-3;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*synth_cmd) return cli::run_synth(synth, std::cout);
        if (*train_cmd) {
            train.data.holdout_train_fraction = train_holdout;
            train.config.init_scale = init_scale;
            train.threads = thread_budget();
            return cli::run_train(train, std::cout);
        }
        if (*eval_cmd) {
            eval.data.holdout_train_fraction = eval_holdout;
            if (eval_out) eval.out = *eval_out;
            if (concat_model) eval.concat_model = *concat_model;
            return cli::run_eval(eval, std::cout);
        }
        if (*export_cmd) {
            exp.data.holdout_train_fraction = export_holdout;
            exp.mode = cli::parse_fusion_mode(mode);
            return cli::run_export_scores(exp, std::cout);
        }
        if (*grad_cmd) {
            grad.inject_bug = inject;
            return cli::run_gradcheck_command(grad, std::cout);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
