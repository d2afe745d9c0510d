#include <cmath>

#include "doctest.h"
#include "fusionhead/error.hpp"
#include "fusionhead/experiment.hpp"

using namespace fusionhead;

namespace {

struct Prepared {
    std::vector<BranchDataset> train, test;
    LabelVector train_labels, test_labels;
};

Prepared complementary(std::uint64_t seed, std::size_t per_class) {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.per_class = per_class;
    spec.seed = seed;
    spec.branches = {{16, {0, 1}, 3.0, 1.0}, {16, {2, 3}, 3.0, 1.0}};
    const SyntheticData d = generate_synthetic(spec);
    const Split split = split_train_test(d.labels, 0.5, seed);
    Prepared p;
    for (const auto& b : d.branches) {
        p.train.push_back(select_rows(b, split.train));
        p.test.push_back(select_rows(b, split.test));
    }
    p.train_labels = d.labels.select(split.train);
    p.test_labels = d.labels.select(split.test);
    return p;
}

}  // namespace

TEST_CASE("run_experiment on complementary branches") {
    const Prepared p = complementary(3, 200);
    TrainConfig c;
    c.epochs = 30;
    c.seed = 3;
    const ExperimentOutcome out = run_experiment(p.train, p.train_labels, p.test, p.test_labels, c, 2);
    const auto& r = out.report;
    REQUIRE(r.branches.size() == 2);
    REQUIRE(r.fused);
    REQUIRE(r.concat);
    for (const auto& b : r.branches) {
        CHECK(b.accuracy <= 0.8);
        CHECK(b.loss_trace.size() == 31);
    }
    CHECK(r.fused->accuracy > std::max(r.branches[0].accuracy, r.branches[1].accuracy));
    CHECK(r.test_samples == 400);

    const std::string text = format_report(r);
    CHECK(text.find("fused.accuracy=") != std::string::npos);
    CHECK(text.find("concat.accuracy=") != std::string::npos);
    CHECK(text.find("branch.1.loss_trace=") != std::string::npos);
    CHECK(format_accuracy_csv(r).starts_with("method,accuracy,correct,total\nbranch_0,"));
    CHECK(format_report_table(r).find("fused (product)") != std::string::npos);
}

TEST_CASE("run_experiment results do not depend on the thread count") {
    const Prepared p = complementary(4, 50);
    TrainConfig c;
    c.epochs = 5;
    c.seed = 4;
    const auto one = run_experiment(p.train, p.train_labels, p.test, p.test_labels, c, 1);
    const auto many = run_experiment(p.train, p.train_labels, p.test, p.test_labels, c, 8);
    CHECK(format_report(one.report) == format_report(many.report));
    CHECK(one.models[1].weights == many.models[1].weights);
}

TEST_CASE("single-branch experiment has no fused result") {
    const Prepared p = complementary(5, 50);
    TrainConfig c;
    c.epochs = 3;
    const std::vector<BranchDataset> train{p.train[0]}, test{p.test[0]};
    const auto out = run_experiment(train, p.train_labels, test, p.test_labels, c);
    CHECK_FALSE(out.report.fused);
    CHECK(format_report(out.report).find("fused.") == std::string::npos);
}

TEST_CASE("gradcheck") {
    const GradcheckResult ok = run_gradcheck({});
    CHECK(ok.passed);
    CHECK(ok.trials == 20);
    CHECK(ok.max_relative_error <= 1e-6);

    GradcheckOptions o;
    o.trials = 100;
    o.seed = 3;
    CHECK(run_gradcheck(o).max_relative_error == run_gradcheck(o).max_relative_error);

    GradcheckOptions bug;
    bug.inject_bug = 1e-3;
    CHECK_FALSE(run_gradcheck(bug).passed);

    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(0.0, 1e-9) <= 1e-3);
}
