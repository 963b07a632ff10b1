#include <catch2/catch_amalgamated.hpp>

#include "karmanet/evaluation.hpp"
#include "karmanet/synthgen.hpp"

using namespace karmanet;

namespace {

// fixed 20-sample fixture; at j=4 the confusion is TP=6, FP=2, FN=3
const std::vector<int> kLabels{0, 0, 0, 1, 1, 2, 2, 3, 3, 3, 3, 4, 4, 4, 5, 5, 6, 6, 7, 7};
const std::vector<int> kPreds{0, 0, 1, 1, 0, 2, 4, 3, 3, 2, 5, 4, 2, 3, 5, 4, 6, 3, 7, 6};

}  // namespace

TEST_CASE("binarize thresholds at the subtask level") {
    auto b = binarize({0, 3, 7}, 3);
    CHECK(b == std::vector<bool>{false, true, true});
    auto b1 = binarize({0, 1, 2}, 1);
    CHECK(b1 == std::vector<bool>{false, true, true});  // only level 0 is negative
    auto b7 = binarize({6, 7}, 7);
    CHECK(b7 == std::vector<bool>{false, true});  // only level 7 is positive
    CHECK_THROWS_AS(binarize({0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(binarize({0}, 8), std::invalid_argument);
}

TEST_CASE("f1 on the fixture reproduces the hand-counted confusion at j=4") {
    auto f = f1_at_level(kLabels, kPreds, 4);
    CHECK(f.precision == Catch::Approx(0.75).margin(1e-15));
    CHECK(f.recall == Catch::Approx(2.0 / 3.0).margin(1e-15));
    CHECK(f.f1 == Catch::Approx(12.0 / 17.0).margin(1e-15));
    CHECK(f.support == 9);
}

TEST_CASE("f1 conventions on degenerate slices") {
    // no predicted positives but real ones exist: precision undefined -> 0
    auto f = f1_at_level({1, 1, 0}, {0, 0, 0}, 1);
    CHECK(f.precision == 0.0);
    CHECK(f.recall == 0.0);
    CHECK(f.f1 == 0.0);

    auto perfect = f1_at_level({1, 0, 1}, {1, 0, 1}, 1);
    CHECK(perfect.f1 == 1.0);
    CHECK_THROWS_AS(f1_at_level({0}, {0, 1}, 1), std::invalid_argument);
}

TEST_CASE("macro F1 of the fixture matches the spreadsheet value to 1e-12") {
    auto rep = macro_f1(kLabels, kPreds, "fixture");
    // exact per-level fractions: 16/17, 1, 22/25, 12/17, 8/11, 6/7, 2/3
    const double expected = 100.0 * 567269.0 / 687225.0;
    CHECK(std::fabs(rep.macro_f1 - expected) < 1e-12);
    CHECK(rep.levels[3].f1 == Catch::Approx(100.0 * 12.0 / 17.0).margin(1e-12));
    CHECK(rep.levels[0].support == 17);
    CHECK(rep.levels[6].support == 2);
}

TEST_CASE("perfect predictions score 100, all-level-0 predictions score 0") {
    auto perfect = macro_f1(kLabels, kLabels, "perfect");
    CHECK(perfect.macro_f1 == Catch::Approx(100.0).margin(1e-12));

    std::vector<int> zeros(kLabels.size(), 0);
    auto none = macro_f1(kLabels, zeros, "zeros");
    CHECK(none.macro_f1 == 0.0);
}

TEST_CASE("macro equals the mean of independently computed level F1s") {
    Rng rng(5);
    std::vector<int> labels, preds;
    for (int i = 0; i < 300; ++i) {
        labels.push_back(rng.uniform_int(0, 7));
        preds.push_back(rng.uniform_int(0, 7));
    }
    auto rep = macro_f1(labels, preds);
    double mean = 0.0;
    for (int j = 1; j <= 7; ++j) mean += f1_at_level(labels, preds, j).f1;
    mean = 100.0 * mean / 7.0;
    CHECK(rep.macro_f1 == Catch::Approx(mean).margin(1e-12));
}

TEST_CASE("report serialization is stable and carries the x100 scale") {
    auto rep = macro_f1(kLabels, kPreds, "fixture");
    auto j1 = report_to_json(rep);
    auto j2 = report_to_json(rep);
    CHECK(j1.dump() == j2.dump());
    CHECK(j1["variant"] == "fixture");
    CHECK(j1["levels"].size() == 7);
    CHECK(report_to_csv(rep) == report_to_csv(rep));
    CHECK(report_to_csv(rep).find("variant,j,precision") == 0);
}

TEST_CASE("prior baseline predicts the most frequent level") {
    std::vector<LabeledExample> train(10), test(4);
    for (int i = 0; i < 10; ++i) train[i].label = i < 6 ? 0 : 7;
    for (int i = 0; i < 4; ++i) test[i].label = i;  // labels 0..3
    auto rep = prior_baseline(train, test);
    CHECK(rep.variant == "Prior");
    CHECK(rep.macro_f1 == 0.0);  // constant level-0: no positives at any subtask

    for (int i = 0; i < 10; ++i) train[i].label = 7;  // now level-7 dominates
    auto rep7 = prior_baseline(train, test);
    // all-positive predictions: recall 1 at every j, precision from supports
    CHECK(rep7.levels[0].recall == 100.0);
    CHECK(rep7.levels[0].precision == Catch::Approx(75.0));
}

TEST_CASE("baselines learn a linearly separable two-level construction") {
    // subtree size cleanly separates the two labels
    Rng rng(9);
    std::vector<LabeledExample> train, test;
    for (int i = 0; i < 400; ++i) {
        LabeledExample ex;
        ex.comment_id = "e" + std::to_string(i);
        bool high = i % 2 == 0;
        ex.label = high ? 5 : 0;
        ex.features.raw[kSubtreeSize] = high ? 20.0 + rng.uniform01() : 1.0 + rng.uniform01();
        for (int d = 0; d < kNumContextFeatures; ++d)
            ex.features.normalized[d] = 0.1 * rng.normal();
        ex.features.normalized[kSubtreeSize] = high ? 1.0 : -1.0;
        (i < 300 ? train : test).push_back(ex);
    }
    TrainConfig tc;
    tc.seed = 9;
    tc.lr_grid = {0.01};
    tc.max_epochs = 40;
    auto rep = run_baseline<double>(BaselineKind::kSubtreeSize, train, test, tc);
    // the two populated subtasks (j<=5) are separable; j=6,7 have no positives
    CHECK(rep.levels[0].f1 == Catch::Approx(100.0));
    CHECK(rep.levels[4].f1 == Catch::Approx(100.0));
    CHECK(rep.macro_f1 == Catch::Approx(500.0 / 7.0).margin(1e-6));
}

TEST_CASE("conv-struct baseline beats subtree-size when extra features carry the signal") {
    // two signals: subtree size separates {0,1} from {4,5}; depth separates
    // inside the pairs, so only the all-features model can tell 4 from 5
    Rng rng(13);
    std::vector<LabeledExample> train, test;
    for (int i = 0; i < 600; ++i) {
        LabeledExample ex;
        ex.comment_id = "e" + std::to_string(i);
        int cls = i % 4;
        ex.label = cls < 2 ? cls : cls + 2;  // 0,1,4,5
        for (int d = 0; d < kNumContextFeatures; ++d)
            ex.features.normalized[d] = 0.05 * rng.normal();
        ex.features.normalized[kSubtreeSize] = cls < 2 ? -1.0 : 1.0;
        ex.features.normalized[kDepth] = cls % 2 == 0 ? -1.0 : 1.0;
        (i < 450 ? train : test).push_back(ex);
    }
    TrainConfig tc;
    tc.seed = 13;
    tc.lr_grid = {0.01};
    tc.max_epochs = 40;
    auto sub = run_baseline<double>(BaselineKind::kSubtreeSize, train, test, tc);
    auto conv = run_baseline<double>(BaselineKind::kConvStruct, train, test, tc);
    CHECK(conv.macro_f1 >= sub.macro_f1);
    CHECK(conv.macro_f1 > sub.macro_f1 + 5.0);
}
