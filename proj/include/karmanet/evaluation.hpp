#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "karmanet/model.hpp"
#include "karmanet/training.hpp"

namespace karmanet {

// level-j subtask: values at or above j are positive
inline std::vector<bool> binarize(const std::vector<int>& level_values, int j) {
    if (j < 1 || j > ModelConfig::J) throw std::invalid_argument("subtask level out of range");
    std::vector<bool> out(level_values.size());
    for (std::size_t i = 0; i < level_values.size(); ++i) out[i] = level_values[i] >= j;
    return out;
}

// natural 0..1 scale; zero denominators yield 0
struct LevelF1 {
    int j = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;  // positive ground-truth count at this level
};

inline LevelF1 f1_at_level(const std::vector<int>& labels, const std::vector<int>& predictions,
                           int j) {
    if (labels.size() != predictions.size())
        throw std::invalid_argument("labels and predictions differ in length");
    auto lab = binarize(labels, j);
    auto pred = binarize(predictions, j);
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        tp += lab[i] && pred[i];
        fp += !lab[i] && pred[i];
        fn += lab[i] && !pred[i];
    }
    LevelF1 r;
    r.j = j;
    r.support = tp + fn;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

// Per-level report on the 0..100 scale of the paper's tables.
struct LevelF1Report {
    std::string variant;
    std::array<LevelF1, ModelConfig::J> levels;  // scaled x100
    double macro_f1 = 0.0;                       // x100
};

inline LevelF1Report macro_f1(const std::vector<int>& labels,
                              const std::vector<int>& predictions,
                              const std::string& variant = "") {
    LevelF1Report rep;
    rep.variant = variant;
    double sum = 0.0;
    for (int j = 1; j <= ModelConfig::J; ++j) {
        LevelF1 f = f1_at_level(labels, predictions, j);
        sum += f.f1;
        f.precision *= 100.0;
        f.recall *= 100.0;
        f.f1 *= 100.0;
        rep.levels[j - 1] = f;
    }
    rep.macro_f1 = 100.0 * sum / static_cast<double>(ModelConfig::J);
    return rep;
}

inline nlohmann::json report_to_json(const LevelF1Report& rep) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : rep.levels)
        levels.push_back({{"j", l.j},
                          {"p", l.precision},
                          {"r", l.recall},
                          {"f1", l.f1},
                          {"support", l.support}});
    return nlohmann::json{
        {"variant", rep.variant}, {"levels", std::move(levels)}, {"macro_f1", rep.macro_f1}};
}

inline std::string report_to_csv(const LevelF1Report& rep) {
    std::ostringstream os;
    os << "variant,j,precision,recall,f1,support\n";
    for (const auto& l : rep.levels)
        os << rep.variant << ',' << l.j << ',' << l.precision << ',' << l.recall << ',' << l.f1
           << ',' << l.support << '\n';
    os << rep.variant << ",macro,,," << rep.macro_f1 << ",\n";
    return os.str();
}

template <typename Real>
std::vector<int> predict_levels(const ModelParams<Real>& params,
                                const std::vector<LabeledExample>& examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(predict(params, ex).predicted);
    return out;
}

inline std::vector<int> true_levels(const std::vector<LabeledExample>& examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(ex.label);
    return out;
}

template <typename Real>
double accuracy(const ModelParams<Real>& params, const std::vector<LabeledExample>& examples) {
    if (examples.empty()) return 0.0;
    std::int64_t hit = 0;
    for (const auto& ex : examples) hit += predict(params, ex).predicted == ex.label;
    return static_cast<double>(hit) / static_cast<double>(examples.size());
}

enum class BaselineKind { kSubtreeSize, kConvStruct };

inline std::string baseline_name(BaselineKind k) {
    return k == BaselineKind::kSubtreeSize ? "SubtreeSize" : "ConvStruct";
}

// Multinomial softmax regression over the normalized context features,
// trained with the same Adam loop and schedule as the neural variants.
// A fifth of the training examples is held out to drive the schedule.
template <typename Real>
LevelF1Report run_baseline(BaselineKind kind, const std::vector<LabeledExample>& train,
                           const std::vector<LabeledExample>& test, const TrainConfig& tc) {
    ModelConfig cfg;
    cfg.encoder = ContextEncoder::kLinear;
    cfg.text_mode = TextMode::kNone;
    cfg.feature_mask =
        kind == BaselineKind::kSubtreeSize ? std::vector<int>{kSubtreeSize} : std::vector<int>{};
    cfg.D = 2;
    cfg.seed = tc.seed;

    ExamplePtrs fit, holdout;
    for (std::size_t i = 0; i < train.size(); ++i)
        (i % 5 == 4 ? holdout : fit).push_back(&train[i]);
    if (holdout.empty()) holdout = fit;

    ModelFactory<Real> factory = [&cfg]() {
        auto p = std::make_unique<ModelParams<Real>>(cfg);
        p->init(cfg.seed);
        return p;
    };
    std::unique_ptr<ModelParams<Real>> model;
    select_and_train<Real>(factory, tc, fit, holdout, model);
    return macro_f1(true_levels(test), predict_levels(*model, test), baseline_name(kind));
}

// Predicts the most frequent training level (lowest level on ties) for
// every test example.
inline LevelF1Report prior_baseline(const std::vector<LabeledExample>& train,
                                    const std::vector<LabeledExample>& test) {
    std::array<std::int64_t, kNumLevels> counts{};
    for (const auto& ex : train) ++counts[ex.label];
    int mode_level = 0;
    for (int l = 1; l < kNumLevels; ++l)
        if (counts[l] > counts[mode_level]) mode_level = l;
    std::vector<int> preds(test.size(), mode_level);
    return macro_f1(true_levels(test), preds, "Prior");
}

}  // namespace karmanet
