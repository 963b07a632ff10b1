#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "karmanet/dataset.hpp"
#include "karmanet/model.hpp"
#include "karmanet/numerics.hpp"
#include "karmanet/rng.hpp"

namespace karmanet {

// Thread-level 10-way split: partitions 4..9 train, 2..3 validation,
// 0..1 test. Assignment is round-robin over lexicographically sorted
// thread ids, so partition sizes differ by at most one.
struct SplitAssignment {
    std::map<std::string, int> partition;

    enum Role { kTrain = 0, kVal = 1, kTest = 2 };

    static Role role_of(int p) {
        if (p >= 4) return kTrain;
        if (p >= 2) return kVal;
        return kTest;
    }

    Role role(const std::string& thread_id) const {
        return role_of(partition.at(thread_id));
    }
};

inline SplitAssignment partition_by_thread(const std::vector<Thread>& threads) {
    std::vector<std::string> ids;
    ids.reserve(threads.size());
    for (const auto& t : threads) ids.push_back(t.thread_id);
    std::sort(ids.begin(), ids.end());
    SplitAssignment split;
    for (std::size_t i = 0; i < ids.size(); ++i)
        split.partition[ids[i]] = static_cast<int>(i % 10);
    return split;
}

// Downsamples every level below the pivot to the pivot level's count,
// uniformly without replacement. Levels at or above the pivot are untouched;
// surviving examples keep their original relative order.
template <typename Ex>
std::vector<Ex> subsample_levels(const std::vector<Ex>& examples, int pivot_level,
                                 std::uint64_t seed) {
    std::int64_t pivot_count = 0;
    for (const auto& ex : examples) pivot_count += ex.label == pivot_level;
    std::vector<char> keep(examples.size(), 1);
    if (pivot_count > 0) {
        Rng rng(seed);
        for (int level = 0; level < pivot_level; ++level) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < examples.size(); ++i)
                if (examples[i].label == level) idx.push_back(i);
            if (static_cast<std::int64_t>(idx.size()) <= pivot_count) continue;
            rng.shuffle(idx);
            for (std::size_t k = static_cast<std::size_t>(pivot_count); k < idx.size(); ++k)
                keep[idx[k]] = 0;
        }
    }
    std::vector<Ex> out;
    for (std::size_t i = 0; i < examples.size(); ++i)
        if (keep[i]) out.push_back(examples[i]);
    return out;
}

struct TrainConfig {
    int batch_size = 32;
    std::vector<double> lr_grid;  // default filled by make_default_grid()
    int max_epochs = 100;         // safety cap on top of the stopping rule
    std::uint64_t seed = 1;
    int pivot_level = 4;

    static std::vector<double> make_default_grid() {
        std::vector<double> g;
        for (int i = 0; i <= 18; ++i) g.push_back(0.0010 + 0.0005 * i);
        return g;
    }

    std::vector<double> grid() const {
        return lr_grid.empty() ? make_default_grid() : lr_grid;
    }

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
        auto g = grid();
        for (std::size_t i = 1; i < g.size(); ++i)
            if (g[i] <= g[i - 1])
                throw std::invalid_argument("train config: lr grid must be ascending");
        if (max_epochs < 1) throw std::invalid_argument("train config: epoch cap must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"batch_size", c.batch_size},
                       {"lr_grid", c.grid()},
                       {"max_epochs", c.max_epochs},
                       {"seed", c.seed},
                       {"pivot_level", c.pivot_level}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("lr_grid")) c.lr_grid = j.at("lr_grid").get<std::vector<double>>();
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.pivot_level = j.value("pivot_level", c.pivot_level);
}

// The learning-rate schedule: halve when the validation log-likelihood
// decreases, stop at the second decrease. Pure rule machine so the trace
// can be tested against scripted sequences.
class TrainSchedule {
public:
    explicit TrainSchedule(double initial_lr) : lr_(initial_lr) {}

    struct Decision {
        bool halved = false;
        bool stop = false;
    };

    Decision observe(double val_ll) {
        Decision d;
        if (prev_ && val_ll < *prev_) {
            ++decreases_;
            if (decreases_ >= 2) {
                d.stop = true;
            } else {
                lr_ /= 2.0;
                d.halved = true;
            }
        }
        prev_ = val_ll;
        return d;
    }

    double lr() const { return lr_; }
    int decreases() const { return decreases_; }

private:
    double lr_;
    int decreases_ = 0;
    std::optional<double> prev_;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double val_ll = 0.0;
    int decreases = 0;
};

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
    j = nlohmann::json{{"epoch", r.epoch},
                       {"lr", r.lr},
                       {"train_loss", r.train_loss},
                       {"val_ll", r.val_ll},
                       {"decreases", r.decreases}};
}

struct TrainState {
    std::vector<EpochRecord> log;
    int best_epoch = 0;
    double best_val_ll = -std::numeric_limits<double>::infinity();
    double selected_lr = 0.0;
    int epochs_run = 0;
    int decreases = 0;
};

using ExamplePtrs = std::vector<const LabeledExample*>;

inline ExamplePtrs as_ptrs(const std::vector<LabeledExample>& v) {
    ExamplePtrs p;
    p.reserve(v.size());
    for (const auto& ex : v) p.push_back(&ex);
    return p;
}

// shuffled index batches; every example appears exactly once per epoch
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                          Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(batch_size)) {
        std::size_t e = std::min(n, s + static_cast<std::size_t>(batch_size));
        batches.emplace_back(idx.begin() + s, idx.begin() + e);
    }
    return batches;
}

// mean log-likelihood (higher is better)
template <typename Real>
double validation_ll(const ModelParams<Real>& params, const ExamplePtrs& val) {
    if (val.empty()) throw std::invalid_argument("validation set is empty");
    return -loss_only(params, val);
}

template <typename Real>
double run_epoch(ModelParams<Real>& params, AdamState<Real>& adam, const ExamplePtrs& train,
                 int batch_size, Rng& rng) {
    double loss_sum = 0.0;
    auto batches = make_batches(train.size(), batch_size, rng);
    ExamplePtrs batch;
    for (const auto& b : batches) {
        batch.clear();
        for (auto i : b) batch.push_back(train[i]);
        double loss = loss_and_backward(params, batch);
        if (!std::isfinite(loss))
            throw std::runtime_error("training diverged: non-finite batch loss");
        adam.step(params.store);
        loss_sum += loss * static_cast<double>(batch.size());
    }
    return loss_sum / static_cast<double>(train.size());
}

// Full training loop. The model must be freshly initialized; on return it
// holds the parameters of the epoch with the best validation log-likelihood.
template <typename Real>
TrainState train(ModelParams<Real>& params, const TrainConfig& cfg, double lr,
                 const ExamplePtrs& train_set, const ExamplePtrs& val_set) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("training set is empty");
    TrainState st;
    st.selected_lr = lr;
    AdamState<Real> adam(params.store, lr);
    TrainSchedule schedule(lr);
    Rng rng(cfg.seed);
    std::vector<Real> best;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double train_loss = run_epoch(params, adam, train_set, cfg.batch_size, rng);
        double val_ll = validation_ll(params, val_set);
        if (!std::isfinite(val_ll))
            throw std::runtime_error("training diverged: non-finite validation log-likelihood");

        auto decision = schedule.observe(val_ll);
        adam.lr = schedule.lr();
        st.log.push_back({epoch, schedule.lr(), train_loss, val_ll, schedule.decreases()});
        st.epochs_run = epoch;
        st.decreases = schedule.decreases();

        if (val_ll > st.best_val_ll) {
            st.best_val_ll = val_ll;
            st.best_epoch = epoch;
            best = params.store.snapshot();
        }
        if (decision.stop) break;
    }
    if (!best.empty()) params.store.restore(best);
    return st;
}

template <typename Real>
using ModelFactory = std::function<std::unique_ptr<ModelParams<Real>>()>;

// One epoch per grid value on a freshly initialized model (same seed across
// grid points); returns the rate with the best first-epoch validation
// log-likelihood, smaller rate on ties. Non-finite runs are disqualified.
template <typename Real>
double select_initial_lr(const ModelFactory<Real>& factory, const TrainConfig& cfg,
                         const ExamplePtrs& train_set, const ExamplePtrs& val_set) {
    cfg.validate();
    auto grid = cfg.grid();
    double best_lr = 0.0;
    double best_ll = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (double lr : grid) {
        double ll;
        try {
            auto params = factory();
            AdamState<Real> adam(params->store, lr);
            Rng rng(cfg.seed);  // same epoch-1 shuffle as the final run
            run_epoch(*params, adam, train_set, cfg.batch_size, rng);
            ll = validation_ll(*params, val_set);
        } catch (const std::runtime_error&) {
            continue;  // diverged at this rate
        }
        if (!std::isfinite(ll)) continue;
        if (!any || ll > best_ll) {
            any = true;
            best_ll = ll;
            best_lr = lr;
        }
    }
    if (!any) throw std::runtime_error("every learning rate in the grid diverged");
    return best_lr;
}

struct TrainedModel {
    TrainState state;
};

// Select the initial rate, then train a fresh model with it.
template <typename Real>
TrainState select_and_train(const ModelFactory<Real>& factory, const TrainConfig& cfg,
                            const ExamplePtrs& train_set, const ExamplePtrs& val_set,
                            std::unique_ptr<ModelParams<Real>>& out_model) {
    double lr = cfg.grid().size() == 1
                    ? cfg.grid().front()
                    : select_initial_lr<Real>(factory, cfg, train_set, val_set);
    out_model = factory();
    return train(*out_model, cfg, lr, train_set, val_set);
}

// End-to-end bundle construction: partition by thread, subsample train and
// validation, fit the normalizer and vocabularies on the subsampled training
// set, then tokenize every split.
inline DatasetBundle build_dataset_bundle(const std::vector<Thread>& threads,
                                          const std::map<std::string, QuantizerThresholds>& quants,
                                          std::uint64_t seed, int pivot_level = 4) {
    auto split = partition_by_thread(threads);
    auto raws = make_raw_examples(threads, quants);

    std::vector<RawExample> train_raw, val_raw, test_raw;
    for (auto& ex : raws) {
        switch (split.role(ex.thread_id)) {
            case SplitAssignment::kTrain: train_raw.push_back(std::move(ex)); break;
            case SplitAssignment::kVal: val_raw.push_back(std::move(ex)); break;
            case SplitAssignment::kTest: test_raw.push_back(std::move(ex)); break;
        }
    }

    Rng master(seed);
    std::uint64_t train_seed = master.fork(1).next_u64();
    std::uint64_t val_seed = master.fork(2).next_u64();
    train_raw = subsample_levels(train_raw, pivot_level, train_seed);
    val_raw = subsample_levels(val_raw, pivot_level, val_seed);  // test is never subsampled

    DatasetBundle b;
    b.seed = seed;
    b.pivot_level = pivot_level;
    b.quantizers = quants;
    b.partitions = split.partition;

    std::vector<ContextFeatureVector> feats;
    feats.reserve(train_raw.size());
    for (const auto& ex : train_raw) feats.push_back(ex.features);
    b.normalizer = fit_normalizer(feats);
    b.vocabs = build_vocabularies(train_raw);

    for (const auto& ex : train_raw) b.train.push_back(finalize_example(ex, b.vocabs, b.normalizer));
    for (const auto& ex : val_raw) b.val.push_back(finalize_example(ex, b.vocabs, b.normalizer));
    for (const auto& ex : test_raw) b.test.push_back(finalize_example(ex, b.vocabs, b.normalizer));
    b.assert_no_leakage();
    return b;
}

}  // namespace karmanet
