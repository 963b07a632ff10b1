#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "karmanet/context_features.hpp"
#include "karmanet/rng.hpp"
#include "karmanet/synthgen.hpp"

using namespace karmanet;

namespace {

Comment mk(const std::string& id, const std::string& parent, double time_s,
           const std::string& author = "user") {
    Comment c;
    c.id = id;
    c.parent_id = parent;
    c.author = author;
    c.time_s = time_s;
    c.karma = 1;
    return c;
}

}  // namespace

TEST_CASE("extract on the OP-reply example") {
    Thread t;
    t.thread_id = "t";
    t.root_author = "op";
    t.comments = {mk("c1", "", 3600.0, "op")};
    auto f = extract(t, "c1");
    CHECK(f.raw[kIsOp] == 1.0);
    CHECK(f.raw[kNChildren] == 0.0);
    CHECK(f.raw[kSubtreeSize] == 1.0);
    CHECK(f.raw[kSubtreeHeight] == 0.0);
    CHECK(f.raw[kDepth] == 1.0);
    CHECK(f.raw[kHoursSinceRoot] == Catch::Approx(1.0));
    CHECK(f.raw[kHoursSinceParent] == Catch::Approx(1.0));
}

TEST_CASE("extract on a comment with two replies") {
    Thread t;
    t.thread_id = "t";
    t.root_author = "op";
    t.comments = {mk("A", "", 1800.0, "x"), mk("B", "A", 5400.0), mk("C", "A", 7200.0)};
    auto f = extract(t, "A");
    CHECK(f.raw[kIsOp] == 0.0);
    CHECK(f.raw[kNChildren] == 2.0);
    CHECK(f.raw[kSubtreeSize] == 3.0);
    CHECK(f.raw[kSubtreeHeight] == 1.0);
    CHECK(f.raw[kDepth] == 1.0);

    auto fb = extract(t, "B");
    CHECK(fb.raw[kHoursSinceRoot] == Catch::Approx(1.5));
    CHECK(fb.raw[kHoursSinceParent] == Catch::Approx(1.0));

    CHECK_THROWS_AS(extract(t, "nope"), std::invalid_argument);
}

TEST_CASE("extraction ignores sibling storage order") {
    GenConfig cfg;
    cfg.seed = 11;
    cfg.threads = 5;
    cfg.mean_comments = 20.0;
    auto corpus = generate(cfg);
    for (auto& th : corpus) {
        auto before = extract_all(th);
        // reverse storage order; parent/child relations are unchanged
        std::reverse(th.comments.begin(), th.comments.end());
        auto after = extract_all(th);
        for (const auto& [id, f] : before)
            for (int d = 0; d < kNumContextFeatures; ++d)
                CHECK(f.raw[d] == after.at(id).raw[d]);
        std::reverse(th.comments.begin(), th.comments.end());
    }
}

TEST_CASE("extract matches an independent traversal oracle on synthetic threads") {
    GenConfig cfg;
    cfg.seed = 21;
    cfg.threads = 10;
    cfg.mean_comments = 25.0;
    auto corpus = generate(cfg);
    for (const auto& th : corpus) {
        auto feats = extract_all(th);
        for (std::size_t i = 0; i < th.comments.size(); ++i) {
            const auto& c = th.comments[i];
            // oracle: direct scans over the comment list
            int n_children = 0;
            for (const auto& o : th.comments) n_children += o.parent_id == c.id;
            std::vector<std::string> frontier{c.id};
            int size = 0, height = -1;
            while (!frontier.empty()) {
                ++height;
                size += static_cast<int>(frontier.size());
                std::vector<std::string> next;
                for (const auto& o : th.comments)
                    for (const auto& fid : frontier)
                        if (o.parent_id == fid) next.push_back(o.id);
                frontier = next;
            }
            int depth = 1;
            const Comment* walk = &c;
            double parent_time = 0.0;
            while (!walk->parent_id.empty()) {
                for (const auto& o : th.comments)
                    if (o.id == walk->parent_id) {
                        if (walk == &c) parent_time = o.time_s;
                        walk = &o;
                        break;
                    }
                ++depth;
            }
            const auto& f = feats.at(c.id);
            CHECK(f.raw[kIsOp] == (c.author == th.root_author ? 1.0 : 0.0));
            CHECK(f.raw[kNChildren] == n_children);
            CHECK(f.raw[kSubtreeSize] == size);
            CHECK(f.raw[kSubtreeHeight] == height);
            CHECK(f.raw[kDepth] == depth);
            CHECK(f.raw[kHoursSinceRoot] == Catch::Approx(c.time_s / 3600.0));
            CHECK(f.raw[kHoursSinceParent] == Catch::Approx((c.time_s - parent_time) / 3600.0));
        }
    }
}

namespace {

ContextFeatureVector constant_features(double v) {
    ContextFeatureVector f;
    f.raw.fill(v);
    return f;
}

}  // namespace

TEST_CASE("normalizer mean and std on a two-point set") {
    std::vector<ContextFeatureVector> s{constant_features(0.0), constant_features(2.0)};
    auto n = fit_normalizer(s);
    for (int d = 0; d < kNumContextFeatures; ++d) {
        CHECK(n.mean[d] == Catch::Approx(1.0));
        CHECK(n.std[d] == Catch::Approx(1.0));  // population std of {0,2}
    }
    CHECK_THROWS_AS(fit_normalizer({constant_features(1.0)}), std::invalid_argument);
}

TEST_CASE("constant dimensions normalize to a pure shift") {
    std::vector<ContextFeatureVector> s{constant_features(3.0), constant_features(3.0),
                                        constant_features(3.0)};
    auto n = fit_normalizer(s);
    for (int d = 0; d < kNumContextFeatures; ++d) CHECK(n.std[d] == 1.0);
    auto f = apply(n, constant_features(3.0));
    for (int d = 0; d < kNumContextFeatures; ++d) CHECK(f.normalized[d] == 0.0);
}

TEST_CASE("apply maps mean to zero and mean+std to one") {
    Rng rng(3);
    std::vector<ContextFeatureVector> s;
    for (int i = 0; i < 50; ++i) {
        ContextFeatureVector f;
        for (int d = 0; d < kNumContextFeatures; ++d) f.raw[d] = 2.0 + rng.normal() * (d + 1);
        s.push_back(f);
    }
    auto n = fit_normalizer(s);
    ContextFeatureVector at_mean;
    for (int d = 0; d < kNumContextFeatures; ++d) at_mean.raw[d] = n.mean[d];
    auto f0 = apply(n, at_mean);
    for (int d = 0; d < kNumContextFeatures; ++d) CHECK(f0.normalized[d] == Catch::Approx(0.0).margin(1e-12));

    ContextFeatureVector at_one;
    for (int d = 0; d < kNumContextFeatures; ++d) at_one.raw[d] = n.mean[d] + n.std[d];
    auto f1 = apply(n, at_one);
    for (int d = 0; d < kNumContextFeatures; ++d) CHECK(f1.normalized[d] == Catch::Approx(1.0));
}

TEST_CASE("fit matches a two-pass oracle and normalized moments are 0/1") {
    Rng rng(17);
    std::vector<ContextFeatureVector> s;
    for (int i = 0; i < 1000; ++i) {
        ContextFeatureVector f;
        for (int d = 0; d < kNumContextFeatures; ++d)
            f.raw[d] = 5.0 * rng.uniform01() + rng.normal();
        s.push_back(f);
    }
    auto n = fit_normalizer(s);

    for (int d = 0; d < kNumContextFeatures; ++d) {
        // independent two-pass recomputation in long double
        long double mean = 0.0L;
        for (const auto& f : s) mean += f.raw[d];
        mean /= s.size();
        long double ss = 0.0L;
        for (const auto& f : s) ss += (f.raw[d] - mean) * (f.raw[d] - mean);
        long double sd = sqrtl(ss / s.size());
        CHECK(std::fabs(n.mean[d] - static_cast<double>(mean)) < 1e-12);
        CHECK(std::fabs(n.std[d] - static_cast<double>(sd)) < 1e-12);
    }

    for (int d = 0; d < kNumContextFeatures; ++d) {
        double m = 0.0, v = 0.0;
        for (const auto& f : s) m += apply(n, f).normalized[d];
        m /= s.size();
        for (const auto& f : s) {
            double z = apply(n, f).normalized[d] - m;
            v += z * z;
        }
        v /= s.size();
        CHECK(std::fabs(m) < 1e-10);
        CHECK(std::fabs(v - 1.0) < 1e-10);
    }
}
