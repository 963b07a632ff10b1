#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "karmanet/quantizer.hpp"
#include "karmanet/synthgen.hpp"

using namespace karmanet;

TEST_CASE("generation is byte-identical under a fixed seed") {
    GenConfig cfg;
    cfg.seed = 77;
    cfg.threads = 30;
    cfg.mean_comments = 12.0;
    auto a = generate(cfg);
    auto b = generate(cfg);
    CHECK(serialize_threads(a) == serialize_threads(b));
    cfg.seed = 78;
    auto c = generate(cfg);
    CHECK(serialize_threads(a) != serialize_threads(c));
}

TEST_CASE("generated threads always validate") {
    GenConfig cfg;
    cfg.seed = 3;
    cfg.threads = 60;
    cfg.mean_comments = 18.0;
    for (auto mode : {TextSignal::kNone, TextSignal::kGlobal, TextSignal::kContextConditional}) {
        cfg.text_signal = mode;
        auto corpus = generate(cfg);
        for (const auto& t : corpus) {
            auto v = validate_thread(t);
            if (v) FAIL("thread " << t.thread_id << ": " << *v);
        }
    }
}

TEST_CASE("noise-free earliness-only karma decreases strictly within a thread") {
    GenConfig cfg;
    cfg.seed = 9;
    cfg.threads = 25;
    cfg.mean_comments = 6.0;
    cfg.karma_alpha = 10.0;
    cfg.karma_beta = 0.0;
    cfg.karma_noise = 0.0;
    auto corpus = generate(cfg);
    for (const auto& t : corpus) {
        for (std::size_t i = 1; i < t.comments.size(); ++i) {
            REQUIRE(t.comments[i].time_s > t.comments[i - 1].time_s);
            REQUIRE(t.comments[i].karma < t.comments[i - 1].karma);
        }
    }
}

TEST_CASE("default corpus is heavy-tailed with level-0 as the largest class") {
    GenConfig cfg;
    cfg.seed = 41;
    cfg.threads = 400;
    cfg.mean_comments = 28.0;
    auto corpus = generate(cfg);

    std::vector<std::int64_t> karma;
    for (const auto& t : corpus)
        for (const auto& c : t.comments) karma.push_back(c.karma);
    REQUIRE(karma.size() > 10000);

    auto q = fit_quantizer(karma);
    CHECK(q.cuts.size() == 6);  // non-degenerate: all 8 levels reachable
    std::vector<int> levels;
    for (auto k : karma) levels.push_back(q.quantize(k));
    auto counts = level_distribution(levels);
    for (int l = 1; l < kNumLevels; ++l) CHECK(counts[0] > counts[l]);
    for (int l = 0; l < kNumLevels; ++l) CHECK(counts[l] > 0);
}

TEST_CASE("describe matches a sort-based quantile oracle") {
    GenConfig cfg;
    cfg.seed = 15;
    cfg.threads = 120;
    cfg.mean_comments = 15.0;
    auto corpus = generate(cfg);
    auto s = describe(corpus);

    std::vector<std::int64_t> karma;
    std::int64_t n_comments = 0;
    for (const auto& t : corpus) {
        n_comments += static_cast<std::int64_t>(t.comments.size());
        for (const auto& c : t.comments) karma.push_back(c.karma);
    }
    CHECK(s.threads == 120);
    CHECK(s.comments == n_comments);

    std::sort(karma.begin(), karma.end());
    auto nearest = [&](double q) {
        std::size_t idx = static_cast<std::size_t>(std::ceil(q * karma.size()));
        return karma[idx > 0 ? idx - 1 : 0];
    };
    CHECK(s.karma_p50 == nearest(0.50));
    CHECK(s.karma_p90 == nearest(0.90));
    CHECK(s.karma_p99 == nearest(0.99));
    CHECK(s.karma_max == karma.back());
}

TEST_CASE("describe on an empty corpus") {
    auto s = describe({});
    CHECK(s.threads == 0);
    CHECK(s.comments == 0);
    CHECK(s.karma_max == 0);
}

TEST_CASE("text signal none uses only the neutral vocabulary") {
    GenConfig cfg;
    cfg.seed = 8;
    cfg.threads = 20;
    cfg.text_signal = TextSignal::kNone;
    auto corpus = generate(cfg);
    for (const auto& t : corpus)
        for (const auto& c : t.comments)
            for (const auto& s : c.sentences)
                for (const auto& tok : s) REQUIRE(tok.word[0] == 'n');
}
