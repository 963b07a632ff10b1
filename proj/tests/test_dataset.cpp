#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "karmanet/dataset.hpp"
#include "karmanet/synthgen.hpp"
#include "karmanet/training.hpp"

using namespace karmanet;

TEST_CASE("vocabulary keeps repeated types and maps singletons to UNK") {
    std::map<std::string, std::int64_t> counts{
        {"apple", 5}, {"pear", 2}, {"once", 1}, {"zed", 3}};
    auto v = Vocabulary::build(counts);
    CHECK(v.size() == 4);  // UNK + apple + pear + zed
    CHECK(v.types()[0] == std::string(kUnkToken));
    CHECK(v.id("apple") > 0);
    CHECK(v.id("pear") > 0);
    CHECK(v.id("zed") > 0);
    CHECK(v.id("once") == 0);
    CHECK(v.id("never-seen") == 0);
    // lexicographic layout after UNK
    CHECK(v.types() == std::vector<std::string>{kUnkToken, "apple", "pear", "zed"});
}

TEST_CASE("raw examples carry quantized labels and drop empty sentences") {
    Thread t;
    t.thread_id = "t1";
    t.subreddit = "synth";
    t.root_author = "op";
    Comment c;
    c.id = "c1";
    c.author = "op";
    c.time_s = 60.0;
    c.karma = 9;
    c.sentences.push_back({});  // empty, must be dropped
    c.sentences.push_back({AnnotatedToken{"hey", "hey", "UH"}});
    t.comments.push_back(c);

    std::map<std::string, QuantizerThresholds> quants;
    quants["synth"] = fit_quantizer({2, 3, 4, 5, 6, 7, 8, 9});
    auto raws = make_raw_examples({t}, quants);
    REQUIRE(raws.size() == 1);
    CHECK(raws[0].label == 4);
    CHECK(raws[0].sentences.size() == 1);
    CHECK(raws[0].features.raw[kIsOp] == 1.0);

    std::map<std::string, QuantizerThresholds> wrong;
    wrong["other"] = quants["synth"];
    CHECK_THROWS_AS(make_raw_examples({t}, wrong), std::invalid_argument);
}

TEST_CASE("bundle build, save and load round-trip") {
    GenConfig gcfg;
    gcfg.seed = 31;
    gcfg.threads = 40;
    gcfg.mean_comments = 15.0;
    auto corpus = generate(gcfg);
    auto quants = fit_quantizers(corpus);
    auto bundle = build_dataset_bundle(corpus, quants, 123, 4);

    CHECK(!bundle.train.empty());
    CHECK(!bundle.val.empty());
    CHECK(!bundle.test.empty());
    bundle.assert_no_leakage();

    CHECK(bundle.vocabs.word.types()[0] == std::string(kUnkToken));
    CHECK(bundle.vocabs.word.size() > 1);
    CHECK(bundle.vocabs.pos.size() > 1);

    std::string path = "/tmp/karmanet_test_bundle.json";
    save_bundle(bundle, path);
    auto loaded = load_bundle(path);
    std::remove(path.c_str());

    CHECK(loaded.train.size() == bundle.train.size());
    CHECK(loaded.val.size() == bundle.val.size());
    CHECK(loaded.test.size() == bundle.test.size());
    CHECK(loaded.vocabs.word.types() == bundle.vocabs.word.types());
    CHECK(loaded.quantizers.at("synth").cuts == bundle.quantizers.at("synth").cuts);
    for (std::size_t i = 0; i < bundle.train.size(); ++i) {
        CHECK(loaded.train[i].comment_id == bundle.train[i].comment_id);
        CHECK(loaded.train[i].label == bundle.train[i].label);
        for (int d = 0; d < kNumContextFeatures; ++d)
            CHECK(loaded.train[i].features.normalized[d] ==
                  bundle.train[i].features.normalized[d]);
        CHECK(loaded.train[i].sentences.size() == bundle.train[i].sentences.size());
    }
}

TEST_CASE("bundle rejects duplicated comments across splits") {
    GenConfig gcfg;
    gcfg.seed = 32;
    gcfg.threads = 12;
    gcfg.mean_comments = 6.0;
    auto corpus = generate(gcfg);
    auto bundle = build_dataset_bundle(corpus, fit_quantizers(corpus), 1, 4);
    REQUIRE(!bundle.test.empty());
    bundle.val.push_back(bundle.test.front());  // leak one comment
    CHECK_THROWS_AS(bundle.assert_no_leakage(), std::logic_error);
}

TEST_CASE("training split is subsampled while test keeps its distribution") {
    GenConfig gcfg;
    gcfg.seed = 33;
    gcfg.threads = 120;
    gcfg.mean_comments = 25.0;
    auto corpus = generate(gcfg);
    auto bundle = build_dataset_bundle(corpus, fit_quantizers(corpus), 9, 4);

    std::array<std::int64_t, 8> train_counts{}, test_counts{};
    for (const auto& ex : bundle.train) ++train_counts[ex.label];
    for (const auto& ex : bundle.test) ++test_counts[ex.label];

    // below-pivot levels were cut down to the pivot count
    for (int l = 0; l < 4; ++l) CHECK(train_counts[l] <= train_counts[4]);
    // the raw test distribution keeps its heavy head
    CHECK(test_counts[0] > test_counts[4]);

    // normalizer was fitted on the subsampled training set
    for (int d = 0; d < kNumContextFeatures; ++d) {
        double m = 0.0;
        for (const auto& ex : bundle.train) m += ex.features.normalized[d];
        m /= static_cast<double>(bundle.train.size());
        CHECK(std::fabs(m) < 1e-9);
    }
}

TEST_CASE("normalized features are recomputed at load time") {
    GenConfig gcfg;
    gcfg.seed = 34;
    gcfg.threads = 12;
    gcfg.mean_comments = 8.0;
    auto corpus = generate(gcfg);
    auto bundle = build_dataset_bundle(corpus, fit_quantizers(corpus), 2, 4);
    auto j = bundle_to_json(bundle);
    auto back = bundle_from_json(j);
    for (std::size_t i = 0; i < bundle.test.size(); ++i)
        for (int d = 0; d < kNumContextFeatures; ++d)
            CHECK(back.test[i].features.normalized[d] ==
                  Catch::Approx(bundle.test[i].features.normalized[d]).margin(1e-15));
}
