#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>

#include "karmanet/quantizer.hpp"
#include "karmanet/rng.hpp"

using namespace karmanet;

namespace {

// Independent reference: literal recursive-median labelling over multisets.
// Returns the level assigned to every input score, in input order.
std::vector<int> oracle_levels(const std::vector<std::int64_t>& scores) {
    std::vector<int> levels(scores.size(), -1);
    std::vector<std::size_t> remaining;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] <= 1)
            levels[i] = 0;
        else
            remaining.push_back(i);
    }
    int level = 1;
    while (level <= 6 && remaining.size() >= 2) {
        std::vector<std::int64_t> vals;
        for (auto i : remaining) vals.push_back(scores[i]);
        std::sort(vals.begin(), vals.end());
        double med = vals.size() % 2 == 1
                         ? static_cast<double>(vals[vals.size() / 2])
                         : (static_cast<double>(vals[vals.size() / 2 - 1]) +
                            static_cast<double>(vals[vals.size() / 2])) /
                               2.0;
        std::vector<std::size_t> below, above;
        for (auto i : remaining)
            (static_cast<double>(scores[i]) < med ? below : above).push_back(i);
        if (below.empty()) break;
        for (auto i : below) levels[i] = level;
        remaining = above;
        ++level;
    }
    for (auto i : remaining) levels[i] = level;
    return levels;
}

}  // namespace

TEST_CASE("degenerate corpus: everything at or below 1") {
    auto q = fit_quantizer({1, 1, 0, -3, 1});
    CHECK(q.cuts.empty());
    CHECK(q.quantize(1) == 0);
    CHECK(q.quantize(-5) == 0);
    CHECK(q.quantize(100) == 1);  // above every cut -> next level
}

TEST_CASE("worked example from eight scores") {
    std::vector<std::int64_t> scores{2, 3, 4, 5, 6, 7, 8, 9};
    auto q = fit_quantizer(scores);
    REQUIRE(q.cuts.size() == 3);
    CHECK(q.cuts[0] == Catch::Approx(5.5));
    CHECK(q.cuts[1] == Catch::Approx(7.5));
    CHECK(q.cuts[2] == Catch::Approx(8.5));
    CHECK(q.quantize(2) == 1);
    CHECK(q.quantize(5) == 1);
    CHECK(q.quantize(6) == 2);
    CHECK(q.quantize(7) == 2);
    CHECK(q.quantize(8) == 3);
    CHECK(q.quantize(9) == 4);  // remainder takes the next level
}

TEST_CASE("boundary karma values") {
    auto q = fit_quantizer({2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(q.quantize(1) == 0);
    CHECK(q.quantize(0) == 0);
    CHECK(q.quantize(-5) == 0);
    CHECK_THROWS_AS(fit_quantizer({}), std::invalid_argument);
}

TEST_CASE("fit+quantize matches the recursive-median oracle on Zipf-like scores") {
    Rng rng(2024);
    std::vector<std::int64_t> scores;
    for (int i = 0; i < 10000; ++i) {
        // heavy tail via exp of an exponential, floored at 1
        double v = std::exp(rng.exponential(1.7));
        scores.push_back(std::max<std::int64_t>(1, static_cast<std::int64_t>(v)));
    }
    auto q = fit_quantizer(scores);
    auto oracle = oracle_levels(scores);
    for (std::size_t i = 0; i < scores.size(); ++i)
        REQUIRE(q.quantize(scores[i]) == oracle[i]);

    // populations roughly halve at each level >= 1
    std::vector<int> mine;
    for (auto s : scores) mine.push_back(q.quantize(s));
    auto counts = level_distribution(mine);
    for (int l = 1; l + 1 < kNumLevels; ++l) {
        if (counts[l + 1] == 0) break;
        CHECK(counts[l] >= counts[l + 1]);  // monotone tail
    }

    // monotonicity over adjacent sorted scores
    std::sort(scores.begin(), scores.end());
    for (std::size_t i = 1; i < scores.size(); ++i)
        REQUIRE(q.quantize(scores[i - 1]) <= q.quantize(scores[i]));
}

TEST_CASE("ties at the median go to the upper group") {
    // {2,3,3}: median 3, only 2 falls below; {3,3} stalls and takes level 2
    auto q = fit_quantizer({2, 3, 3});
    REQUIRE(q.cuts.size() == 1);
    CHECK(q.cuts[0] == Catch::Approx(3.0));
    CHECK(q.quantize(2) == 1);
    CHECK(q.quantize(3) == 2);
}

TEST_CASE("level_distribution histograms") {
    CHECK(level_distribution({}) == std::array<std::int64_t, 8>{0, 0, 0, 0, 0, 0, 0, 0});
    auto c = level_distribution({0, 0, 7});
    CHECK(c == std::array<std::int64_t, 8>{2, 0, 0, 0, 0, 0, 0, 1});
    CHECK_THROWS_AS(level_distribution({9}), std::invalid_argument);
}
