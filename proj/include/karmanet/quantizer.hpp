#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace karmanet {

inline constexpr int kNumLevels = 8;  // levels 0..7

// Head-tail break thresholds: cuts[j-1] is the median that separates level j
// from the levels above it. At most 6 cuts (levels 1..6); whatever remains
// after the last cut is the top level.
struct QuantizerThresholds {
    std::vector<double> cuts;

    int quantize(std::int64_t karma) const {
        if (karma <= 1) return 0;
        for (std::size_t j = 0; j < cuts.size(); ++j)
            if (static_cast<double>(karma) < cuts[j]) return static_cast<int>(j) + 1;
        return static_cast<int>(cuts.size()) + 1;
    }
};

namespace detail {

// median of a sorted range; even count averages the two middle values
inline double sorted_median(const std::vector<std::int64_t>& v) {
    std::size_t n = v.size();
    if (n % 2 == 1) return static_cast<double>(v[n / 2]);
    return (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
}

}  // namespace detail

// Recursive-median fit. Level 0 is karma <= 1. Each step splits the
// remaining scores at their median: strictly-below goes to the next level,
// ties stay in the upper part. Stops early when fewer than 2 scores remain
// or no score falls strictly below the median (no progress possible).
inline QuantizerThresholds fit_quantizer(const std::vector<std::int64_t>& karma_scores) {
    if (karma_scores.empty()) throw std::invalid_argument("fit_quantizer: empty input");
    std::vector<std::int64_t> rest;
    rest.reserve(karma_scores.size());
    for (auto k : karma_scores)
        if (k > 1) rest.push_back(k);
    std::sort(rest.begin(), rest.end());

    QuantizerThresholds q;
    for (int level = 1; level <= 6; ++level) {
        if (rest.size() < 2) break;
        double m = detail::sorted_median(rest);
        auto split = std::lower_bound(rest.begin(), rest.end(), m,
                                      [](std::int64_t k, double med) {
                                          return static_cast<double>(k) < med;
                                      });
        if (split == rest.begin()) break;  // nothing strictly below the median
        q.cuts.push_back(m);
        rest.erase(rest.begin(), split);
    }
    return q;
}

inline std::array<std::int64_t, kNumLevels> level_distribution(const std::vector<int>& levels) {
    std::array<std::int64_t, kNumLevels> counts{};
    for (int l : levels) {
        if (l < 0 || l >= kNumLevels) throw std::invalid_argument("level out of range");
        ++counts[l];
    }
    return counts;
}

}  // namespace karmanet
