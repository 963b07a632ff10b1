#pragma once

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "karmanet/thread_model.hpp"

namespace karmanet {

inline constexpr int kNumContextFeatures = 7;

// Order: is_op, n_children, subtree_size, subtree_height, depth,
// hours_since_root, hours_since_parent.
struct ContextFeatureVector {
    std::array<double, kNumContextFeatures> raw{};
    std::array<double, kNumContextFeatures> normalized{};
};

inline constexpr std::array<const char*, kNumContextFeatures> kContextFeatureNames = {
    "is_op",          "n_children",       "subtree_size",      "subtree_height",
    "depth",          "hours_since_root", "hours_since_parent"};

enum ContextFeature {
    kIsOp = 0,
    kNChildren = 1,
    kSubtreeSize = 2,
    kSubtreeHeight = 3,
    kDepth = 4,
    kHoursSinceRoot = 5,
    kHoursSinceParent = 6,
};

// Raw features for every comment of a thread. Times are converted from
// seconds to hours here; the root post sits at time 0, and for top-level
// comments the root post acts as the parent.
inline std::map<std::string, ContextFeatureVector> extract_all(const Thread& t) {
    auto stats = subtree_stats(t);
    ThreadIndex ix = index_thread(t);
    std::map<std::string, ContextFeatureVector> out;
    for (std::size_t i = 0; i < t.comments.size(); ++i) {
        const Comment& c = t.comments[i];
        const SubtreeStats& st = stats.at(c.id);
        double parent_time_s = ix.parent[i] >= 0 ? t.comments[ix.parent[i]].time_s : 0.0;
        ContextFeatureVector f;
        f.raw[kIsOp] = c.author == t.root_author ? 1.0 : 0.0;
        f.raw[kNChildren] = st.n_children;
        f.raw[kSubtreeSize] = st.subtree_size;
        f.raw[kSubtreeHeight] = st.subtree_height;
        f.raw[kDepth] = st.depth;
        f.raw[kHoursSinceRoot] = c.time_s / 3600.0;
        f.raw[kHoursSinceParent] = (c.time_s - parent_time_s) / 3600.0;
        out.emplace(c.id, f);
    }
    return out;
}

inline ContextFeatureVector extract(const Thread& t, const std::string& comment_id) {
    auto all = extract_all(t);
    auto it = all.find(comment_id);
    if (it == all.end())
        throw std::invalid_argument("unknown comment id '" + comment_id + "'");
    return it->second;
}

// Per-dimension mean and population (1/N) standard deviation. A constant
// dimension gets std 1.0 so normalization degrades to a shift.
struct Normalizer {
    std::array<double, kNumContextFeatures> mean{};
    std::array<double, kNumContextFeatures> std{};
};

inline Normalizer fit_normalizer(const std::vector<ContextFeatureVector>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("fit_normalizer needs at least 2 samples");
    Normalizer n;
    const double cnt = static_cast<double>(samples.size());
    for (int d = 0; d < kNumContextFeatures; ++d) {
        double s = 0.0;
        for (const auto& f : samples) s += f.raw[d];
        n.mean[d] = s / cnt;
        double ss = 0.0;
        for (const auto& f : samples) {
            double dv = f.raw[d] - n.mean[d];
            ss += dv * dv;
        }
        double sd = std::sqrt(ss / cnt);
        n.std[d] = sd > 0.0 ? sd : 1.0;
    }
    return n;
}

inline ContextFeatureVector apply(const Normalizer& n, ContextFeatureVector f) {
    for (int d = 0; d < kNumContextFeatures; ++d)
        f.normalized[d] = (f.raw[d] - n.mean[d]) / n.std[d];
    return f;
}

}  // namespace karmanet
