#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "karmanet/evaluation.hpp"
#include "karmanet/model.hpp"

namespace karmanet {

// shortest round-trip decimal form, so re-exports are byte identical
inline std::string csv_num(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

enum class ModeGroup { kLow, kMedium, kHigh };

inline std::string group_name(ModeGroup g) {
    switch (g) {
        case ModeGroup::kLow: return "low";
        case ModeGroup::kMedium: return "medium";
        case ModeGroup::kHigh: return "high";
    }
    return "low";
}

// Which basis receives the highest attention weight, per comment.
// Lowest index wins ties.
template <typename Real>
std::vector<int> assign_modes(const ModelParams<Real>& params,
                              const std::vector<LabeledExample>& examples) {
    if (params.cfg.encoder != ContextEncoder::kLatentModes)
        throw std::invalid_argument("mode assignment needs a latent-modes context encoder");
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        auto t = predict(params, ex);
        int best = 0;
        for (int k = 1; k < params.cfg.K; ++k)
            if (t.a[k] > t.a[best]) best = k;
        out.push_back(best);
    }
    return out;
}

inline std::vector<std::array<std::int64_t, kNumLevels>> mode_histograms(
    const std::vector<int>& assignments, const std::vector<LabeledExample>& examples, int K) {
    std::vector<std::array<std::int64_t, kNumLevels>> hist(
        K, std::array<std::int64_t, kNumLevels>{});
    for (std::size_t i = 0; i < examples.size(); ++i)
        ++hist[assignments[i]][examples[i].label];
    return hist;
}

// Group by the dominating level of the histogram (argmax, lowest level on
// ties): levels 0-1 are low, 6-7 high, everything else medium.
inline std::vector<ModeGroup> group_modes(
    const std::vector<std::array<std::int64_t, kNumLevels>>& histograms) {
    std::vector<ModeGroup> out;
    out.reserve(histograms.size());
    for (const auto& h : histograms) {
        int dom = 0;
        for (int l = 1; l < kNumLevels; ++l)
            if (h[l] > h[dom]) dom = l;
        out.push_back(dom <= 1 ? ModeGroup::kLow
                               : (dom >= 6 ? ModeGroup::kHigh : ModeGroup::kMedium));
    }
    return out;
}

// arithmetic means of the raw (un-normalized) features per mode
inline std::vector<std::array<double, kNumContextFeatures>> mode_feature_means(
    const std::vector<int>& assignments, const std::vector<LabeledExample>& examples, int K) {
    std::vector<std::array<double, kNumContextFeatures>> means(
        K, std::array<double, kNumContextFeatures>{});
    std::vector<std::int64_t> counts(K, 0);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        ++counts[assignments[i]];
        for (int d = 0; d < kNumContextFeatures; ++d)
            means[assignments[i]][d] += examples[i].features.raw[d];
    }
    for (int k = 0; k < K; ++k)
        if (counts[k] > 0)
            for (int d = 0; d < kNumContextFeatures; ++d)
                means[k][d] /= static_cast<double>(counts[k]);
    return means;
}

struct GateReport {
    std::map<std::string, double> group_mean;  // group -> mean gate value
    std::map<std::string, double> relative;    // scaled by the low-group mean
};

template <typename Real>
GateReport gate_report(const ModelParams<Real>& params,
                       const std::vector<LabeledExample>& examples,
                       const std::vector<int>& assignments,
                       const std::vector<ModeGroup>& groups) {
    if (params.cfg.text_mode != TextMode::kGated)
        throw std::invalid_argument("gate report needs a gated model");
    std::map<std::string, double> sum;
    std::map<std::string, std::int64_t> count;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        auto t = predict(params, examples[i]);
        std::string g = group_name(groups[assignments[i]]);
        sum[g] += static_cast<double>(t.g);
        ++count[g];
    }
    if (!count.count("low") || count["low"] == 0)
        throw std::runtime_error(
            "gate report: the low-endorsement mode group is empty on this corpus");
    GateReport rep;
    for (const auto& [g, s] : sum) rep.group_mean[g] = s / static_cast<double>(count[g]);
    double low = rep.group_mean["low"];
    for (const auto& [g, m] : rep.group_mean) rep.relative[g] = m / low;
    return rep;
}

// Everything the analyses and exports need about one trained latent model
// on one example set.
struct ModeClusterReport {
    int K = 0;
    std::vector<int> assignment;  // per example
    std::vector<std::array<std::int64_t, kNumLevels>> histograms;
    std::vector<ModeGroup> groups;
    std::vector<std::array<double, kNumContextFeatures>> feature_means;
    std::vector<std::int64_t> counts;
    std::vector<double> gates;  // per example; 1.0 for ungated models
    std::vector<int> display_order;  // low..high, by sample count inside a group
};

template <typename Real>
ModeClusterReport build_mode_report(const ModelParams<Real>& params,
                                    const std::vector<LabeledExample>& examples) {
    ModeClusterReport rep;
    rep.K = params.cfg.K;
    rep.assignment = assign_modes(params, examples);
    rep.histograms = mode_histograms(rep.assignment, examples, rep.K);
    rep.groups = group_modes(rep.histograms);
    rep.feature_means = mode_feature_means(rep.assignment, examples, rep.K);
    rep.counts.assign(rep.K, 0);
    for (int a : rep.assignment) ++rep.counts[a];
    rep.gates.reserve(examples.size());
    for (const auto& ex : examples)
        rep.gates.push_back(static_cast<double>(predict(params, ex).g));

    rep.display_order.resize(rep.K);
    for (int k = 0; k < rep.K; ++k) rep.display_order[k] = k;
    std::sort(rep.display_order.begin(), rep.display_order.end(), [&](int a, int b) {
        if (rep.groups[a] != rep.groups[b])
            return static_cast<int>(rep.groups[a]) < static_cast<int>(rep.groups[b]);
        if (rep.counts[a] != rep.counts[b]) return rep.counts[a] > rep.counts[b];
        return a < b;
    });
    return rep;
}

namespace detail {

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
}

}  // namespace detail

// Writes clusters.csv, mode_feature_means.csv, label_distributions.csv and,
// when a gate report is given, gate_report.csv. Returns the paths written.
inline std::vector<std::string> export_cluster_csv(const ModeClusterReport& rep,
                                                   const std::vector<LabeledExample>& examples,
                                                   const std::optional<GateReport>& gates,
                                                   const std::string& out_dir) {
    std::vector<std::string> written;

    std::string clusters =
        "comment_id,thread_id,mode,group,is_op,n_children,subtree_size,subtree_height,depth,"
        "hours_since_root,hours_since_parent,label,gate\n";
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        int k = rep.assignment[i];
        clusters += ex.comment_id + ',' + ex.thread_id + ',' + std::to_string(k) + ',' +
                    group_name(rep.groups[k]);
        for (int d = 0; d < kNumContextFeatures; ++d)
            clusters += ',' + csv_num(ex.features.raw[d]);
        clusters += ',' + std::to_string(ex.label) + ',' + csv_num(rep.gates[i]) + '\n';
    }
    written.push_back(out_dir + "/clusters.csv");
    detail::write_file(written.back(), clusters);

    std::string means =
        "mode,group,count,is_op,n_children,subtree_size,subtree_height,depth,hours_since_root,"
        "hours_since_parent\n";
    for (int k : rep.display_order) {
        means += std::to_string(k) + ',' + group_name(rep.groups[k]) + ',' +
                 std::to_string(rep.counts[k]);
        for (int d = 0; d < kNumContextFeatures; ++d) means += ',' + csv_num(rep.feature_means[k][d]);
        means += '\n';
    }
    written.push_back(out_dir + "/mode_feature_means.csv");
    detail::write_file(written.back(), means);

    std::string dist = "mode,group,count";
    for (int l = 0; l < kNumLevels; ++l) dist += ",level" + std::to_string(l);
    dist += '\n';
    for (int k : rep.display_order) {
        dist += std::to_string(k) + ',' + group_name(rep.groups[k]) + ',' +
                std::to_string(rep.counts[k]);
        for (int l = 0; l < kNumLevels; ++l) dist += ',' + std::to_string(rep.histograms[k][l]);
        dist += '\n';
    }
    written.push_back(out_dir + "/label_distributions.csv");
    detail::write_file(written.back(), dist);

    if (gates) {
        std::string gr = "group,mean_gate,relative\n";
        for (const char* g : {"low", "medium", "high"}) {
            auto it = gates->group_mean.find(g);
            if (it == gates->group_mean.end()) continue;
            gr += std::string(g) + ',' + csv_num(it->second) + ',' +
                  csv_num(gates->relative.at(g)) + '\n';
        }
        written.push_back(out_dir + "/gate_report.csv");
        detail::write_file(written.back(), gr);
    }
    return written;
}

}  // namespace karmanet
